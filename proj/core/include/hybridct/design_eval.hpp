#pragma once

#include <cstdint>
#include <vector>

#include "hybridct/beta_mixture.hpp"

namespace hybridct {

// Exact decision boundary of the posterior-superiority rule: d1[y_c] is the
// largest treatment responder count that does NOT clear the threshold given
// y_c control responders (-1 when every y_t succeeds). Success <=> y_t > d1.
struct DecisionBoundary {
  int n_t = 0;
  int n_c = 0;
  double gamma = 0.975;
  std::vector<int> d1;  // size n_c + 1, values in [-1, n_t]

  bool success(int y_t, int y_c) const { return y_t > d1[y_c]; }
};

// Computes the boundary for a Beta(1,1) treatment prior against a mixture
// control prior. Exploits monotonicity of the superiority probability in y_t
// with an amortized two-pointer sweep over y_c.
DecisionBoundary boundary(const BetaMixture& prior_c, int n_t, int n_c,
                          double gamma);

// Exact success probability at fixed true rates: double binomial sum over
// the boundary.
double conditional_success_probability(const DecisionBoundary& b, double pi_t,
                                       double pi_c);

struct OCCurve {
  std::vector<double> pi_grid;
  std::vector<double> t1e;    // CP(pi, pi)
  std::vector<double> power;  // CP(pi + rd_alt, pi)
};

OCCurve conditional_oc(const BetaMixture& prior_c, int n_t, int n_c,
                       double gamma, const std::vector<double>& pi_grid,
                       double rd_alt);

// Probability of success (assurance): conditional success probability
// averaged over design priors for the two true rates via tensor-product
// Gauss-Legendre. The analysis prior defines the boundary; design_prior_c
// defaults to the analysis prior when null. Node-doubling must agree within
// abs_tol or a NumericError is thrown.
double probability_of_success(const BetaMixture& analysis_prior_c,
                              const BetaMixture& design_prior_t, int n_t,
                              int n_c, double gamma,
                              const BetaMixture* design_prior_c = nullptr,
                              int nodes = 128, double abs_tol = 1e-4);

struct WorstCaseSelection {
  std::vector<double> pi_grid;
  std::vector<double> t1e;              // envelope, max over subsets
  std::vector<std::uint32_t> mask;      // argmax subset per grid point
};

struct WorstCaseSettings {
  int n_t = 24;
  int n_c = 6;
  double gamma = 0.975;
  double w_r = 0.2;
  HierarchicalHyperPrior hyper;
  MapFitOptions fit_options;
  int threads = 0;
};

// Enumerates all 2^k subsets of the pool (analysis prior built with the
// degenerate-selection fallbacks) and returns, per grid point, the subset
// maximizing the conditional type I error along with the envelope curve.
WorstCaseSelection worst_case_selection(const HistoricalPool& pool,
                                        const WorstCaseSettings& settings,
                                        const std::vector<double>& pi_grid);

}  // namespace hybridct
