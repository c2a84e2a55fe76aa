#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hybridct/exact_stats.hpp"

namespace hybridct {

struct HistoricalTrial {
  int index = 1;  // chronological position, 1-based
  int responders = 0;
  int size = 1;

  double rate() const { return static_cast<double>(responders) / size; }
};

struct HistoricalPool {
  std::vector<HistoricalTrial> trials;

  void validate() const;
  std::size_t size() const { return trials.size(); }
  bool empty() const { return trials.empty(); }
  int total_responders() const;
  int total_size() const;
};

// Weighted Beta mixture; holds MAP priors, robust MAP priors and posteriors.
struct BetaMixture {
  std::vector<double> weights;
  std::vector<BetaParams> components;

  void validate() const;
  std::size_t size() const { return components.size(); }
  double mean() const;
  double variance() const;
  double pdf(double x) const;

  static BetaMixture single(double a, double b) {
    return BetaMixture{{1.0}, {BetaParams{a, b}}};
  }
  static BetaMixture vague() { return single(1.0, 1.0); }
};

struct HierarchicalHyperPrior {
  double mu_mean = 0.0;   // logit scale
  double mu_sd = 2.0;     // sd of the normal prior on mu
  double tau_scale = 1.0; // Half-Normal scale for tau

  void validate() const;
};

// Controls for the hierarchical-model fit. The default is the accurate
// refined grid; simulation callers use the coarse preset, which locates the
// posterior mass on a first pass and re-grids once around it.
struct MapFitOptions {
  int mu_cells = 200;
  int tau_cells = 200;
  bool refine = true;        // double the grid until mean/variance settle
  double refine_tol = 1e-4;
  int max_grid = 1600;
  bool zoom = false;         // two-pass mass-locating grid (coarse preset)
  int pi_cells = 512;
  int em_draws = 20000;
  int max_components = 4;
  double em_tol = 1e-7;      // mean log-likelihood change
  int em_max_iter = 10000;
  double component_floor = 1e-3;

  static MapFitOptions coarse() {
    MapFitOptions o;
    o.mu_cells = 100;
    o.tau_cells = 100;
    o.refine = false;
    o.zoom = true;
    return o;
  }
};

struct MapFitDiagnostics {
  int grid_mu = 0;
  int grid_tau = 0;
  int refinements = 0;
  int em_iterations = 0;
  int n_components = 0;
  double aic = 0.0;
  double tv_distance = 0.0;
  double predictive_mean = 0.0;
  double predictive_var = 0.0;
};

// Fits the MAP prior for a new control arm: hierarchical logit-normal model
// evaluated by Gauss-Hermite + grid quadrature, predictive density mapped to
// the probability scale, then approximated by a Beta mixture via EM with the
// component count chosen by AIC from {1, ..., max_components}.
BetaMixture fit_map_prior(const HistoricalPool& pool,
                          const HierarchicalHyperPrior& hyper,
                          const MapFitOptions& options = {},
                          MapFitDiagnostics* diagnostics = nullptr);

// Prepends a Beta(1,1) component at weight w_r, rescaling the rest.
BetaMixture robustify(const BetaMixture& map, double w_r);

// Two-component robust mixture prior for a single retained trial.
BetaMixture robust_single(const HistoricalTrial& trial, double w_r);

// Conjugate update with y responders out of n; weights are reweighted by the
// component-wise marginal likelihoods.
BetaMixture posterior_update(const BetaMixture& prior, int y, int n);

// Effective sample size by the expected local-information-ratio: the prior
// expectation of -d^2/dpi^2 log p(pi) divided by the single-observation
// binomial information 1/(pi(1-pi)). Exactly a+b for Beta(a,b) with a,b > 1;
// identically zero for the flat Beta(1,1).
double ess_elir(const BetaMixture& prior);

// Pr[X > Y] with X ~ Beta(x) and Y distributed as the mixture.
double mixture_superiority(const BetaParams& x, const BetaMixture& y);

// Summary of the quadrature predictive, computed without the EM step. Used
// by the simulator's startup self-check.
struct MapPredictiveSummary {
  double mean = 0.0;
  double var = 0.0;
};
MapPredictiveSummary map_predictive_summary(const HistoricalPool& pool,
                                            const HierarchicalHyperPrior& hyper,
                                            const MapFitOptions& options);

// Read-mostly cache of fitted MAP mixtures keyed by (pool counts, hyper,
// grid settings). Safe for concurrent lookups and insertions.
class MapFitCache {
 public:
  BetaMixture fit(const HistoricalPool& pool, const HierarchicalHyperPrior& hyper,
                  const MapFitOptions& options);

 private:
  struct Impl;
  std::shared_ptr<Impl> impl_ = make_impl();
  static std::shared_ptr<Impl> make_impl();
};

// Control prior for a selected pool with the degenerate-selection fallbacks:
// >= 2 trials -> robustified MAP mixture, exactly 1 -> two-component robust
// mixture prior, 0 -> Beta(1,1).
BetaMixture control_prior_for_pool(const HistoricalPool& selected, double w_r,
                                   const HierarchicalHyperPrior& hyper,
                                   const MapFitOptions& options,
                                   MapFitCache* cache = nullptr);

// Loads a pool from CSV with header `study,responders,size`; file order is
// the chronological order.
HistoricalPool load_pool_csv(const std::string& path);

}  // namespace hybridct
