#include "hybridct/design_eval.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "hybridct/errors.hpp"
#include "hybridct/parallel.hpp"
#include "hybridct/quadrature.hpp"
#include "hybridct/special_functions.hpp"

namespace hybridct {

DecisionBoundary boundary(const BetaMixture& prior_c, int n_t, int n_c,
                          double gamma) {
  prior_c.validate();
  if (n_t < 1 || n_c < 0 || !(gamma > 0.5 && gamma < 1.0)) {
    throw std::invalid_argument("boundary: invalid design");
  }
  DecisionBoundary out;
  out.n_t = n_t;
  out.n_c = n_c;
  out.gamma = gamma;
  out.d1.assign(n_c + 1, -1);
  int d = -1;
  for (int y_c = 0; y_c <= n_c; ++y_c) {
    const BetaMixture post = posterior_update(prior_c, y_c, n_c);
    auto prob = [&](int y_t) {
      return mixture_superiority(
          BetaParams{1.0 + y_t, 1.0 + n_t - y_t}, post);
    };
    // The boundary is usually nondecreasing in y_c; the pointer re-descends
    // when it is not, so only monotonicity in y_t is relied on.
    while (d >= 0 && prob(d) > gamma) --d;
    while (d < n_t && prob(d + 1) <= gamma) ++d;
    out.d1[y_c] = d;
  }
  return out;
}

double conditional_success_probability(const DecisionBoundary& b, double pi_t,
                                       double pi_c) {
  const std::vector<double> pmf_c = binom_pmf_table(b.n_c, pi_c);
  const std::vector<double> pmf_t = binom_pmf_table(b.n_t, pi_t);
  const std::vector<double> sf_t = binom_sf_table(pmf_t);
  double total = 0.0;
  for (int y_c = 0; y_c <= b.n_c; ++y_c) {
    total += pmf_c[y_c] * sf_t[b.d1[y_c] + 1];
  }
  return std::min(total, 1.0);
}

OCCurve conditional_oc(const BetaMixture& prior_c, int n_t, int n_c,
                       double gamma, const std::vector<double>& pi_grid,
                       double rd_alt) {
  for (std::size_t i = 1; i < pi_grid.size(); ++i) {
    if (!(pi_grid[i] > pi_grid[i - 1])) {
      throw std::invalid_argument("conditional_oc: pi_grid must be strictly increasing");
    }
  }
  for (double p : pi_grid) {
    if (!(p > 0.0 && p < 1.0) || !(p + rd_alt < 1.0)) {
      throw std::invalid_argument("conditional_oc: grid point or alternative out of (0,1)");
    }
  }
  const DecisionBoundary b = boundary(prior_c, n_t, n_c, gamma);
  OCCurve curve;
  curve.pi_grid = pi_grid;
  curve.t1e.resize(pi_grid.size());
  curve.power.resize(pi_grid.size());
  for (std::size_t i = 0; i < pi_grid.size(); ++i) {
    curve.t1e[i] = conditional_success_probability(b, pi_grid[i], pi_grid[i]);
    curve.power[i] =
        conditional_success_probability(b, pi_grid[i] + rd_alt, pi_grid[i]);
  }
  return curve;
}

namespace {

double pos_with_nodes(const DecisionBoundary& b, const BetaMixture& design_t,
                      const BetaMixture& design_c, int nodes) {
  const QuadRule& rule = gauss_legendre01(nodes);
  const int n = static_cast<int>(rule.nodes.size());
  // sf_by_node[i][y_c] = P(Y_t > d1(y_c)) at treatment rate node i.
  std::vector<double> total_by_node(n, 0.0);
  std::vector<double> pmf_c, pmf_t, sf_t;
  std::vector<double> sf_at_boundary(static_cast<std::size_t>(n) * (b.n_c + 1));
  for (int i = 0; i < n; ++i) {
    pmf_t = binom_pmf_table(b.n_t, rule.nodes[i]);
    sf_t = binom_sf_table(pmf_t);
    for (int y_c = 0; y_c <= b.n_c; ++y_c) {
      sf_at_boundary[static_cast<std::size_t>(i) * (b.n_c + 1) + y_c] =
          sf_t[b.d1[y_c] + 1];
    }
  }
  double pos = 0.0;
  for (int j = 0; j < n; ++j) {
    pmf_c = binom_pmf_table(b.n_c, rule.nodes[j]);
    const double fc = design_c.pdf(rule.nodes[j]);
    if (fc <= 0.0) continue;
    for (int i = 0; i < n; ++i) {
      double cp = 0.0;
      const double* sf = &sf_at_boundary[static_cast<std::size_t>(i) * (b.n_c + 1)];
      for (int y_c = 0; y_c <= b.n_c; ++y_c) cp += pmf_c[y_c] * sf[y_c];
      pos += rule.weights[i] * rule.weights[j] * cp *
             design_t.pdf(rule.nodes[i]) * fc;
    }
  }
  return pos;
}

}  // namespace

double probability_of_success(const BetaMixture& analysis_prior_c,
                              const BetaMixture& design_prior_t, int n_t,
                              int n_c, double gamma,
                              const BetaMixture* design_prior_c, int nodes,
                              double abs_tol) {
  const BetaMixture& dc = design_prior_c ? *design_prior_c : analysis_prior_c;
  design_prior_t.validate();
  dc.validate();
  const DecisionBoundary b = boundary(analysis_prior_c, n_t, n_c, gamma);
  double coarse = pos_with_nodes(b, design_prior_t, dc, nodes / 2);
  double fine = pos_with_nodes(b, design_prior_t, dc, nodes);
  if (std::fabs(fine - coarse) > abs_tol) {
    coarse = fine;
    fine = pos_with_nodes(b, design_prior_t, dc, nodes * 2);
    if (std::fabs(fine - coarse) > abs_tol) {
      throw NumericError("probability_of_success: quadrature did not settle");
    }
  }
  return fine;
}

WorstCaseSelection worst_case_selection(const HistoricalPool& pool,
                                        const WorstCaseSettings& settings,
                                        const std::vector<double>& pi_grid) {
  pool.validate();
  const int k = static_cast<int>(pool.size());
  if (k > 20) {
    throw std::invalid_argument("worst_case_selection: pool too large to enumerate");
  }
  const std::uint32_t n_masks = 1u << k;
  std::vector<std::vector<double>> curves(n_masks);
  parallel_for(n_masks, settings.threads, [&](std::size_t m) {
    HistoricalPool subset;
    for (int i = 0; i < k; ++i) {
      if (m >> i & 1u) subset.trials.push_back(pool.trials[i]);
    }
    const BetaMixture prior =
        control_prior_for_pool(subset, settings.w_r, settings.hyper,
                               settings.fit_options, nullptr);
    const DecisionBoundary b =
        boundary(prior, settings.n_t, settings.n_c, settings.gamma);
    std::vector<double> t1e(pi_grid.size());
    for (std::size_t g = 0; g < pi_grid.size(); ++g) {
      t1e[g] = conditional_success_probability(b, pi_grid[g], pi_grid[g]);
    }
    curves[m] = std::move(t1e);
  });

  WorstCaseSelection out;
  out.pi_grid = pi_grid;
  out.t1e.assign(pi_grid.size(), -1.0);
  out.mask.assign(pi_grid.size(), 0);
  for (std::uint32_t m = 0; m < n_masks; ++m) {
    for (std::size_t g = 0; g < pi_grid.size(); ++g) {
      if (curves[m][g] > out.t1e[g]) {
        out.t1e[g] = curves[m][g];
        out.mask[g] = m;
      }
    }
  }
  return out;
}

}  // namespace hybridct
