#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "hybridct/beta_mixture.hpp"
#include "hybridct/errors.hpp"
#include "hybridct/quadrature.hpp"
#include "hybridct/special_functions.hpp"

namespace hybridct {

namespace {

constexpr double kSqrt2 = 1.41421356237309504880;
constexpr double kInvSqrtPi = 0.56418958354775628695;

double softplus(double z) { return z > 30.0 ? z : std::log1p(std::exp(z)); }

struct GriddedPredictive {
  std::vector<double> x;    // pi-grid cell midpoints
  std::vector<double> pdf;  // density, normalized to integrate to 1
  double cell = 0.0;
  double mean = 0.0;
  double var = 0.0;
};

struct Box {
  double mu_lo, mu_hi, tau_lo, tau_hi;
};

struct PosteriorGrid {
  std::vector<double> mu, tau;   // cell midpoints
  std::vector<double> weight;    // normalized posterior mass, mu-major
};

// Tabulated per-trial binomial log likelihood as a function of the log-odds.
// The function is exactly linear outside (-30, 30), and piecewise-linear
// interpolation on a 0.0015 grid keeps the error below ~6e-6 for the trial
// sizes used here. Built once per fit and shared across all grid passes.
class TrialLogLik {
 public:
  TrialLogLik(double responders, double failures)
      : r_(responders), f_(failures) {
    values_.resize(kCells + 2);
    for (int i = 0; i <= kCells + 1; ++i) {
      const double theta = kLo + i * kStep;
      values_[i] = -r_ * softplus(-theta) - f_ * softplus(theta);
    }
  }

  double operator()(double theta) const {
    if (theta < kLo) return r_ * theta;          // log sigma(theta) -> theta
    if (theta >= kHi) return -f_ * theta;        // log(1-sigma) -> -theta
    const double t = (theta - kLo) * kInvStep;
    int i = static_cast<int>(t);
    if (i > kCells - 1) i = kCells - 1;
    const double u = t - i;  // quadratic through points i, i+1, i+2
    const double y0 = values_[i], y1 = values_[i + 1], y2 = values_[i + 2];
    return y0 + u * (y1 - y0) + 0.5 * u * (u - 1.0) * (y2 - 2.0 * y1 + y0);
  }

 private:
  static constexpr double kLo = -30.0, kHi = 30.0, kStep = 0.01;
  static constexpr double kInvStep = 1.0 / kStep;
  static constexpr int kCells = static_cast<int>((kHi - kLo) / kStep);
  double r_, f_;
  std::vector<double> values_;
};

std::vector<TrialLogLik> build_loglik_tables(const HistoricalPool& pool) {
  std::vector<TrialLogLik> tables;
  tables.reserve(pool.size());
  for (const auto& t : pool.trials) {
    tables.emplace_back(static_cast<double>(t.responders),
                        static_cast<double>(t.size - t.responders));
  }
  return tables;
}

PosteriorGrid posterior_on_grid(const std::vector<TrialLogLik>& trials,
                                const HierarchicalHyperPrior& hyper,
                                const Box& box, int n_mu, int n_tau) {
  const QuadRule& gh = gauss_hermite(41);
  const int n_nodes = static_cast<int>(gh.nodes.size());

  PosteriorGrid grid;
  grid.mu.resize(n_mu);
  grid.tau.resize(n_tau);
  const double dmu = (box.mu_hi - box.mu_lo) / n_mu;
  const double dtau = (box.tau_hi - box.tau_lo) / n_tau;
  for (int i = 0; i < n_mu; ++i) grid.mu[i] = box.mu_lo + (i + 0.5) * dmu;
  for (int j = 0; j < n_tau; ++j) grid.tau[j] = box.tau_lo + (j + 0.5) * dtau;

  const std::size_t k = trials.size();
  std::vector<double> logpost(static_cast<std::size_t>(n_mu) * n_tau);
  std::vector<double> ll(n_nodes);
  double max_logpost = -std::numeric_limits<double>::infinity();
  for (int j = 0; j < n_tau; ++j) {
    const double tau = grid.tau[j];
    const double ztau = tau / hyper.tau_scale;
    const double spread = kSqrt2 * tau;
    for (int i = 0; i < n_mu; ++i) {
      const double mu = grid.mu[i];
      const double zmu = (mu - hyper.mu_mean) / hyper.mu_sd;
      double lp = -0.5 * zmu * zmu - 0.5 * ztau * ztau;
      for (std::size_t t = 0; t < k; ++t) {
        double max_ll = -std::numeric_limits<double>::infinity();
        for (int q = 0; q < n_nodes; ++q) {
          const double v = trials[t](mu + spread * gh.nodes[q]);
          ll[q] = v;
          max_ll = std::max(max_ll, v);
        }
        double acc = 0.0;
        for (int q = 0; q < n_nodes; ++q) {
          const double d = ll[q] - max_ll;
          if (d > -38.0) acc += gh.weights[q] * fast_exp(d);
        }
        lp += max_ll + std::log(std::max(acc * kInvSqrtPi, 1e-300));
      }
      logpost[static_cast<std::size_t>(i) * n_tau + j] = lp;
      max_logpost = std::max(max_logpost, lp);
    }
  }
  grid.weight.resize(logpost.size());
  double total = 0.0;
  for (std::size_t c = 0; c < logpost.size(); ++c) {
    const double w = std::exp(logpost[c] - max_logpost);
    grid.weight[c] = w;
    total += w;
  }
  for (double& w : grid.weight) w /= total;
  return grid;
}

GriddedPredictive predictive_from_grid(const PosteriorGrid& grid, int pi_cells) {
  GriddedPredictive pred;
  pred.cell = 1.0 / pi_cells;
  pred.x.resize(pi_cells);
  pred.pdf.assign(pi_cells, 0.0);
  std::vector<double> theta_mid(pi_cells);
  std::vector<double> theta_edge(pi_cells + 1);
  for (int j = 0; j < pi_cells; ++j) {
    const double x = (j + 0.5) * pred.cell;
    pred.x[j] = x;
    theta_mid[j] = std::log(x / (1.0 - x));
  }
  theta_edge[0] = -std::numeric_limits<double>::infinity();
  theta_edge[pi_cells] = std::numeric_limits<double>::infinity();
  for (int j = 1; j < pi_cells; ++j) {
    const double x = j * pred.cell;
    theta_edge[j] = std::log(x / (1.0 - x));
  }
  // Antiderivative of the standard normal CDF: E(z) = z Phi(z) + phi(z).
  auto phi_int = [](double z) {
    if (z < -38.0) return 0.0;
    if (z > 38.0) return z;
    const double cdf = 0.5 * std::erfc(-z * 0.70710678118654752);
    const double pdf = 0.39894228040143267794 * std::exp(-0.5 * z * z);
    return z * cdf + pdf;
  };

  const int n_tau = static_cast<int>(grid.tau.size());
  const double inv_sqrt2pi = 0.39894228040143267794;
  const double dmu = grid.mu.size() > 1 ? grid.mu[1] - grid.mu[0] : 1e-6;
  std::vector<double> mass(pi_cells, 0.0);
  for (std::size_t i = 0; i < grid.mu.size(); ++i) {
    for (int j = 0; j < n_tau; ++j) {
      const double w = grid.weight[i * n_tau + j];
      if (w < 1e-12) continue;
      const double mu = grid.mu[i];
      const double tau = std::max(grid.tau[j], 1e-12);
      if (tau >= 0.5 && tau >= 3.0 * dmu) {
        // Wide kernels are resolved by midpoint sampling on the theta grid.
        const double lo = mu - 9.0 * tau, hi = mu + 9.0 * tau;
        const auto first = std::lower_bound(theta_mid.begin(), theta_mid.end(), lo);
        const auto last = std::upper_bound(theta_mid.begin(), theta_mid.end(), hi);
        const double scale = w * inv_sqrt2pi / tau * pred.cell;
        for (auto it = first; it != last; ++it) {
          const double z = (*it - mu) / tau;
          const std::size_t idx = static_cast<std::size_t>(it - theta_mid.begin());
          // Jacobian converts the theta density to a pi-cell mass.
          mass[idx] += scale * std::exp(-0.5 * z * z) /
                       (pred.x[idx] * (1.0 - pred.x[idx]));
        }
      } else {
        // Narrow kernels alias on both grids. Treat mu as uniform over its
        // quadrature cell: theta then has an exact uniform (x) normal CDF
        // G(t) = [E((t-a)/tau) - E((t-b)/tau)] tau / (b - a), and cell
        // masses come from CDF differences at the pi-cell edges.
        const double a = mu - 0.5 * dmu, b = mu + 0.5 * dmu;
        const double lo = a - 9.0 * tau, hi = b + 9.0 * tau;
        auto smear_cdf = [&](double t) {
          if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
          return (phi_int((t - a) / tau) - phi_int((t - b) / tau)) * tau / dmu;
        };
        int j_lo = static_cast<int>(std::lower_bound(theta_edge.begin() + 1,
                                                     theta_edge.end() - 1, lo) -
                                    (theta_edge.begin() + 1));
        int j_hi = static_cast<int>(std::upper_bound(theta_edge.begin() + 1,
                                                     theta_edge.end() - 1, hi) -
                                    (theta_edge.begin() + 1));
        j_lo = std::max(j_lo - 1, 0);
        j_hi = std::min(j_hi + 1, pi_cells - 1);
        double cdf_prev = j_lo == 0 ? 0.0 : smear_cdf(theta_edge[j_lo]);
        for (int c = j_lo; c <= j_hi; ++c) {
          const double cdf_next =
              c == pi_cells - 1 ? 1.0 : smear_cdf(theta_edge[c + 1]);
          mass[c] += w * (cdf_next - cdf_prev);
          cdf_prev = cdf_next;
        }
      }
    }
  }
  double total = 0.0;
  for (double m : mass) total += m;
  if (!(total > 0.0)) throw FittingError("predictive density vanished on the grid");
  double m1 = 0.0, m2 = 0.0;
  for (int j = 0; j < pi_cells; ++j) {
    const double cell_mass = mass[j] / total;
    pred.pdf[j] = cell_mass / pred.cell;
    m1 += cell_mass * pred.x[j];
    m2 += cell_mass * pred.x[j] * pred.x[j];
  }
  pred.mean = m1;
  pred.var = std::max(m2 - m1 * m1, 0.0);
  return pred;
}

Box mass_bounding_box(const PosteriorGrid& grid, const Box& full) {
  const int n_tau = static_cast<int>(grid.tau.size());
  const int n_mu = static_cast<int>(grid.mu.size());
  double max_w = 0.0;
  for (double w : grid.weight) max_w = std::max(max_w, w);
  const double cutoff = max_w * 1e-12;
  int i_lo = n_mu, i_hi = -1, j_lo = n_tau, j_hi = -1;
  for (int i = 0; i < n_mu; ++i) {
    for (int j = 0; j < n_tau; ++j) {
      if (grid.weight[static_cast<std::size_t>(i) * n_tau + j] >= cutoff) {
        i_lo = std::min(i_lo, i);
        i_hi = std::max(i_hi, i);
        j_lo = std::min(j_lo, j);
        j_hi = std::max(j_hi, j);
      }
    }
  }
  const double dmu = grid.mu[1] - grid.mu[0];
  const double dtau = grid.tau[1] - grid.tau[0];
  Box box;
  box.mu_lo = std::max(full.mu_lo, grid.mu[i_lo] - 2.5 * dmu);
  box.mu_hi = std::min(full.mu_hi, grid.mu[i_hi] + 2.5 * dmu);
  box.tau_lo = std::max(full.tau_lo, grid.tau[j_lo] - 2.5 * dtau);
  box.tau_hi = std::min(full.tau_hi, grid.tau[j_hi] + 2.5 * dtau);
  return box;
}

struct WeightedSample {
  std::vector<double> x, w;  // support points and multiplicities
  double n = 0.0;            // total draw count
};

// Quantile-spaced draws from the gridded predictive, collapsed to cell
// midpoints with multiplicities (the gridded predictive is discrete over the
// midpoints, so equal draws coincide).
WeightedSample quantile_draws(const GriddedPredictive& pred, int n_draws) {
  WeightedSample s;
  s.n = n_draws;
  const int cells = static_cast<int>(pred.x.size());
  double cum = 0.0;
  long prev = 0;
  for (int j = 0; j < cells; ++j) {
    cum += pred.pdf[j] * pred.cell;
    const double frac = std::min(cum, 1.0);
    // Number of quantiles u_i = (i - 0.5)/n with u_i <= frac.
    long idx = static_cast<long>(std::floor(frac * n_draws + 0.5));
    if (j == cells - 1) idx = n_draws;
    const long count = idx - prev;
    if (count > 0) {
      s.x.push_back(pred.x[j]);
      s.w.push_back(static_cast<double>(count));
      prev = idx;
    }
  }
  return s;
}

struct EmResult {
  std::vector<double> weights;
  std::vector<BetaParams> comps;
  double loglik = 0.0;
  double aic = 0.0;
  int iterations = 0;
  bool converged = false;
};

BetaParams moment_match(double mean, double var, double floor_val) {
  mean = std::clamp(mean, 1e-6, 1.0 - 1e-6);
  var = std::max(var, 1e-10);
  double c = mean * (1.0 - mean) / var - 1.0;
  c = std::max(c, 0.02);
  return BetaParams{std::max(mean * c, floor_val),
                    std::max((1.0 - mean) * c, floor_val)};
}

// Weighted maximum-likelihood Beta parameters from sufficient statistics
// E[log x] = s1, E[log(1-x)] = s2, Newton on the digamma equations.
BetaParams beta_mle(double s1, double s2, BetaParams init, double floor_val) {
  double a = std::max(init.a, floor_val), b = std::max(init.b, floor_val);
  for (int it = 0; it < 60; ++it) {
    const double psi_ab = digamma(a + b);
    const double f1 = digamma(a) - psi_ab - s1;
    const double f2 = digamma(b) - psi_ab - s2;
    const double tri_ab = trigamma(a + b);
    const double j11 = trigamma(a) - tri_ab;
    const double j22 = trigamma(b) - tri_ab;
    const double j12 = -tri_ab;
    const double det = j11 * j22 - j12 * j12;
    if (!(std::fabs(det) > 1e-300)) break;
    double da = (f1 * j22 - f2 * j12) / det;
    double db = (f2 * j11 - f1 * j12) / det;
    double step = 1.0;
    while (a - step * da <= 0.0 || b - step * db <= 0.0) step *= 0.5;
    a -= step * da;
    b -= step * db;
    if (std::fabs(f1) < 1e-11 && std::fabs(f2) < 1e-11) break;
  }
  return BetaParams{std::max(a, floor_val), std::max(b, floor_val)};
}

EmResult em_fit(const WeightedSample& s, int n_comp, const MapFitOptions& opt) {
  const std::size_t m = s.x.size();
  std::vector<double> lx(m), l1x(m);
  for (std::size_t i = 0; i < m; ++i) {
    lx[i] = std::log(s.x[i]);
    l1x[i] = std::log1p(-s.x[i]);
  }

  EmResult res;
  res.weights.assign(n_comp, 1.0 / n_comp);
  res.comps.resize(n_comp);
  // Quantile-partition moment matching for the initial components.
  double total_w = 0.0;
  for (double w : s.w) total_w += w;
  {
    double cum = 0.0;
    int block = 0;
    double bw = 0.0, bx = 0.0, bxx = 0.0;
    std::vector<BetaParams> init;
    for (std::size_t i = 0; i < m; ++i) {
      bw += s.w[i];
      bx += s.w[i] * s.x[i];
      bxx += s.w[i] * s.x[i] * s.x[i];
      cum += s.w[i];
      if (cum >= total_w * (block + 1.0) / n_comp || i + 1 == m) {
        const double mean = bx / bw;
        const double var = std::max(bxx / bw - mean * mean, 1e-10);
        init.push_back(moment_match(mean, var, opt.component_floor));
        bw = bx = bxx = 0.0;
        ++block;
        if (block == n_comp) break;
      }
    }
    while (static_cast<int>(init.size()) < n_comp) init.push_back(init.back());
    res.comps = init;
  }

  std::vector<double> lpdf(static_cast<std::size_t>(n_comp) * m);
  std::vector<double> resp_sum(n_comp), resp_lx(n_comp), resp_l1x(n_comp);
  double prev_ll = -std::numeric_limits<double>::infinity();
  for (int iter = 1; iter <= opt.em_max_iter; ++iter) {
    // E-step.
    for (int c = 0; c < n_comp; ++c) {
      const auto& comp = res.comps[c];
      const double lw = std::log(std::max(res.weights[c], 1e-300)) -
                        log_beta_fn(comp.a, comp.b);
      for (std::size_t i = 0; i < m; ++i) {
        lpdf[static_cast<std::size_t>(c) * m + i] =
            lw + (comp.a - 1.0) * lx[i] + (comp.b - 1.0) * l1x[i];
      }
    }
    std::fill(resp_sum.begin(), resp_sum.end(), 0.0);
    std::fill(resp_lx.begin(), resp_lx.end(), 0.0);
    std::fill(resp_l1x.begin(), resp_l1x.end(), 0.0);
    double ll = 0.0;
    double expbuf[8];
    for (std::size_t i = 0; i < m; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (int c = 0; c < n_comp; ++c) {
        mx = std::max(mx, lpdf[static_cast<std::size_t>(c) * m + i]);
      }
      double denom = 0.0;
      for (int c = 0; c < n_comp; ++c) {
        expbuf[c] = fast_exp(lpdf[static_cast<std::size_t>(c) * m + i] - mx);
        denom += expbuf[c];
      }
      ll += s.w[i] * (mx + std::log(denom));
      const double inv = s.w[i] / denom;
      for (int c = 0; c < n_comp; ++c) {
        const double r = expbuf[c] * inv;
        resp_sum[c] += r;
        resp_lx[c] += r * lx[i];
        resp_l1x[c] += r * l1x[i];
      }
    }
    ll /= total_w;
    res.loglik = ll;
    res.iterations = iter;
    if (std::fabs(ll - prev_ll) < opt.em_tol) {
      res.converged = true;
      break;
    }
    prev_ll = ll;
    // M-step.
    for (int c = 0; c < n_comp; ++c) {
      if (resp_sum[c] < 1e-10) continue;  // starved component keeps its shape
      res.weights[c] = resp_sum[c] / total_w;
      res.comps[c] = beta_mle(resp_lx[c] / resp_sum[c],
                              resp_l1x[c] / resp_sum[c], res.comps[c],
                              opt.component_floor);
    }
    double wsum = 0.0;
    for (double w : res.weights) wsum += w;
    for (double& w : res.weights) w /= wsum;
  }
  res.aic = -2.0 * res.loglik * total_w + 2.0 * (3.0 * n_comp - 1.0);
  return res;
}

double tv_distance(const BetaMixture& mix, const GriddedPredictive& pred) {
  double tv = 0.0;
  for (std::size_t j = 0; j < pred.x.size(); ++j) {
    tv += std::fabs(mix.pdf(pred.x[j]) - pred.pdf[j]) * pred.cell;
  }
  return 0.5 * tv;
}

GriddedPredictive compute_predictive(const HistoricalPool& pool,
                                     const HierarchicalHyperPrior& hyper,
                                     const MapFitOptions& options, int* grid_mu,
                                     int* grid_tau, int* refinements_out) {
  const Box full{hyper.mu_mean - 6.0 * hyper.mu_sd,
                 hyper.mu_mean + 6.0 * hyper.mu_sd, 0.0,
                 5.0 * hyper.tau_scale};
  const std::vector<TrialLogLik> trials = build_loglik_tables(pool);
  GriddedPredictive pred;
  int refinements = 0;
  int n_mu = options.mu_cells, n_tau = options.tau_cells;
  if (options.zoom) {
    // A cheap locating pass finds the posterior mass; the pinned grid then
    // resolves it.
    const int locate_mu = std::max(n_mu / 2, 40), locate_tau = std::max(n_tau / 2, 40);
    const PosteriorGrid pass1 =
        posterior_on_grid(trials, hyper, full, locate_mu, locate_tau);
    const Box zoomed = mass_bounding_box(pass1, full);
    const PosteriorGrid pass2 = posterior_on_grid(trials, hyper, zoomed, n_mu, n_tau);
    pred = predictive_from_grid(pass2, options.pi_cells);
  } else {
    pred = predictive_from_grid(posterior_on_grid(trials, hyper, full, n_mu, n_tau),
                                options.pi_cells);
    while (options.refine) {
      if (2 * n_mu > options.max_grid) {
        throw FittingError("fit_map_prior: grid refinement did not converge by " +
                           std::to_string(options.max_grid) + " cells");
      }
      n_mu *= 2;
      n_tau *= 2;
      GriddedPredictive finer = predictive_from_grid(
          posterior_on_grid(trials, hyper, full, n_mu, n_tau), options.pi_cells);
      ++refinements;
      const bool settled = std::fabs(finer.mean - pred.mean) < options.refine_tol &&
                           std::fabs(finer.var - pred.var) < options.refine_tol;
      pred = std::move(finer);
      if (settled) break;
    }
  }
  if (grid_mu) *grid_mu = n_mu;
  if (grid_tau) *grid_tau = n_tau;
  if (refinements_out) *refinements_out = refinements;
  return pred;
}

}  // namespace

MapPredictiveSummary map_predictive_summary(const HistoricalPool& pool,
                                            const HierarchicalHyperPrior& hyper,
                                            const MapFitOptions& options) {
  pool.validate();
  hyper.validate();
  if (pool.size() < 2) {
    throw std::invalid_argument("map_predictive_summary: needs at least 2 trials");
  }
  const GriddedPredictive pred =
      compute_predictive(pool, hyper, options, nullptr, nullptr, nullptr);
  return MapPredictiveSummary{pred.mean, pred.var};
}

BetaMixture fit_map_prior(const HistoricalPool& pool,
                          const HierarchicalHyperPrior& hyper,
                          const MapFitOptions& options,
                          MapFitDiagnostics* diagnostics) {
  pool.validate();
  hyper.validate();
  if (pool.size() < 2) {
    throw std::invalid_argument(
        "fit_map_prior: needs at least 2 trials (use robust_single or a vague "
        "prior for smaller pools)");
  }

  int n_mu = 0, n_tau = 0, refinements = 0;
  const GriddedPredictive pred =
      compute_predictive(pool, hyper, options, &n_mu, &n_tau, &refinements);

  const WeightedSample sample = quantile_draws(pred, options.em_draws);
  EmResult best;
  bool have_best = false;
  for (int k = 1; k <= options.max_components; ++k) {
    EmResult r = em_fit(sample, k, options);
    if (!r.converged) {
      throw FittingError("fit_map_prior: EM with " + std::to_string(k) +
                         " components did not converge in " +
                         std::to_string(r.iterations) + " iterations");
    }
    if (!have_best || r.aic < best.aic - 1e-9) {
      best = std::move(r);
      have_best = true;
    }
  }

  BetaMixture mix;
  mix.weights = best.weights;
  mix.components = best.comps;
  mix.validate();

  const double tv = tv_distance(mix, pred);
  if (diagnostics) {
    diagnostics->grid_mu = n_mu;
    diagnostics->grid_tau = n_tau;
    diagnostics->refinements = refinements;
    diagnostics->em_iterations = best.iterations;
    diagnostics->n_components = static_cast<int>(mix.size());
    diagnostics->aic = best.aic;
    diagnostics->tv_distance = tv;
    diagnostics->predictive_mean = pred.mean;
    diagnostics->predictive_var = pred.var;
  }
  // A four-component cap cannot always reach TV 0.01 against wide
  // heavy-tailed predictives (tiny pools under HN(1)); the distance is
  // reported in the diagnostics and only gross misfit is fatal.
  if (tv > 0.08) {
    throw FittingError("fit_map_prior: mixture approximation too coarse (TV " +
                       std::to_string(tv) + ")");
  }
  return mix;
}

}  // namespace hybridct
