#include "hybridct/exact_stats.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "hybridct/errors.hpp"
#include "hybridct/quadrature.hpp"
#include "hybridct/special_functions.hpp"

namespace hybridct {

void Counts2x2::validate() const {
  if (n_t < 1 || n_c < 1 || y_t < 0 || y_c < 0 || y_t > n_t || y_c > n_c) {
    throw std::invalid_argument("Counts2x2: requires 0 <= y <= n and n >= 1");
  }
}

void BetaParams::validate() const {
  if (!(a > 0.0) || !(b > 0.0) || !std::isfinite(a) || !std::isfinite(b)) {
    throw std::invalid_argument("BetaParams: shapes must be positive and finite");
  }
}

namespace {

// Stirling tail correction: lgamma(x) = (x-1/2)ln x - x + ln sqrt(2 pi) + corr(x).
double stirling_corr(double x) {
  const double inv = 1.0 / x, inv2 = inv * inv;
  return inv * (1.0 / 12.0 -
                inv2 * (1.0 / 360.0 -
                        inv2 * (1.0 / 1260.0 - inv2 * (1.0 / 1680.0))));
}

}  // namespace

double log_beta_fn(double a, double b) {
  if (!(a > 0.0) || !(b > 0.0) || !std::isfinite(a) || !std::isfinite(b)) {
    throw std::invalid_argument("log_beta_fn: arguments must be positive and finite");
  }
  const double hi = std::max(a, b), lo = std::min(a, b);
  if (hi < 30.0) {
    return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
  }
  // ln B(lo, hi) = lgamma(lo) - [lgamma(hi+lo) - lgamma(hi)], with the
  // bracket from a cancellation-free Stirling difference.
  const double delta = (hi - 0.5) * std::log1p(lo / hi) +
                       lo * std::log(hi + lo) - lo +
                       stirling_corr(hi + lo) - stirling_corr(hi);
  return std::lgamma(lo) - delta;
}

namespace {

// Hypergeometric log pmf over the support of arm-1 counts with all margins
// fixed at those of tbl.
struct HypergeomSupport {
  int lo = 0, hi = 0;
  std::vector<double> pmf;  // linear scale, indexed by x - lo
};

HypergeomSupport hypergeom_pmf(const Counts2x2& tbl) {
  const int total = tbl.n_t + tbl.n_c;
  const int successes = tbl.y_t + tbl.y_c;
  HypergeomSupport s;
  s.lo = std::max(0, successes - tbl.n_c);
  s.hi = std::min(tbl.n_t, successes);
  const double denom = log_binom_coef(total, successes);
  s.pmf.reserve(s.hi - s.lo + 1);
  for (int x = s.lo; x <= s.hi; ++x) {
    s.pmf.push_back(std::exp(log_binom_coef(tbl.n_t, x) +
                             log_binom_coef(tbl.n_c, successes - x) - denom));
  }
  return s;
}

}  // namespace

double fisher_exact_one_sided(const Counts2x2& tbl) {
  tbl.validate();
  const HypergeomSupport s = hypergeom_pmf(tbl);
  double p = 0.0;
  for (int x = std::max(tbl.y_t, s.lo); x <= s.hi; ++x) p += s.pmf[x - s.lo];
  return std::min(p, 1.0);
}

double fisher_exact_two_sided(const Counts2x2& tbl) {
  tbl.validate();
  const HypergeomSupport s = hypergeom_pmf(tbl);
  const double observed = s.pmf[tbl.y_t - s.lo];
  const double cutoff = observed * (1.0 + 1e-7);
  double p = 0.0;
  for (double q : s.pmf) {
    if (q <= cutoff) p += q;
  }
  return std::min(p, 1.0);
}

PropDiffCi prop_diff_ci_cc(const Counts2x2& tbl, double level) {
  tbl.validate();
  if (!(level > 0.0 && level < 1.0)) {
    throw std::invalid_argument("prop_diff_ci_cc: level must lie in (0,1)");
  }
  const double p1 = static_cast<double>(tbl.y_t) / tbl.n_t;
  const double p2 = static_cast<double>(tbl.y_c) / tbl.n_c;
  PropDiffCi ci;
  ci.estimate = p1 - p2;
  const double z = norm_quantile(0.5 * (1.0 + level));
  const double se =
      std::sqrt(p1 * (1.0 - p1) / tbl.n_t + p2 * (1.0 - p2) / tbl.n_c);
  const double cc = std::min(0.5 * (1.0 / tbl.n_t + 1.0 / tbl.n_c),
                             std::fabs(ci.estimate));
  const double width = z * se + cc;
  ci.lower = std::max(ci.estimate - width, -1.0);
  ci.upper = std::min(ci.estimate + width, 1.0);
  return ci;
}

namespace {

// Exact finite series for Pr[X > Y] with X ~ Beta(a1, b1), a1 a positive
// integer, Y ~ Beta(g, d). All terms are positive, accumulated in ascending
// index order; the log-gamma pieces are advanced incrementally.
double superiority_series(int a1, double b1, double g, double d) {
  const double lbeta_gd = log_beta_fn(g, d);
  const double lgamma_b1 = std::lgamma(b1);
  const double lgamma_b1d = std::lgamma(b1 + d);
  double lgamma_gs = std::lgamma(g);              // lgamma(g + s)
  double lgamma_gsb = std::lgamma(g + b1 + d);    // lgamma(g + s + b1 + d)
  double lgamma_s1 = 0.0;                         // lgamma(s + 1)
  double lgamma_s1b = std::lgamma(1.0 + b1);      // lgamma(s + 1 + b1)
  double sum = 0.0;
  for (int s = 0; s < a1; ++s) {
    const double log_num = lgamma_gs + lgamma_b1d - lgamma_gsb;    // ln B(g+s, b1+d)
    const double log_bs1 = lgamma_s1 + lgamma_b1 - lgamma_s1b;     // ln B(s+1, b1)
    sum += std::exp(log_num - std::log(b1 + s) - lbeta_gd - log_bs1);
    lgamma_gs += std::log(g + s);
    lgamma_gsb += std::log(g + s + b1 + d);
    lgamma_s1 += std::log(s + 1.0);
    lgamma_s1b += std::log(s + 1.0 + b1);
  }
  return std::min(sum, 1.0);
}

double superiority_quadrature(const BetaParams& x, const BetaParams& y) {
  const double lbeta_x = log_beta_fn(x.a, x.b);
  auto integrand = [&](double t) {
    if (t <= 0.0 || t >= 1.0) return 0.0;
    const double fx = std::exp((x.a - 1.0) * std::log(t) +
                               (x.b - 1.0) * std::log1p(-t) - lbeta_x);
    return fx * reg_inc_beta(y.a, y.b, t);
  };
  // The integrand can be endpoint-singular (shapes below one), so each half
  // is integrated under a power substitution that regularizes it:
  // left  t = u^8 / 2        on u in (0,1),
  // right t = 1 - v^8 / 2    on v in (0,1).
  auto left = [&](double u) {
    const double u4 = u * u * u * u;
    const double t = 0.5 * u4 * u4;
    return integrand(t) * 4.0 * u4 * u * u * u;
  };
  auto right = [&](double v) {
    const double v4 = v * v * v * v;
    const double t = 1.0 - 0.5 * v4 * v4;
    return integrand(t) * 4.0 * v4 * v * v * v;
  };
  const QuadRule& rule = gauss_legendre01(64);
  auto panel = [&](const std::function<double(double)>& f, double a, double b) {
    double s = 0.0;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
      s += rule.weights[i] * f(a + (b - a) * rule.nodes[i]);
    }
    return s * (b - a);
  };
  auto integrate_half = [&](const std::function<double(double)>& f) {
    std::vector<std::pair<double, double>> stack{{0.0, 1.0}};
    double total = 0.0;
    int evals = 0;
    while (!stack.empty()) {
      auto [a, b] = stack.back();
      stack.pop_back();
      const double whole = panel(f, a, b);
      const double mid = 0.5 * (a + b);
      const double split = panel(f, a, mid) + panel(f, mid, b);
      if (std::fabs(split - whole) < 1e-12 || (b - a) < 1e-10) {
        total += split;
      } else {
        stack.push_back({a, mid});
        stack.push_back({mid, b});
      }
      if (++evals > 4000) {
        throw NumericError("beta_superiority: quadrature did not converge");
      }
    }
    return total;
  };
  const double total = integrate_half(left) + integrate_half(right);
  return std::clamp(total, 0.0, 1.0);
}

}  // namespace

namespace {

bool is_series_shape(double a) {
  const double rounded = std::round(a);
  return rounded >= 1.0 && rounded <= 10000.0 && std::fabs(a - rounded) < 1e-9;
}

}  // namespace

double beta_superiority(const BetaParams& x, const BetaParams& y) {
  x.validate();
  y.validate();
  if (is_series_shape(x.a)) {
    return superiority_series(static_cast<int>(std::round(x.a)), x.b, y.a, y.b);
  }
  if (is_series_shape(y.a)) {
    // Continuous distributions: Pr[X > Y] = 1 - Pr[Y > X].
    return 1.0 - superiority_series(static_cast<int>(std::round(y.a)), y.b,
                                    x.a, x.b);
  }
  return superiority_quadrature(x, y);
}

}  // namespace hybridct
