#pragma once

namespace hybridct {

// A 2x2 table of responders / sample sizes for two arms.
struct Counts2x2 {
  int y_t = 0;  // responders, arm 1
  int n_t = 1;  // size, arm 1
  int y_c = 0;  // responders, arm 2
  int n_c = 1;  // size, arm 2

  // Throws std::invalid_argument on violated bounds.
  void validate() const;
};

struct BetaParams {
  double a = 1.0;
  double b = 1.0;

  void validate() const;
  double mean() const { return a / (a + b); }
  double variance() const { return a * b / ((a + b) * (a + b) * (a + b + 1.0)); }
};

// ln B(a, b). Relative error below 1e-12 for a, b up to 1e6.
double log_beta_fn(double a, double b);

// One-sided Fisher exact p-value: P(hypergeometric count >= y_t | margins),
// the tail favoring a higher rate in arm 1.
double fisher_exact_one_sided(const Counts2x2& tbl);

// Two-sided Fisher exact p-value under the minimum-likelihood rule: the sum
// of hypergeometric probabilities of all tables no more likely than the
// observed one (ties detected with a 1e-7 relative slack, matching the
// standard implementation this mirrors).
double fisher_exact_two_sided(const Counts2x2& tbl);

struct PropDiffCi {
  double estimate = 0.0;
  double lower = -1.0;
  double upper = 1.0;
};

// Difference of proportions with the Yates-corrected Wald interval, endpoints
// clamped to [-1, 1]. The continuity correction is capped at |estimate|.
PropDiffCi prop_diff_ci_cc(const Counts2x2& tbl, double level);

// Pr[X > Y] for X ~ Beta(x), Y ~ Beta(y). Uses the exact finite series when
// x.a is an integer <= 10000 and falls back to adaptive Gauss-Legendre over
// the CDF form (tolerance 1e-10) otherwise.
double beta_superiority(const BetaParams& x, const BetaParams& y);

}  // namespace hybridct
