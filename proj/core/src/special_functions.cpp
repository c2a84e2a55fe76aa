#include "hybridct/special_functions.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <limits>
#include <stdexcept>

#include "hybridct/errors.hpp"

namespace hybridct {

double fast_exp(double x) {
  if (x < -708.0) return 0.0;
  if (x > 708.0) return std::numeric_limits<double>::infinity();
  // e^x = 2^k * e^r with r = x - k ln2 (hi/lo split), |r| <= ln2 / 2.
  constexpr double kInvLn2 = 1.4426950408889634074;
  constexpr double kLn2Hi = 6.93147180369123816490e-01;
  constexpr double kLn2Lo = 1.90821492927058770002e-10;
  const double kd = std::nearbyint(x * kInvLn2);
  const int k = static_cast<int>(kd);
  const double r = (x - kd * kLn2Hi) - kd * kLn2Lo;
  // Degree-11 Taylor polynomial of e^r; |r| <= 0.3466 keeps the truncation
  // near 6e-15.
  double p = 1.0 / 39916800.0;
  p = p * r + 1.0 / 3628800.0;
  p = p * r + 1.0 / 362880.0;
  p = p * r + 1.0 / 40320.0;
  p = p * r + 1.0 / 5040.0;
  p = p * r + 1.0 / 720.0;
  p = p * r + 1.0 / 120.0;
  p = p * r + 1.0 / 24.0;
  p = p * r + 1.0 / 6.0;
  p = p * r + 0.5;
  p = p * r + 1.0;
  p = p * r + 1.0;
  // Scale by 2^k through the exponent bits (k is well inside range here).
  std::uint64_t bits;
  std::memcpy(&bits, &p, sizeof bits);
  bits += static_cast<std::uint64_t>(static_cast<std::int64_t>(k) << 52);
  double out;
  std::memcpy(&out, &bits, sizeof out);
  return out;
}

double log_factorial(int n) {
  // Thread-local table; identical incremental sums on every thread keep the
  // values bit-for-bit reproducible.
  thread_local std::vector<double> table{0.0, 0.0};
  while (static_cast<int>(table.size()) <= n) {
    table.push_back(table.back() + std::log(static_cast<double>(table.size())));
  }
  return table[n];
}

double log_binom_coef(int n, int k) {
  if (k < 0 || k > n) return -std::numeric_limits<double>::infinity();
  return log_factorial(n) - log_factorial(k) - log_factorial(n - k);
}

namespace {

// Modified Lentz evaluation of the incomplete-beta continued fraction.
double inc_beta_cf(double a, double b, double x) {
  constexpr double tiny = 1e-300;
  constexpr double eps = 1e-16;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 500; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < eps) return h;
  }
  throw NumericError("incomplete beta continued fraction did not converge");
}

}  // namespace

double reg_inc_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0) || !std::isfinite(x)) {
    throw std::invalid_argument("reg_inc_beta: requires a>0, b>0, finite x");
  }
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double lbeta = std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
  const double front = std::exp(a * std::log(x) + b * std::log1p(-x) - lbeta);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * inc_beta_cf(a, b, x) / a;
  }
  return 1.0 - front * inc_beta_cf(b, a, 1.0 - x) / b;
}

double norm_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw std::invalid_argument("norm_quantile: p must lie in (0,1)");
  }
  // Wichura (1988), algorithm AS241, double-precision branch.
  const double q = p - 0.5;
  double r, num, den;
  if (std::fabs(q) <= 0.425) {
    r = 0.180625 - q * q;
    num = (((((((2509.0809287301226727 * r + 33430.575583588128105) * r +
                67265.770927008700853) * r + 45921.953931549871457) * r +
              13731.693765509461125) * r + 1971.5909503065514427) * r +
            133.14166789178437745) * r + 3.387132872796366608);
    den = (((((((5226.495278852545703 * r + 28729.085735721942674) * r +
                39307.89580009271061) * r + 21213.794301586595867) * r +
              5394.1960214247511077) * r + 687.1870074920579083) * r +
            42.313330701600911252) * r + 1.0);
    return q * num / den;
  }
  r = q < 0.0 ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  if (r <= 5.0) {
    r -= 1.6;
    num = (((((((7.7454501427834140764e-4 * r + 0.0227238449892691845833) * r +
                0.24178072517745061177) * r + 1.27045825245236838258) * r +
              3.64784832476320460504) * r + 5.7694972214606914055) * r +
            4.6303378461565452959) * r + 1.42343711074968357734);
    den = (((((((1.05075007164441684324e-9 * r + 5.475938084995344946e-4) * r +
                0.0151986665636164571966) * r + 0.14810397642748007459) * r +
              0.68976733498510000455) * r + 1.6763848301838038494) * r +
            2.05319162663775882187) * r + 1.0);
  } else {
    r -= 5.0;
    num = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                0.0012426609473880784386) * r + 0.026532189526576123093) * r +
              0.29656057182850489123) * r + 1.7848265399172913358) * r +
            5.4637849111641143699) * r + 6.6579046435011037772);
    den = (((((((2.04426310338993978564e-15 * r + 1.4215117583164458887e-7) * r +
                1.8463183175100546818e-5) * r + 7.868691311456132591e-4) * r +
              0.0148753612908506148525) * r + 0.13692988092273580531) * r +
            0.59983220655588793769) * r + 1.0);
  }
  const double v = num / den;
  return q < 0.0 ? -v : v;
}

double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double digamma(double x) {
  if (!(x > 0.0)) throw std::invalid_argument("digamma: requires x > 0");
  double result = 0.0;
  while (x < 10.0) {
    result -= 1.0 / x;
    x += 1.0;
  }
  // Asymptotic expansion with Bernoulli-number coefficients.
  const double inv = 1.0 / x, inv2 = inv * inv;
  result += std::log(x) - 0.5 * inv -
            inv2 * (1.0 / 12.0 -
                    inv2 * (1.0 / 120.0 -
                            inv2 * (1.0 / 252.0 -
                                    inv2 * (1.0 / 240.0 -
                                            inv2 * (1.0 / 132.0 -
                                                    inv2 * (691.0 / 32760.0 -
                                                            inv2 / 12.0))))));
  return result;
}

double trigamma(double x) {
  if (!(x > 0.0)) throw std::invalid_argument("trigamma: requires x > 0");
  double result = 0.0;
  while (x < 10.0) {
    result += 1.0 / (x * x);
    x += 1.0;
  }
  const double inv = 1.0 / x, inv2 = inv * inv;
  result +=
      inv * (1.0 + 0.5 * inv +
             inv2 * (1.0 / 6.0 -
                     inv2 * (1.0 / 30.0 -
                             inv2 * (1.0 / 42.0 -
                                     inv2 * (1.0 / 30.0 -
                                             inv2 * (5.0 / 66.0 -
                                                     inv2 * (691.0 / 2730.0)))))));
  return result;
}

std::vector<double> binom_pmf_table(int n, double p) {
  if (n < 0 || !(p >= 0.0 && p <= 1.0)) {
    throw std::invalid_argument("binom_pmf_table: invalid n or p");
  }
  std::vector<double> pmf(n + 1, 0.0);
  if (p == 0.0) {
    pmf[0] = 1.0;
    return pmf;
  }
  if (p == 1.0) {
    pmf[n] = 1.0;
    return pmf;
  }
  const double lp = std::log(p), lq = std::log1p(-p);
  for (int y = 0; y <= n; ++y) {
    pmf[y] = std::exp(log_binom_coef(n, y) + y * lp + (n - y) * lq);
  }
  return pmf;
}

std::vector<double> binom_sf_table(const std::vector<double>& pmf) {
  const int n = static_cast<int>(pmf.size()) - 1;
  std::vector<double> sf(n + 2, 0.0);
  double acc = 0.0;
  for (int y = n; y >= 0; --y) {
    acc += pmf[y];
    sf[y] = acc;  // sf[d+1] = P(Y > d) => index shift below
  }
  // Reindex so that sf[d+1] = P(Y > d), d = -1..n.
  std::vector<double> out(n + 2, 0.0);
  out[0] = acc;  // P(Y > -1) = 1 up to rounding
  for (int d = 0; d <= n; ++d) out[d + 1] = (d + 1 <= n) ? sf[d + 1] : 0.0;
  return out;
}

}  // namespace hybridct
