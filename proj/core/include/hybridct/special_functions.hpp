#pragma once

#include <vector>

namespace hybridct {

// exp(x) via range reduction and a degree-11 polynomial; relative error
// below ~5e-14. Used in quadrature/EM hot loops where libm exp dominates.
double fast_exp(double x);

// ln n! from a cached incremental table (bit-identical across threads).
double log_factorial(int n);

// ln of the binomial coefficient C(n, k).
double log_binom_coef(int n, int k);

// Regularized incomplete beta function I_x(a, b), i.e. the Beta(a,b) CDF at x.
// Continued-fraction evaluation, accurate to ~1e-14.
double reg_inc_beta(double a, double b, double x);

// Standard normal quantile (Wichura's AS241 rational approximation).
double norm_quantile(double p);

// Standard normal CDF.
double norm_cdf(double x);

double digamma(double x);
double trigamma(double x);

// Binomial pmf over y = 0..n at success probability p, computed from
// log-domain terms so it stays finite for n in the thousands.
std::vector<double> binom_pmf_table(int n, double p);

// Survival values sf[d] = P(Y > d) for d = -1..n (index d+1), from a pmf table.
std::vector<double> binom_sf_table(const std::vector<double>& pmf);

}  // namespace hybridct
