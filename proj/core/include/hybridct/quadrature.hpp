#pragma once

#include <functional>
#include <vector>

namespace hybridct {

struct QuadRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

// Gauss-Hermite rule for integrals of the form \int e^{-x^2} f(x) dx.
const QuadRule& gauss_hermite(int n);

// Gauss-Legendre rule on (0,1).
const QuadRule& gauss_legendre01(int n);

// Adaptive quadrature on (a,b): recursively bisects a fixed Gauss-Legendre
// panel until the panel-vs-split difference meets abs_tol.
double adaptive_quad(const std::function<double(double)>& f, double a, double b,
                     double abs_tol, int max_depth = 48);

}  // namespace hybridct
