#pragma once

#include <vector>

namespace roughflow {

struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// Gauss–Jacobi rule on [-1, 1] for the weight (1-x)^a (1+x)^b, a, b > -1,
/// via Golub–Welsch.
QuadratureRule gauss_jacobi(int points, double a, double b);

inline QuadratureRule gauss_legendre(int points) { return gauss_jacobi(points, 0.0, 0.0); }

/// Gauss–Hermite rule for the standard normal density (weights sum to 1).
QuadratureRule gauss_hermite(int points);

}  // namespace roughflow
