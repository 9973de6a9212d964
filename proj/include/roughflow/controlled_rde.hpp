#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <ostream>
#include <vector>

#include "roughflow/rough_lift.hpp"
#include "roughflow/types.hpp"

namespace roughflow {

/// Optional declared bounds, spot-checked by check_bounds. Non-positive
/// entries are treated as undeclared.
struct FieldBounds {
  double lipschitz = 0.0;
  double drift_sup = 0.0;
  double sigma_sup = 0.0;
};

/// f: R^m -> R^m, sigma: R^m -> R^{m x d} and its derivative
/// dsigma(y)(p*m + q, i) = d sigma_{p,i} / d y_q.
struct VectorField {
  using DriftFn = std::function<void(const VecIn&, VecOut)>;
  using SigmaFn = std::function<void(const VecIn&, MatOut)>;

  std::size_t state_dim = 0;
  std::size_t noise_dim = 0;
  DriftFn drift;    ///< empty means zero drift
  SigmaFn sigma;
  SigmaFn dsigma;   ///< empty means central differences
  FieldBounds bounds;

  void eval_drift(const VecIn& y, VecOut out) const;
  void eval_sigma(const VecIn& y, MatOut out) const;
  /// Analytic derivative if given, else central differences with step
  /// 1e-6 * max(1, |y_q|).
  void eval_dsigma(const VecIn& y, MatOut out) const;
};

/// dY = A Y dt + sum_i N_i Y dx^i.
VectorField linear_field(const Matrix& drift, const std::vector<Matrix>& noise);

/// Throws ConfigError when a declared bound fails on `samples` random states
/// drawn uniformly from [-radius, radius]^m.
void check_bounds(const VectorField& vf, double radius, std::size_t samples, std::uint64_t seed);

/// Scratch space for davie_step, sized once per solve.
struct DavieWorkspace {
  explicit DavieWorkspace(const VectorField& vf);
  Matrix sigma;
  Matrix dsigma;
  Vector row;
};

/// next = y + drift h + sigma(y) X^1 + sum_{ij} (D sigma_i sigma_j)(y) X^{ji}
/// for one interval; inc has d entries and area d*d (row-major).
void davie_step(const VectorField& vf, const VecIn& y, const double* inc, const double* area,
                double h, const VecIn& drift, DavieWorkspace& ws, VecOut next);

/// Largest state norm tolerated before a divergence error.
inline constexpr double kDivergenceCap = 1e12;

/// Solution (Y, Y') of an RDE together with the first level of its driver,
/// which is all that is needed for remainders R_{s,t} = Y_{s,t} - Y'_s X_{s,t}.
struct ControlledPath {
  TimeGrid grid;
  PathMatrix values;     ///< (n+1) x m
  PathMatrix gubinelli;  ///< (n+1) x (m*d), row-major m x d per point
  PathMatrix driver;     ///< (n+1) x d, cumulative first level

  std::size_t state_dim() const noexcept { return static_cast<std::size_t>(values.cols()); }
  std::size_t noise_dim() const noexcept { return static_cast<std::size_t>(driver.cols()); }
  Vector remainder(std::size_t s, std::size_t t) const;
};

ControlledPath solve_rde(const VectorField& vf, const Level2RoughPath& driver, const VecIn& y0);

/// ||Y' - Z'||_a + ||R^Y - R^Z||_{2a} on grid pairs.
double controlled_distance(const ControlledPath& a, const ControlledPath& b, double exponent,
                           HolderMethod method = HolderMethod::automatic);

/// sup over dyadic pairs of |R_{s,t}| / (t-s)^{2a}.
double remainder_norm(const ControlledPath& path, double exponent,
                      HolderMethod method = HolderMethod::automatic);

struct LipschitzReport {
  double solution_distance = 0.0;    ///< |Y_0 - Z_0| + ||Y - Z||_beta
  double controlled_distance = 0.0;  ///< d_{2 beta}
  double input_distance = 0.0;       ///< |y0 - z0| + rho_alpha(X, X~)
  double ratio = 0.0;                ///< (solution + controlled) / input
};

LipschitzReport lipschitz_probe(const VectorField& vf, const Level2RoughPath& driver_a,
                                const Level2RoughPath& driver_b, const VecIn& y0_a,
                                const VecIn& y0_b, double alpha, double beta);

void write_solution_csv(std::ostream& out, const ControlledPath& path);

}  // namespace roughflow
