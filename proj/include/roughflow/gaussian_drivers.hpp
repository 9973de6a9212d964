#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "roughflow/types.hpp"

namespace roughflow {

/// Uniform grid t_k = k T / n on [0, T] with n a power of two.
class TimeGrid {
 public:
  TimeGrid() = default;
  static TimeGrid make(double horizon, std::size_t steps);

  double horizon() const noexcept { return horizon_; }
  std::size_t steps() const noexcept { return steps_; }
  std::size_t size() const noexcept { return steps_ + 1; }
  double step() const noexcept { return horizon_ / static_cast<double>(steps_); }
  double at(std::size_t k) const noexcept {
    return k == steps_ ? horizon_ : horizon_ * static_cast<double>(k) / static_cast<double>(steps_);
  }
  std::vector<double> points() const;

  /// Grid with steps/factor steps; factor must divide steps.
  TimeGrid coarsen(std::size_t factor) const;
  TimeGrid refine(std::size_t factor) const;

  bool operator==(const TimeGrid& other) const noexcept {
    return steps_ == other.steps_ && horizon_ == other.horizon_;
  }

 private:
  TimeGrid(double horizon, std::size_t steps) : horizon_(horizon), steps_(steps) {}
  double horizon_ = 1.0;
  std::size_t steps_ = 1;
};

/// Hurst index with the Hölder exponents used for norms:
/// 1/3 < beta < alpha < H <= 1/2. H = 1/2 is the Brownian reference case.
struct HurstParam {
  double H = 0.5;
  double alpha = 0.0;
  double beta = 0.0;

  static HurstParam make(double H, double alpha, double beta);
  /// alpha and beta placed strictly inside (1/3, H).
  static HurstParam with_defaults(double H);
  bool brownian() const noexcept { return H == 0.5; }
};

struct MixedDriverPath {
  TimeGrid grid;
  HurstParam hurst;
  PathMatrix bH;  ///< (n+1) x d fractional component
  PathMatrix w;   ///< (n+1) x e Brownian component

  std::size_t d() const noexcept { return static_cast<std::size_t>(bH.cols()); }
  std::size_t e() const noexcept { return static_cast<std::size_t>(w.cols()); }
  /// [bH | w] as one (n+1) x (d+e) path.
  PathMatrix joined() const;
};

enum class FbmMethod { automatic, circulant, cholesky };

/// Exact-covariance fBm sample, one independent column per component.
/// Circulant embedding, falling back to Cholesky when the embedding is not
/// nonnegative definite. Deterministic given the seed.
PathMatrix sample_fbm(const TimeGrid& grid, double H, std::size_t dim, std::uint64_t seed,
                      FbmMethod method = FbmMethod::automatic);
PathMatrix sample_fbm(const TimeGrid& grid, const HurstParam& hurst, std::size_t dim,
                      std::uint64_t seed, FbmMethod method = FbmMethod::automatic);

PathMatrix sample_bm(const TimeGrid& grid, std::size_t dim, std::uint64_t seed);

/// (b^H, w) with independent streams derived from one seed.
MixedDriverPath sample_mixed(const TimeGrid& grid, const HurstParam& hurst, std::size_t d,
                             std::size_t e, std::uint64_t seed);

/// Covariance of the fGn increment vector on a grid together with its
/// Cholesky factor L (a lower-triangular, i.e. causal, discrete Volterra
/// representation: increments = L * xi with xi standard normal).
class IncrementCovariance {
 public:
  IncrementCovariance(const TimeGrid& grid, double H);

  const Matrix& covariance() const noexcept { return cov_; }
  const Matrix& factor() const noexcept { return chol_; }
  /// L * xi, column by column.
  PathMatrix color(const PathMatrix& xi) const;
  /// L^{-1} * increments, column by column.
  PathMatrix whiten(const PathMatrix& increments) const;

 private:
  double H_;
  Matrix cov_;
  Matrix chol_;
};

/// fBm driven by explicitly kept white noise: path increments = L * xi.
struct WhitenedFbm {
  PathMatrix path;
  PathMatrix xi;  ///< n x dim standard normals
};
WhitenedFbm sample_fbm_whitened(const TimeGrid& grid, double H, std::size_t dim,
                                std::uint64_t seed);

/// Volterra kernel K_H(t, s) of fBm (b_t = int_0^t K_H(t,s) dW_s), s in (0, t).
/// For H = 1/2 this is the indicator 1_{s<t}.
double volterra_kernel(double H, double t, double s);

/// int_a^b K_H(t, s) ds for 0 <= a < b <= t, resolving the endpoint
/// singularities at s = 0 and s = t.
double volterra_cell_integral(double H, double t, double a, double b);

/// Cameron–Martin element (u, v) in Volterra coordinates:
///   u_t = int_0^t K_H(t,s) udot_s ds,  v_t = int_0^t vdot_s ds,
/// piecewise constant coefficients per step, ||(u,v)||^2 = ||udot||^2 + ||vdot||^2.
struct CameronMartinControl {
  TimeGrid grid;
  double H = 0.5;
  PathMatrix udot;  ///< n x d
  PathMatrix vdot;  ///< n x e
  double sq_norm = 0.0;

  static CameronMartinControl make(const TimeGrid& grid, double H, PathMatrix udot,
                                   PathMatrix vdot);
  static CameronMartinControl zero(const TimeGrid& grid, double H, std::size_t d, std::size_t e);

  std::size_t d() const noexcept { return static_cast<std::size_t>(udot.cols()); }
  std::size_t e() const noexcept { return static_cast<std::size_t>(vdot.cols()); }
  CameronMartinControl scaled(double factor) const;
};

double cm_norm(const CameronMartinControl& ctrl);

/// Per-step increments of (u, v), n x dim each.
std::pair<PathMatrix, PathMatrix> cm_increments(const CameronMartinControl& ctrl);

/// Paths (u, v) on the control grid, both (n+1) x dim and starting at 0.
std::pair<PathMatrix, PathMatrix> cm_to_path(const CameronMartinControl& ctrl);

/// Increment map D with (u_{k+1} - u_k) = sum_j D(k, j) udot_j for a single
/// component. For H = 1/2 this is h * I. Cached per (grid, H).
std::shared_ptr<const Matrix> volterra_increment_matrix(const TimeGrid& grid, double H);

/// Largest grid for which the dense Volterra matrix is built.
inline constexpr std::size_t kMaxVolterraSteps = 4096;

/// CSV with header t,comp_0,...,comp_{k-1}; 17 significant digits.
void write_path_csv(std::ostream& out, const TimeGrid& grid, const PathMatrix& path);
std::pair<TimeGrid, PathMatrix> read_path_csv(std::istream& in);

/// Control CSV: a `# horizon=<T> hurst=<H> d=<d> e=<e>` line, then
/// t,udot_0..,vdot_0.. with one row per step (t = step start).
void write_control_csv(std::ostream& out, const CameronMartinControl& ctrl);
CameronMartinControl read_control_csv(std::istream& in);

}  // namespace roughflow
