#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "roughflow/gaussian_drivers.hpp"
#include "roughflow/types.hpp"

namespace roughflow {

/// Level-2 rough path stored per consecutive grid interval. Values over any
/// (t_i, t_j) come from Chen composition, so Chen's relation holds by
/// construction.
class Level2RoughPath {
 public:
  Level2RoughPath() = default;
  /// inc is n x dim, area is n x (dim*dim) with area(k, i*dim + j) = X^{ij}_{t_k,t_{k+1}}.
  Level2RoughPath(TimeGrid grid, std::size_t dim, PathMatrix inc, PathMatrix area);
  static Level2RoughPath zero(const TimeGrid& grid, std::size_t dim);

  const TimeGrid& grid() const noexcept { return grid_; }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t steps() const noexcept { return grid_.steps(); }
  const PathMatrix& increments() const noexcept { return inc_; }
  const PathMatrix& areas() const noexcept { return area_; }

  double inc(std::size_t k, std::size_t i) const { return inc_(k, i); }
  double area(std::size_t k, std::size_t i, std::size_t j) const { return area_(k, i * dim_ + j); }

  /// (X^1_{t_s,t_t}, X^2_{t_s,t_t}) for grid indices s <= t.
  Vector first_between(std::size_t s, std::size_t t) const;
  Matrix second_between(std::size_t s, std::size_t t) const;

  /// Path of first-level values x_{t_k} - x_0, (n+1) x dim.
  PathMatrix trace() const;

  /// Components [first, first + count) with their own areas.
  Level2RoughPath block(std::size_t first, std::size_t count) const;
  /// Chen-compressed to a grid with steps / factor intervals.
  Level2RoughPath coarsen(std::size_t factor) const;

 private:
  TimeGrid grid_;
  std::size_t dim_ = 0;
  PathMatrix inc_;
  PathMatrix area_;
};

/// Convention for the Brownian-Brownian block of the mixed lift.
enum class BrownianArea { ito, geometric };

/// Upper bound on refined-grid entries (points x dim^2) handled by a lift.
inline constexpr std::size_t kLiftBudget = std::size_t{1} << 28;

/// Lift of (b^H, w) sampled on a grid refine x finer than the output grid.
/// fBm pairs use trapezoid (geometric) sums, Brownian pairs left-point sums,
/// I[b^H, w] left-point and I[w, b^H] = w (x) b^H - I[b^H, w]^T.
Level2RoughPath lift_mixed(const MixedDriverPath& fine, std::size_t refine,
                           BrownianArea convention = BrownianArea::ito, std::size_t workers = 1);

/// Piecewise-linear (geometric) lift of a deterministic path sampled on a
/// grid refine x finer than the output grid.
Level2RoughPath lift_path(const TimeGrid& fine_grid, const PathMatrix& path, std::size_t refine = 1);

/// Lift of the Cameron–Martin pair (u, v) on the control grid.
Level2RoughPath lift_cm(const CameronMartinControl& ctrl);

/// Translation of `base` in the direction h = (u, v). `driver` is the path
/// that was lifted into `base`, sampled on the refined grid
/// (steps * refine + 1 rows); h is interpolated linearly onto that grid and
/// every cross integral is a trapezoid sum.
Level2RoughPath translate(const Level2RoughPath& base, const PathMatrix& driver,
                          const CameronMartinControl& ctrl);

/// Translated dilated slow driver: lift of sqrt(eps) b^H + u from the fBm lift
/// `fbm_lift` of the refined path `fbm` (only the u block of ctrl is used).
Level2RoughPath translate_slow(const Level2RoughPath& fbm_lift, const PathMatrix& fbm, double eps,
                               const CameronMartinControl& ctrl);

/// (sqrt(eps) X^1, eps X^2).
Level2RoughPath dilate(const Level2RoughPath& rp, double eps);

enum class HolderMethod { automatic, exact, dyadic };

struct HolderReport {
  double exponent = 0.0;
  double first_level_norm = 0.0;
  double second_level_norm = 0.0;
  double triple_norm = 0.0;
  bool dyadic = false;  ///< sup taken over dyadic intervals only
};

/// Grid sup of |X^1_{s,t}| / (t-s)^a and |X^2_{s,t}| / (t-s)^{2a}. Exact is
/// O(n^2); dyadic restricts to dyadic intervals. Automatic picks dyadic above
/// 4096 steps.
HolderReport holder_norms(const Level2RoughPath& rp, double exponent,
                          HolderMethod method = HolderMethod::automatic);

/// Inhomogeneous distance ||X^1 - Y^1||_a + ||X^2 - Y^2||_{2a}.
double rough_distance(const Level2RoughPath& a, const Level2RoughPath& b, double exponent,
                      HolderMethod method = HolderMethod::automatic);

/// Hölder seminorm of a path (first level only); used for solutions.
double path_holder_norm(const TimeGrid& grid, const PathMatrix& path, double exponent,
                        HolderMethod method = HolderMethod::automatic);

/// JSON envelope {grid: {horizon, steps}, dim, inc, area}; lossless.
std::string to_json(const Level2RoughPath& rp);
Level2RoughPath rough_path_from_json(const std::string& text);

}  // namespace roughflow
