#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "roughflow/controlled_rde.hpp"
#include "roughflow/gaussian_drivers.hpp"
#include "roughflow/rough_lift.hpp"
#include "roughflow/types.hpp"

namespace roughflow {

using DriftField = std::function<void(const VecIn&, VecOut)>;

/// dX = f1(X, Y) dt + sigma1(X) d(eps B^H),
/// dY = f2(X, Y) dt / delta + sigma2(X, Y) dw / sqrt(delta).
struct SlowFastModel {
  using JointFn = std::function<void(const VecIn& x, const VecIn& y, VecOut out)>;
  using SlowMatFn = std::function<void(const VecIn& x, MatOut out)>;
  using JointMatFn = std::function<void(const VecIn& x, const VecIn& y, MatOut out)>;
  using GaussianFn = std::function<void(const VecIn& x, VecOut mean, MatOut cov)>;

  std::string name;
  std::size_t m = 1, n = 1, d = 1, e = 1;
  JointFn f1, f2;
  SlowMatFn sigma1;   ///< m x d
  SlowMatFn dsigma1;  ///< (m*m) x d, optional
  JointMatFn sigma2;  ///< n x e
  double L = 1.0, beta1 = 1.0, beta2 = 1.0;

  /// Registered Gaussian invariant law of the frozen fast equation, if known.
  GaussianFn gaussian_invariant;
  /// Registered closed-form averaged drift, if known.
  DriftField averaged;

  bool has_fast() const noexcept { return n > 0; }
  /// sigma1 as a vector field on R^m (no drift).
  VectorField slow_field() const;
};

struct LinearCoefficients {
  Matrix A;   ///< m x m, f1 = A x + B y
  Matrix B;   ///< m x n
  Matrix G;   ///< n x n, f2 = -G (y - K x)
  Matrix K;   ///< n x m
  Matrix S1;  ///< m x d
  Matrix S2;  ///< n x e
};

/// Linear slow drift, OU fast block. G must be symmetric positive definite.
SlowFastModel linear_model(const LinearCoefficients& c, const std::string& name = "linear");

/// Builtins: "linear-ou", "bistable-ou", "linear-slow". Unknown parameter
/// names are rejected.
SlowFastModel builtin_model(const std::string& name, const std::map<std::string, double>& params);
std::vector<std::string> builtin_model_names();

/// Sampled check of Lipschitz (A2), growth and dissipativity (A4) on
/// uniform points of [-radius, radius]. Throws ConfigError.
void check_assumptions(const SlowFastModel& model, double radius = 3.0, std::size_t samples = 1000,
                       std::uint64_t seed = 0);

struct ScaleParams {
  double eps = 0.1;
  double delta = 0.01;
  double block = 0.0;            ///< Khasminskii block length; 0 means default
  std::size_t micro_steps = 0;   ///< fast steps per macro step; 0 means default
  double max_delta_ratio = 0.1;  ///< delta <= ratio * eps

  /// Validates and fills defaults for the macro grid and exponent beta:
  /// block = delta^{1/(4 beta)} log(1/delta) rounded to a grid multiple,
  /// micro_steps = max(16, ceil(h / (delta / 16))) rounded up to a multiple
  /// of refine.
  ScaleParams resolved(const TimeGrid& grid, double beta, std::size_t refine = 1) const;
  std::size_t block_steps(const TimeGrid& grid) const;
};

struct SlowFastPath {
  TimeGrid grid;
  ControlledPath slow;  ///< X on the macro grid with Gubinelli derivative sigma1(X)
  PathMatrix fast;      ///< Y at macro grid points, (n+1) x n_fast
};

/// Brownian increments for the fast block on the micro grid: each fine
/// driver increment split into `per_fine` Gaussian pieces that sum to it.
/// Rows are micro steps, columns components.
PathMatrix fast_noise(const MixedDriverPath& driver, std::size_t per_fine, std::uint64_t seed);

/// Slow block by the Davie scheme against T^u(eps B^H) (or eps B^H without
/// control), fast block by Euler–Maruyama with X frozen over each macro step.
/// `driver` lives on the macro grid refined `refine` times; `scales` must be
/// resolved. The control, if any, lives on the macro grid.
SlowFastPath integrate_slowfast(const SlowFastModel& model, const ScaleParams& scales,
                                const MixedDriverPath& driver, std::size_t refine,
                                const VecIn& x0, const VecIn& y0,
                                const CameronMartinControl* ctrl, std::uint64_t seed);

/// The slow block's rough driver: T^u(eps B^H) from the fBm part of `driver`,
/// or eps B^H when ctrl is null.
Level2RoughPath slow_driver(const MixedDriverPath& driver, std::size_t refine, double eps,
                            const CameronMartinControl* ctrl);

/// Euler–Maruyama of dY = f2(x, Y) dt + sigma2(x, Y) dw on unit time scale.
PathMatrix frozen_fast(const SlowFastModel& model, const VecIn& x, const VecIn& y0, double horizon,
                       double micro_h, std::uint64_t seed);

struct InvariantMeasureEstimate {
  Vector frozen_x;
  Vector mean;
  Matrix covariance;
  Vector mean_se;      ///< batch-means standard error of the mean
  PathMatrix samples;  ///< thinned draws, n_samples x n
  std::size_t n_samples = 0;
  double burn_in = 0.0;
  bool drift_warning = false;  ///< halves disagree by more than 5 standard errors
};

/// Moments from one long frozen trajectory after burn-in (default 5 / beta2),
/// thinned to one draw per `spacing` time units (default 1 / beta1). The
/// chain starts at y0 (empty means the origin).
InvariantMeasureEstimate estimate_invariant_measure(const SlowFastModel& model, const VecIn& x,
                                                    std::size_t n_samples, double burn_in,
                                                    std::uint64_t seed, double spacing = 0.0,
                                                    double micro_h = 0.0, const Vector& y0 = Vector());

/// Monte Carlo average of f1(x, .) over the estimate's draws.
Vector averaged_drift(const SlowFastModel& model, const VecIn& x, const InvariantMeasureEstimate& est);
/// Registered closed form, else Gauss–Hermite over a registered Gaussian law.
Vector averaged_drift(const SlowFastModel& model, const VecIn& x);
/// Closed-form averaged drift as a field; throws if none is registered.
DriftField analytic_averaged_drift(const SlowFastModel& model);

/// f1-bar tabulated on a lattice with multilinear interpolation.
class AveragedDriftTable {
 public:
  AveragedDriftTable(const SlowFastModel& model, const Vector& lower, const Vector& upper,
                     std::size_t points, std::size_t n_samples, std::uint64_t seed,
                     std::size_t workers = 1);
  /// Lattice over the box of `visited` (rows = states) widened by 20%.
  static AveragedDriftTable around(const SlowFastModel& model, const PathMatrix& visited,
                                   std::size_t points, std::size_t n_samples, std::uint64_t seed,
                                   std::size_t workers = 1);

  void eval(const VecIn& x, VecOut out) const;
  DriftField field() const;
  const Vector& lower() const noexcept { return lower_; }
  const Vector& upper() const noexcept { return upper_; }

 private:
  std::size_t m_ = 0, points_ = 0;
  Vector lower_, upper_;
  std::vector<Vector> values_;
};

/// Skeleton by Young–Euler steps X_{k+1} = X_k + fbar(X_k) h + sigma1(X_k) u_{k,k+1};
/// ctrl == nullptr means u = 0. The v block is ignored.
PathMatrix skeleton(const SlowFastModel& model, const DriftField& fbar, const VecIn& x0,
                    const TimeGrid& grid, const CameronMartinControl* ctrl);

/// Without control: classical RK4 for dX = fbar(X) dt. With control: the
/// Young–Euler skeleton.
PathMatrix integrate_effective(const SlowFastModel& model, const DriftField& fbar, const VecIn& x0,
                               const TimeGrid& grid, const CameronMartinControl* ctrl);

/// Effective rough equation dX = fbar(X) dt + sigma1(X) dX^driver by the
/// same Davie scheme as the slow block.
PathMatrix integrate_effective(const SlowFastModel& model, const DriftField& fbar, const VecIn& x0,
                               const Level2RoughPath& driver);

/// Y-hat: Euler–Maruyama with the slow argument frozen at block starts and
/// the same micro noise as integrate_slowfast for the same (driver, seed).
PathMatrix auxiliary_fast(const SlowFastModel& model, const ScaleParams& scales,
                          const PathMatrix& slow_values, const MixedDriverPath& driver,
                          std::size_t refine, const VecIn& y0, std::uint64_t seed);

struct ExperimentSetup {
  TimeGrid grid;  ///< macro grid
  HurstParam hurst;
  std::size_t refine = 1;
  Vector x0, y0;
  std::size_t n_mc = 100;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  bool auxiliary = true;  ///< also run Y-hat for the aux_gap column
};

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

struct AveragingRow {
  ScaleParams scales;  ///< resolved
  MeanSe sup_error;      ///< E ||X - ref||_inf
  MeanSe bounded_error;  ///< E min(1, ||X - ref||_inf)
  MeanSe holder_sq;      ///< E ||X||_beta^2 (grid proxy)
  MeanSe fast_energy;    ///< int_0^T E|Y_t|^2 dt
  MeanSe aux_gap;        ///< int_0^T E|Y_t - Yhat_t|^2 dt
  std::size_t n_mc = 0;
};

/// What the slow path is compared with: a fixed path on the macro grid, or,
/// when `fbar` is set, the effective rough equation driven by the replica's
/// own slow driver.
struct AveragingReference {
  PathMatrix fixed;
  DriftField fbar;
};

/// One Monte Carlo cell: replicas r use driver seed derive_seed(seed, r), the
/// same across cells, and are merged in replica order.
AveragingRow averaging_cell(const SlowFastModel& model, const ScaleParams& scales,
                            const ExperimentSetup& setup, const CameronMartinControl* ctrl,
                            const AveragingReference& reference);

/// Rows for each scale against the effective rough equation with the same
/// noise (or the noise-free skeleton when `skeleton_reference`), f1-bar from
/// the registered closed form or a lattice table.
std::vector<AveragingRow> averaging_experiment(const SlowFastModel& model,
                                               const std::vector<ScaleParams>& scales_list,
                                               const ExperimentSetup& setup,
                                               const DriftField& fbar = nullptr,
                                               bool skeleton_reference = false);

/// f1-bar from the registry, else a lattice table over the box visited by a
/// few pilot runs at `pilot_scales`.
DriftField resolve_averaged_drift(const SlowFastModel& model, const ScaleParams& pilot_scales,
                                  const ExperimentSetup& setup);

/// Default beta for a Hurst index: the one in HurstParam::with_defaults.
double default_beta(double H);

}  // namespace roughflow
