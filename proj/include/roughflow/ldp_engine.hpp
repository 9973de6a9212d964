#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <vector>

#include "roughflow/gaussian_drivers.hpp"
#include "roughflow/slowfast_sim.hpp"
#include "roughflow/types.hpp"

namespace roughflow {

enum class TargetKind { terminal, tube };

/// Terminal point xi_T, or a sup-norm tube of radius `radius` around `path`
/// ((n+1) x m on the problem grid).
struct RateTarget {
  TargetKind kind = TargetKind::terminal;
  Vector terminal;
  PathMatrix path;
  double radius = 0.0;

  static RateTarget point(Vector xi);
  static RateTarget tube(PathMatrix path, double radius);
};

/// Quadratic penalty weights lambda_j = initial * factor^j, j < stages.
struct PenaltySchedule {
  double initial = 10.0;
  double factor = 10.0;
  std::size_t stages = 6;
};

struct OptimizerSettings {
  std::size_t max_iters = 2000;
  double tolerance = 1e-4;   ///< feasibility threshold on the constraint residual
  std::size_t restarts = 3;  ///< zero start plus restarts - 1 random starts
  double random_scale = 1.0;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
};

struct RateProblem {
  SlowFastModel model;
  DriftField fbar;  ///< empty means the registered averaged drift
  TimeGrid grid;
  double H = 0.5;
  Vector x0;
  RateTarget target;
  PenaltySchedule penalty;
  OptimizerSettings optimizer;
  /// Extra starting points; each is also scored as-is when feasible.
  std::vector<CameronMartinControl> candidates;
};

struct RateResult {
  CameronMartinControl u_star;  ///< vdot is identically zero
  double value = 0.0;           ///< 1/2 ||u_star||^2
  double constraint_residual = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  PathMatrix skeleton;  ///< skeleton of u_star on the problem grid
};

/// Objective 1/2 sum |udot_k|^2 h + lambda P(skeleton) and its adjoint
/// gradient with respect to udot (flattened row-major n x d).
struct RateObjective {
  explicit RateObjective(RateProblem problem);

  double evaluate(const double* udot, double lambda, double* gradient) const;
  /// Residual of the skeleton driven by udot: |X_T - xi| or the sup excess
  /// over the tube radius (0 inside).
  double residual(const double* udot) const;
  std::size_t size() const noexcept { return n_ * d_; }

 private:
  void forward(const double* udot, PathMatrix& x, PathMatrix& du) const;

  RateProblem problem_;
  DriftField fbar_;
  std::size_t n_ = 0, m_ = 0, d_ = 0;
  double h_ = 0.0;
  std::shared_ptr<const Matrix> volterra_;
  VectorField slow_;
};

/// Penalty-continuation L-BFGS over udot with multi-start; returns the best
/// feasible result or throws InfeasibleError with the best residual.
RateResult solve_rate(const RateProblem& problem);

/// 1/2 ||u||^2 when the skeleton of u meets the target, else +infinity.
double rate_along_path(const RateProblem& problem, const CameronMartinControl& u);

inline constexpr double kRateInfinity = std::numeric_limits<double>::infinity();

enum class Estimator { plain, importance };

struct ProbeSettings {
  std::vector<double> eps_list{0.5, 0.2, 0.1};
  double delta_ratio = 0.1;  ///< delta = ratio * eps
  std::size_t n_mc = 1000;
  Estimator estimator = Estimator::plain;
  std::size_t refine = 1;
  std::size_t micro_steps = 0;
  double block = 0.0;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
};

struct ProbeRow {
  double eps = 0.0;
  double delta = 0.0;
  double p_hat = 0.0;
  double stderr_p = 0.0;
  double neg_eps_log_p = std::numeric_limits<double>::quiet_NaN();  ///< NaN when p_hat = 0
  double stderr_log = std::numeric_limits<double>::quiet_NaN();
  double upper_95 = 0.0;  ///< one-sided bound 3 / n_mc when there are no hits
  std::size_t hits = 0;
  std::size_t n_mc = 0;
};

/// P(sup_t |X_t - center_t| < radius) for the slow component. Importance
/// sampling shifts the whitened driver by the tilt control and reweights
/// with the Gaussian likelihood ratio (refine must be 1).
std::vector<ProbeRow> mc_probability(const SlowFastModel& model, const HurstParam& hurst,
                                     const TimeGrid& grid, const VecIn& x0, const VecIn& y0,
                                     const PathMatrix& center, double radius,
                                     const CameronMartinControl* tilt, const ProbeSettings& settings);

struct WeakConvergenceRow {
  double eps = 0.0;
  double delta = 0.0;
  MeanSe proxy;  ///< E min(1, ||X - skeleton||_inf)
  std::size_t n_mc = 0;
};

struct WeakConvergenceTable {
  std::vector<WeakConvergenceRow> rows;
  bool decreasing = false;  ///< proxy strictly decreasing along the rows
};

/// Controlled slow-fast runs against the skeleton of `ctrl` (fixed across
/// eps) with delta = delta_of(eps). Seeds are shared across rows.
WeakConvergenceTable weak_convergence_probe(const SlowFastModel& model, const std::vector<double>& eps_list,
                                            const std::function<double(double)>& delta_of,
                                            const CameronMartinControl& ctrl, const ExperimentSetup& setup,
                                            const DriftField& fbar = nullptr);

}  // namespace roughflow
