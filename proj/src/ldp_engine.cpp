#include "roughflow/ldp_engine.hpp"

#include <ceres/first_order_function.h>
#include <ceres/gradient_problem.h>
#include <ceres/gradient_problem_solver.h>

#include <algorithm>
#include <cmath>

#include "roughflow/error.hpp"
#include "roughflow/parallel.hpp"
#include "roughflow/random.hpp"

namespace roughflow {
namespace {

constexpr std::uint64_t kRestartStream = 0x4000;
constexpr std::uint64_t kTiltStream = 0x4100;

/// The penalty pulls the skeleton inside this fraction of the tube radius.
constexpr double kTubeMargin = 0.99;

double softplus(double z, double sharp) {
  const double a = sharp * z;
  return (a > 30.0 ? a : std::log1p(std::exp(a))) / sharp;
}

double sigmoid(double z, double sharp) {
  const double a = sharp * z;
  return a >= 0 ? 1.0 / (1.0 + std::exp(-a)) : std::exp(a) / (1.0 + std::exp(a));
}

DriftField resolve_fbar(const RateProblem& p) { return p.fbar ? p.fbar : analytic_averaged_drift(p.model); }

void check_problem(const RateProblem& p) {
  const std::size_t m = p.model.m;
  if (static_cast<std::size_t>(p.x0.size()) != m) throw ParameterError("rate problem: x0 has the wrong dimension");
  if (p.target.kind == TargetKind::terminal) {
    if (static_cast<std::size_t>(p.target.terminal.size()) != m) {
      throw ParameterError("rate problem: terminal target has the wrong dimension");
    }
  } else {
    if (!(p.target.radius > 0.0)) throw ParameterError("rate problem: tube radius must be positive");
    if (static_cast<std::size_t>(p.target.path.rows()) != p.grid.size() ||
        static_cast<std::size_t>(p.target.path.cols()) != m) {
      throw ParameterError("rate problem: tube path must be (n+1) x m on the problem grid");
    }
  }
  if (!(p.penalty.initial > 0.0 && p.penalty.factor > 1.0 && p.penalty.stages >= 1)) {
    throw ParameterError("rate problem: penalty schedule must be positive and increasing");
  }
  if (p.grid.steps() > kMaxVolterraSteps && p.H != 0.5) {
    throw ResourceError("rate problem: grid exceeds the Volterra matrix limit");
  }
}

double target_residual(const RateTarget& target, const PathMatrix& x) {
  if (target.kind == TargetKind::terminal) {
    return (x.row(x.rows() - 1).transpose() - target.terminal).norm();
  }
  double worst = 0.0;
  for (Eigen::Index k = 0; k < x.rows(); ++k) worst = std::max(worst, (x.row(k) - target.path.row(k)).norm());
  return std::max(0.0, worst - target.radius);
}

bool meets_target(const RateProblem& p, double residual) {
  return p.target.kind == TargetKind::tube ? residual <= 0.0 : residual <= p.optimizer.tolerance;
}

class CeresAdapter final : public ceres::FirstOrderFunction {
 public:
  CeresAdapter(const RateObjective& obj, double lambda) : obj_(obj), lambda_(lambda) {}
  bool Evaluate(const double* params, double* cost, double* gradient) const override {
    *cost = obj_.evaluate(params, lambda_, gradient);
    return std::isfinite(*cost);
  }
  int NumParameters() const override { return static_cast<int>(obj_.size()); }

 private:
  const RateObjective& obj_;
  double lambda_;
};

struct StartOutcome {
  Vector udot;
  double value = kRateInfinity;
  double residual = kRateInfinity;
  std::size_t iterations = 0;
  bool converged = false;
};

}  // namespace

RateTarget RateTarget::point(Vector xi) {
  RateTarget t;
  t.kind = TargetKind::terminal;
  t.terminal = std::move(xi);
  return t;
}

RateTarget RateTarget::tube(PathMatrix path, double radius) {
  RateTarget t;
  t.kind = TargetKind::tube;
  t.path = std::move(path);
  t.radius = radius;
  return t;
}

RateObjective::RateObjective(RateProblem problem) : problem_(std::move(problem)) {
  check_problem(problem_);
  fbar_ = resolve_fbar(problem_);
  n_ = problem_.grid.steps();
  m_ = problem_.model.m;
  d_ = problem_.model.d;
  h_ = problem_.grid.step();
  if (problem_.H != 0.5) volterra_ = volterra_increment_matrix(problem_.grid, problem_.H);
  slow_ = problem_.model.slow_field();
}

void RateObjective::forward(const double* udot, PathMatrix& x, PathMatrix& du) const {
  const Eigen::Map<const PathMatrix> u(udot, static_cast<Eigen::Index>(n_), static_cast<Eigen::Index>(d_));
  if (!volterra_) {
    du = u * h_;
  } else {
    du.resize(u.rows(), u.cols());
    for (Eigen::Index c = 0; c < u.cols(); ++c) du.col(c) = volterra_->triangularView<Eigen::Lower>() * Vector(u.col(c));
  }
  x.resize(n_ + 1, m_);
  Vector xk = problem_.x0, f(m_), next(m_);
  Matrix s(m_, d_);
  x.row(0) = xk.transpose();
  for (std::size_t k = 0; k < n_; ++k) {
    fbar_(xk, f);
    next = xk + h_ * f;
    problem_.model.sigma1(xk, s);
    next.noalias() += s * du.row(k).transpose();
    xk = next;
    x.row(k + 1) = xk.transpose();
  }
}

double RateObjective::residual(const double* udot) const {
  PathMatrix x, du;
  forward(udot, x, du);
  if (!x.allFinite()) return kRateInfinity;
  return target_residual(problem_.target, x);
}

double RateObjective::evaluate(const double* udot, double lambda, double* gradient) const {
  PathMatrix x, du;
  forward(udot, x, du);
  if (!x.allFinite() || x.cwiseAbs().maxCoeff() > kDivergenceCap) return kRateInfinity;
  const Eigen::Map<const Vector> u(udot, static_cast<Eigen::Index>(n_ * d_));
  double cost = 0.5 * h_ * u.squaredNorm();

  // dP/dx_k for every grid point, scaled by lambda.
  PathMatrix dp = PathMatrix::Zero(n_ + 1, m_);
  const RateTarget& target = problem_.target;
  if (target.kind == TargetKind::terminal) {
    const Vector e = x.row(n_).transpose() - target.terminal;
    cost += lambda * e.squaredNorm();
    dp.row(n_) = 2.0 * lambda * e.transpose();
  } else {
    const double rho = target.radius;
    const double sharp = 1000.0 / rho;
    const double inner = kTubeMargin * rho;
    for (std::size_t k = 0; k <= n_; ++k) {
      const Vector e = (x.row(k) - target.path.row(k)).transpose();
      const double dist = std::sqrt(e.squaredNorm() + 1e-30 * rho * rho);
      const double sp = softplus(dist - inner, sharp);
      cost += lambda * sp * sp;
      dp.row(k) = (2.0 * lambda * sp * sigmoid(dist - inner, sharp) / dist) * e.transpose();
    }
  }
  if (!gradient) return cost;

  // Backward sweep through x_{k+1} = x_k + h fbar(x_k) + sigma1(x_k) du_k.
  PathMatrix g(n_, d_);
  Vector p = dp.row(n_).transpose(), xk(m_), probe(m_), fp(m_), fm(m_), carry(m_);
  Matrix s(m_, d_), ds(m_ * m_, d_);
  for (std::size_t kk = n_; kk-- > 0;) {
    xk = x.row(kk).transpose();
    problem_.model.sigma1(xk, s);
    g.row(kk) = (s.transpose() * p).transpose();
    slow_.eval_dsigma(xk, ds);
    carry = p;
    probe = xk;
    for (std::size_t q = 0; q < m_; ++q) {
      const double step = 1e-6 * std::max(1.0, std::abs(xk(q)));
      probe(q) = xk(q) + step;
      fbar_(probe, fp);
      probe(q) = xk(q) - step;
      fbar_(probe, fm);
      probe(q) = xk(q);
      carry(q) += h_ * p.dot(fp - fm) / (2.0 * step);
      for (std::size_t r = 0; r < m_; ++r) {
        for (std::size_t i = 0; i < d_; ++i) carry(q) += p(r) * ds(r * m_ + q, i) * du(kk, i);
      }
    }
    p = carry + dp.row(kk).transpose();
  }
  Eigen::Map<PathMatrix> grad(gradient, static_cast<Eigen::Index>(n_), static_cast<Eigen::Index>(d_));
  if (!volterra_) {
    grad = h_ * g;
  } else {
    for (Eigen::Index c = 0; c < g.cols(); ++c) {
      grad.col(c) = volterra_->triangularView<Eigen::Lower>().transpose() * Vector(g.col(c));
    }
  }
  grad += h_ * Eigen::Map<const PathMatrix>(udot, static_cast<Eigen::Index>(n_), static_cast<Eigen::Index>(d_));
  return cost;
}

namespace {

StartOutcome run_start(const RateObjective& obj, const RateProblem& problem, Vector udot) {
  StartOutcome out;
  ceres::GradientProblemSolver::Options options;
  options.line_search_direction_type = ceres::LBFGS;
  options.max_num_iterations = static_cast<int>(problem.optimizer.max_iters);
  options.function_tolerance = 1e-14;
  options.gradient_tolerance = 1e-12;
  options.parameter_tolerance = 1e-14;
  options.logging_type = ceres::SILENT;
  options.minimizer_progress_to_stdout = false;
  double lambda = problem.penalty.initial;
  bool all_converged = true;
  for (std::size_t stage = 0; stage < problem.penalty.stages; ++stage, lambda *= problem.penalty.factor) {
    ceres::GradientProblem gp(new CeresAdapter(obj, lambda));
    ceres::GradientProblemSolver::Summary summary;
    ceres::Solve(options, gp, udot.data(), &summary);
    out.iterations += summary.iterations.size();
    if (stage + 1 == problem.penalty.stages) all_converged = summary.termination_type == ceres::CONVERGENCE;
  }
  out.residual = obj.residual(udot.data());
  out.value = 0.5 * problem.grid.step() * udot.squaredNorm();
  out.converged = all_converged;
  out.udot = std::move(udot);
  return out;
}

}  // namespace

RateResult solve_rate(const RateProblem& problem) {
  const RateObjective obj(problem);
  const std::size_t n = problem.grid.steps(), d = problem.model.d;
  const std::size_t dim = n * d;

  std::vector<Vector> starts;
  starts.push_back(Vector::Zero(static_cast<Eigen::Index>(dim)));
  for (std::size_t r = 1; r < std::max<std::size_t>(problem.optimizer.restarts, 1); ++r) {
    Rng rng = make_stream(problem.optimizer.seed, kRestartStream + r);
    std::normal_distribution<double> normal(0.0, problem.optimizer.random_scale);
    Vector v(dim);
    for (std::size_t i = 0; i < dim; ++i) v(i) = normal(rng);
    starts.push_back(std::move(v));
  }
  std::vector<StartOutcome> given;
  for (const auto& c : problem.candidates) {
    if (!(c.grid == problem.grid) || c.d() != d) throw ParameterError("rate problem: candidate does not match the grid");
    Vector v(dim);
    Eigen::Map<PathMatrix>(v.data(), n, d) = c.udot;
    starts.push_back(v);
    StartOutcome as_is;
    as_is.residual = obj.residual(v.data());
    as_is.value = 0.5 * cm_norm(c);
    as_is.udot = std::move(v);
    given.push_back(std::move(as_is));
  }

  std::vector<StartOutcome> outcomes(starts.size());
  parallel_for(starts.size(), resolve_workers(problem.optimizer.workers),
               [&](std::size_t i) { outcomes[i] = run_start(obj, problem, starts[i]); });
  for (auto& g : given) outcomes.push_back(std::move(g));

  const StartOutcome* best = nullptr;
  double best_residual = kRateInfinity;
  for (const auto& o : outcomes) {
    best_residual = std::min(best_residual, o.residual);
    if (!meets_target(problem, o.residual)) continue;
    if (!best || o.value < best->value) best = &o;
  }
  if (!best) {
    throw InfeasibleError("rate problem: no start reached the target (best residual " +
                              std::to_string(best_residual) + ")",
                          best_residual);
  }
  RateResult result;
  PathMatrix udot = Eigen::Map<const PathMatrix>(best->udot.data(), n, d);
  result.u_star = CameronMartinControl::make(problem.grid, problem.H, std::move(udot),
                                             PathMatrix::Zero(n, problem.model.e));
  result.value = 0.5 * cm_norm(result.u_star);
  result.skeleton = skeleton(problem.model, resolve_fbar(problem), problem.x0, problem.grid, &result.u_star);
  result.constraint_residual = target_residual(problem.target, result.skeleton);
  for (const auto& o : outcomes) result.iterations += o.iterations;
  result.converged = best->converged;
  return result;
}

double rate_along_path(const RateProblem& problem, const CameronMartinControl& u) {
  check_problem(problem);
  if (!(u.grid == problem.grid) || u.d() != problem.model.d) {
    throw ParameterError("rate_along_path: control does not match the problem");
  }
  const PathMatrix x = skeleton(problem.model, resolve_fbar(problem), problem.x0, problem.grid, &u);
  const double residual = target_residual(problem.target, x);
  return meets_target(problem, residual) ? 0.5 * cm_norm(u) : kRateInfinity;
}

// ----------------------------------------------------------- probabilities

std::vector<ProbeRow> mc_probability(const SlowFastModel& model, const HurstParam& hurst,
                                     const TimeGrid& grid, const VecIn& x0, const VecIn& y0,
                                     const PathMatrix& center, double radius,
                                     const CameronMartinControl* tilt, const ProbeSettings& settings) {
  if (!(radius > 0.0)) throw ParameterError("mc_probability: radius must be positive");
  if (static_cast<std::size_t>(center.rows()) != grid.size() || static_cast<std::size_t>(center.cols()) != model.m) {
    throw ParameterError("mc_probability: tube centre must be (n+1) x m on the grid");
  }
  if (settings.n_mc == 0) throw ParameterError("mc_probability: n_mc must be positive");
  const bool importance = settings.estimator == Estimator::importance;
  const std::size_t refine = settings.refine;
  if (importance) {
    if (refine != 1) throw ParameterError("importance sampling needs refine = 1");
    if (!tilt) throw ParameterError("importance sampling needs a tilt control");
    if (!(tilt->grid == grid) || tilt->d() != model.d || tilt->e() != model.e || tilt->H != hurst.H) {
      throw ParameterError("tilt control does not match the grid, dimensions or Hurst index");
    }
  }
  const TimeGrid fine = grid.refine(refine);
  const std::size_t n = grid.steps(), d = model.d, e = model.e;
  const double h = grid.step();
  std::unique_ptr<IncrementCovariance> cov;
  PathMatrix tilt_u, tilt_v;
  if (importance) {
    cov = std::make_unique<IncrementCovariance>(grid, hurst.H);
    auto inc = cm_increments(*tilt);
    tilt_u = cov->whiten(inc.first);
    tilt_v = inc.second / std::sqrt(h);
  }
  auto cumulate = [](const PathMatrix& inc) {
    PathMatrix out = PathMatrix::Zero(inc.rows() + 1, inc.cols());
    for (Eigen::Index k = 0; k < inc.rows(); ++k) out.row(k + 1) = out.row(k) + inc.row(k);
    return out;
  };

  std::vector<ProbeRow> rows;
  for (double eps : settings.eps_list) {
    ScaleParams sc;
    sc.eps = eps;
    sc.delta = settings.delta_ratio * eps;
    sc.block = settings.block;
    sc.micro_steps = settings.micro_steps;
    sc.max_delta_ratio = std::max(0.1, settings.delta_ratio);
    const ScaleParams scales = sc.resolved(grid, hurst.beta, refine);
    const double root = std::sqrt(eps);
    std::vector<double> weight(settings.n_mc, 0.0);
    std::vector<char> hit(settings.n_mc, 0);
    parallel_for(settings.n_mc, resolve_workers(settings.workers), [&](std::size_t r) {
      const std::uint64_t seed = derive_seed(settings.seed, r);
      MixedDriverPath driver;
      double log_w = 0.0;
      if (!importance) {
        driver = sample_mixed(fine, hurst, d, e, seed);
      } else {
        Rng rng = make_stream(seed, kTiltStream);
        std::normal_distribution<double> normal;
        PathMatrix xi(n, d), zeta(n, e);
        for (std::size_t k = 0; k < n; ++k) {
          for (std::size_t c = 0; c < d; ++c) xi(k, c) = normal(rng);
          for (std::size_t c = 0; c < e; ++c) zeta(k, c) = normal(rng);
        }
        const PathMatrix theta = tilt_u / root, theta_w = tilt_v / root;
        log_w = -(theta.cwiseProduct(xi).sum() + theta_w.cwiseProduct(zeta).sum()) -
                0.5 * (theta.squaredNorm() + theta_w.squaredNorm());
        driver.grid = grid;
        driver.hurst = hurst;
        driver.bH = cumulate(cov->color(xi + theta));
        driver.w = cumulate(std::sqrt(h) * (zeta + theta_w));
      }
      const auto path = integrate_slowfast(model, scales, driver, refine, x0, y0, nullptr, derive_seed(seed, 1));
      double worst = 0.0;
      for (std::size_t k = 0; k <= n; ++k) worst = std::max(worst, (path.slow.values.row(k) - center.row(k)).norm());
      if (worst < radius) {
        hit[r] = 1;
        weight[r] = std::exp(log_w);
      }
    });
    ProbeRow row;
    row.eps = eps;
    row.delta = scales.delta;
    row.n_mc = settings.n_mc;
    double sum = 0.0, sq = 0.0;
    for (std::size_t r = 0; r < settings.n_mc; ++r) {
      row.hits += static_cast<std::size_t>(hit[r]);
      sum += weight[r];
    }
    const double nn = static_cast<double>(settings.n_mc);
    row.p_hat = sum / nn;
    for (double w : weight) sq += (w - row.p_hat) * (w - row.p_hat);
    row.stderr_p = settings.n_mc > 1 ? std::sqrt(sq / (nn - 1.0) / nn) : 0.0;
    if (row.hits == 0) {
      row.p_hat = 0.0;
      row.upper_95 = 3.0 / nn;
    } else {
      row.upper_95 = row.p_hat + 1.6448536269514722 * row.stderr_p;
      row.neg_eps_log_p = row.p_hat >= 1.0 ? 0.0 : -eps * std::log(row.p_hat);
      row.stderr_log = eps * row.stderr_p / row.p_hat;
    }
    rows.push_back(row);
  }
  return rows;
}

WeakConvergenceTable weak_convergence_probe(const SlowFastModel& model, const std::vector<double>& eps_list,
                                            const std::function<double(double)>& delta_of,
                                            const CameronMartinControl& ctrl, const ExperimentSetup& setup_in,
                                            const DriftField& fbar_in) {
  ExperimentSetup setup = setup_in;
  setup.auxiliary = false;
  const DriftField fbar = fbar_in ? fbar_in : analytic_averaged_drift(model);
  AveragingReference reference;
  reference.fixed = skeleton(model, fbar, setup.x0, setup.grid, &ctrl);
  WeakConvergenceTable table;
  for (double eps : eps_list) {
    ScaleParams sc;
    sc.eps = eps;
    sc.delta = delta_of(eps);
    sc.max_delta_ratio = 1.0;
    const AveragingRow cell = averaging_cell(model, sc, setup, &ctrl, reference);
    table.rows.push_back({eps, cell.scales.delta, cell.bounded_error, cell.n_mc});
  }
  table.decreasing = true;
  for (std::size_t i = 1; i < table.rows.size(); ++i) {
    if (!(table.rows[i].proxy.mean < table.rows[i - 1].proxy.mean)) table.decreasing = false;
  }
  return table;
}

}  // namespace roughflow
