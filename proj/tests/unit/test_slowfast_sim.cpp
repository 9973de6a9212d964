#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "roughflow/error.hpp"
#include "roughflow/random.hpp"
#include "roughflow/slowfast_sim.hpp"

using namespace roughflow;

namespace {

SlowFastModel ou(double gamma, double kappa, double s2, double b = 1.0) {
  return builtin_model("linear-ou", {{"gamma", gamma}, {"kappa", kappa}, {"s2", s2}, {"b", b}});
}

/// Asymptotic two-sample Kolmogorov–Smirnov p-value.
double ks_pvalue(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(double(i) / a.size() - double(j) / b.size()));
  }
  const double ne = double(a.size()) * b.size() / (a.size() + b.size());
  const double lam = (std::sqrt(ne) + 0.12 + 0.11 / std::sqrt(ne)) * d;
  double p = 0.0;
  for (int k = 1; k <= 100; ++k) p += 2.0 * ((k % 2) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lam * lam);
  return std::clamp(p, 0.0, 1.0);
}

ExperimentSetup small_setup(std::size_t steps, std::size_t n_mc) {
  ExperimentSetup s;
  s.grid = TimeGrid::make(1.0, steps);
  s.hurst = HurstParam::with_defaults(0.4);
  s.refine = 2;
  s.x0 = Vector::Ones(1);
  s.y0 = Vector::Zero(1);
  s.n_mc = n_mc;
  s.seed = 11;
  return s;
}

}  // namespace

TEST_CASE("builtin models and assumption checks") {
  for (const auto& name : builtin_model_names()) {
    const auto model = builtin_model(name, {});
    CHECK_NOTHROW(check_assumptions(model));
  }
  CHECK_THROWS_AS(builtin_model("linear-ou", {{"gamm", 1.0}}), ConfigError);
  CHECK_THROWS_AS(builtin_model("nope", {}), ConfigError);
  SlowFastModel bad = ou(1.0, 0.0, 1.0);
  bad.beta1 = 5.0;
  CHECK_THROWS_AS(check_assumptions(bad), ConfigError);
  bad = ou(1.0, 0.0, 1.0);
  bad.L = 0.1;
  CHECK_THROWS_AS(check_assumptions(bad), ConfigError);
}

TEST_CASE("scale parameters") {
  const TimeGrid g = TimeGrid::make(1.0, 256);
  ScaleParams sc;
  sc.eps = 0.1;
  sc.delta = 0.001;
  const auto r = sc.resolved(g, 0.36, 2);
  CHECK(r.micro_steps % 2 == 0);
  CHECK(r.micro_steps >= 16);
  const double raw = std::pow(0.001, 1.0 / (4 * 0.36)) * std::log(1000.0);
  CHECK(std::abs(r.block - raw) <= 0.5 * g.step() + 1e-12);
  CHECK(std::abs(r.block / g.step() - std::round(r.block / g.step())) < 1e-9);
  sc.delta = 0.2;
  CHECK_THROWS_AS(sc.resolved(g, 0.36), ParameterError);
  sc.delta = 0.05;
  CHECK_THROWS_AS(sc.resolved(g, 0.36), ParameterError);
  sc.max_delta_ratio = 1.0;
  CHECK_NOTHROW(sc.resolved(g, 0.36));
}

TEST_CASE("frozen OU invariant moments") {
  const auto model = ou(1.0, 1.0, std::sqrt(2.0));
  const auto est = estimate_invariant_measure(model, Vector::Constant(1, 2.0), 20000, 0.0, 5);
  CHECK(std::abs(est.mean(0) - 2.0) < 0.05 * 2.0);
  CHECK(std::abs(est.covariance(0, 0) - 1.0) < 0.05);
  CHECK_FALSE(est.drift_warning);
}

TEST_CASE("frozen OU chains: long run mean over many chains") {
  const auto model = ou(1.0, 1.0, 1.0);
  const Vector x = Vector::Constant(1, 1.5);
  std::vector<double> ends;
  for (std::uint64_t c = 0; c < 1000; ++c) {
    ends.push_back(frozen_fast(model, x, Vector::Zero(1), 8.0, 0.01, c)(800, 0));
  }
  double mean = 0.0, ss = 0.0;
  for (double v : ends) mean += v / ends.size();
  for (double v : ends) ss += (v - mean) * (v - mean);
  const double se = std::sqrt(ss / (ends.size() - 1) / ends.size());
  CHECK(std::abs(mean - 1.5) < 3 * se);
}

TEST_CASE("invariant estimate ignores x when the fast block does") {
  const auto model = ou(1.0, 0.0, 1.0);
  const auto a = estimate_invariant_measure(model, Vector::Constant(1, 0.0), 5000, 0.0, 1);
  const auto b = estimate_invariant_measure(model, Vector::Constant(1, 5.0), 5000, 0.0, 2);
  CHECK(std::abs(a.mean(0) - b.mean(0)) < 3 * std::hypot(a.mean_se(0), b.mean_se(0)));
}

TEST_CASE("chains from opposite starts merge") {
  const auto model = ou(1.0, 0.0, 1.0);
  const Vector x = Vector::Zero(1);
  const auto lo = estimate_invariant_measure(model, x, 5000, 0.0, 3, 0.0, 0.0, Vector::Constant(1, -10.0));
  const auto hi = estimate_invariant_measure(model, x, 5000, 0.0, 4, 0.0, 0.0, Vector::Constant(1, 10.0));
  CHECK(std::abs(lo.mean(0) - hi.mean(0)) < 3 * std::hypot(lo.mean_se(0), hi.mean_se(0)));
}

TEST_CASE("frozen autocovariance decays at the dissipation rate") {
  const auto model = ou(1.0, 0.0, 1.0);
  const auto path = frozen_fast(model, Vector::Zero(1), Vector::Zero(1), 2000.0, 0.01, 9);
  const Eigen::Index n = path.rows();
  const double mean = path.col(0).mean();
  auto acov = [&](Eigen::Index lag) {
    double acc = 0.0;
    for (Eigen::Index k = 0; k + lag < n; ++k) acc += (path(k, 0) - mean) * (path(k + lag, 0) - mean);
    return acc / double(n - lag);
  };
  // Least squares slope of log autocovariance over lags 0.1 .. 1.5.
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int cnt = 0;
  for (int lag = 10; lag <= 150; lag += 10) {
    const double t = lag * 0.01, y = std::log(acov(lag));
    sx += t;
    sy += y;
    sxx += t * t;
    sxy += t * y;
    ++cnt;
  }
  const double rate = -(cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
  const double target = model.beta1 / 2.0;
  CHECK(rate > target / 2.0);
  CHECK(rate < target * 2.0);
}

TEST_CASE("noise-free frozen flow settles at the root") {
  auto model = linear_model({Matrix::Constant(1, 1, -1.0), Matrix::Constant(1, 1, 1.0), Matrix::Constant(1, 1, 2.0),
                             Matrix::Constant(1, 1, 0.5), Matrix::Constant(1, 1, 1.0), Matrix::Zero(1, 1)});
  const auto path = frozen_fast(model, Vector::Constant(1, 3.0), Vector::Constant(1, -4.0), 20.0, 0.01, 1);
  CHECK(std::abs(path(path.rows() - 1, 0) - 1.5) < 1e-12);
}

TEST_CASE("averaged drift") {
  const double b = 1.0, kappa = 0.7;
  const auto model = ou(1.0, kappa, 1.0, b);
  const Vector x = Vector::Constant(1, 1.2);
  const double exact = -1.2 + b * kappa * 1.2;
  CHECK(averaged_drift(model, x)(0) == doctest::Approx(exact).epsilon(1e-14));
  SlowFastModel gh = model;
  gh.averaged = nullptr;
  CHECK(averaged_drift(gh, x)(0) == doctest::Approx(exact).epsilon(1e-12));
  const auto est = estimate_invariant_measure(model, x, 10000, 0.0, 8);
  const double mc = averaged_drift(model, x, est)(0);
  CHECK(std::abs(mc - exact) < 3 * b * est.mean_se(0));
  CHECK_THROWS_AS(averaged_drift(model, Vector::Constant(1, 1.3), est), ParameterError);

  SlowFastModel square = ou(1.0, 0.0, std::sqrt(2.0));
  square.f1 = [](const VecIn&, const VecIn& y, VecOut out) { out(0) = y(0) * y(0); };
  square.averaged = nullptr;
  CHECK(averaged_drift(square, x)(0) == doctest::Approx(1.0).epsilon(1e-12));
  const auto est2 = estimate_invariant_measure(square, x, 10000, 0.0, 4);
  CHECK(std::abs(averaged_drift(square, x, est2)(0) - 1.0) < 0.05);

  SlowFastModel flat = ou(1.0, 0.0, 1.0);
  flat.f1 = [](const VecIn& xx, const VecIn&, VecOut out) { out(0) = std::sin(xx(0)); };
  const auto est3 = estimate_invariant_measure(flat, x, 100, 0.0, 1);
  CHECK(averaged_drift(flat, x, est3)(0) == doctest::Approx(std::sin(1.2)).epsilon(1e-14));
}

TEST_CASE("drift table interpolates and refuses extrapolation") {
  SlowFastModel model = ou(1.0, 0.5, 1.0);
  const AveragedDriftTable table(model, Vector::Constant(1, -1.0), Vector::Constant(1, 1.0), 5, 4000, 3);
  Vector out(1);
  table.eval(Vector::Constant(1, 0.3), out);
  CHECK(std::abs(out(0) - (-0.3 + 0.5 * 0.3)) < 0.1);
  CHECK_THROWS_AS(table.eval(Vector::Constant(1, 1.5), out), ParameterError);
}

TEST_CASE("effective dynamics") {
  const auto model = builtin_model("linear-slow", {});
  const TimeGrid g = TimeGrid::make(1.0, 1024);
  const auto fbar = analytic_averaged_drift(model);
  const auto path = integrate_effective(model, fbar, Vector::Ones(1), g, nullptr);
  for (std::size_t k = 0; k <= 1024; k += 128) CHECK(std::abs(path(k, 0) - std::exp(-g.at(k))) < 1e-4);

  // sigma1 = 1, zero drift, u = c t.
  const TimeGrid g2 = TimeGrid::make(1.0, 64);
  auto ctrl = CameronMartinControl::zero(g2, 0.5, 1, 1);
  ctrl.udot.setConstant(0.75);
  const DriftField zero = [](const VecIn&, VecOut out) { out.setZero(); };
  SlowFastModel unit = builtin_model("linear-ou", {{"s1", 1.0}});
  const auto sk = skeleton(unit, zero, Vector::Constant(1, 0.5), g2, &ctrl);
  for (std::size_t k = 0; k <= 64; ++k) CHECK(sk(k, 0) == doctest::Approx(0.5 + 0.75 * g2.at(k)).epsilon(1e-13));

  auto ctrl_v = ctrl;
  ctrl_v.vdot.setConstant(-3.0);
  const auto fb = analytic_averaged_drift(unit);
  const PathMatrix a = skeleton(unit, fb, Vector::Ones(1), g2, &ctrl);
  const PathMatrix b = skeleton(unit, fb, Vector::Ones(1), g2, &ctrl_v);
  CHECK((a.array() == b.array()).all());
}

TEST_CASE("fast block decays without noise") {
  auto model = linear_model({Matrix::Constant(1, 1, -1.0), Matrix::Zero(1, 1), Matrix::Constant(1, 1, 1.0),
                             Matrix::Zero(1, 1), Matrix::Constant(1, 1, 0.3), Matrix::Zero(1, 1)});
  const TimeGrid g = TimeGrid::make(1.0, 128);
  const auto driver = sample_mixed(g, HurstParam::with_defaults(0.4), 1, 1, 2);
  ScaleParams sc;
  sc.eps = 0.1;
  sc.delta = 0.01;
  const auto path = integrate_slowfast(model, sc.resolved(g, 0.36), driver, 1, Vector::Ones(1),
                                       Vector::Constant(1, 2.0), nullptr, 3);
  CHECK(std::abs(path.fast(128, 0)) <= 2.0 * std::exp(-1.0 / (2 * 0.01)));
}

TEST_CASE("slow block equals the rough solver when decoupled") {
  const auto model = builtin_model("linear-ou", {{"b", 0.0}, {"a", 0.8}, {"s1", 0.6}});
  const TimeGrid fine = TimeGrid::make(1.0, 256);
  const auto driver = sample_mixed(fine, HurstParam::with_defaults(0.4), 1, 1, 17);
  ScaleParams sc;
  sc.eps = 0.2;
  sc.delta = 0.01;
  const TimeGrid macro = fine.coarsen(2);
  const auto path = integrate_slowfast(model, sc.resolved(macro, 0.36, 2), driver, 2, Vector::Ones(1),
                                       Vector::Zero(1), nullptr, 5);
  VectorField vf = model.slow_field();
  vf.drift = [](const VecIn& x, VecOut out) { out = -0.8 * x; };
  const auto ref = solve_rde(vf, dilate(lift_path(fine, driver.bH, 2), 0.2), Vector::Ones(1));
  CHECK((path.slow.values - ref.values).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("zero control reproduces the uncontrolled run bitwise") {
  const auto model = ou(1.0, 0.5, 1.0);
  const TimeGrid fine = TimeGrid::make(1.0, 128);
  const auto driver = sample_mixed(fine, HurstParam::with_defaults(0.4), 1, 1, 23);
  ScaleParams sc;
  sc.eps = 0.1;
  sc.delta = 0.005;
  const TimeGrid macro = fine.coarsen(2);
  const auto rs = sc.resolved(macro, 0.36, 2);
  const auto ctrl = CameronMartinControl::zero(macro, 0.4, 1, 1);
  const auto a = integrate_slowfast(model, rs, driver, 2, Vector::Ones(1), Vector::Zero(1), nullptr, 1);
  const auto b = integrate_slowfast(model, rs, driver, 2, Vector::Ones(1), Vector::Zero(1), &ctrl, 1);
  CHECK((a.slow.values.array() == b.slow.values.array()).all());
  CHECK((a.fast.array() == b.fast.array()).all());

  ScaleParams bad = sc;
  bad.delta = 0.2;
  CHECK_THROWS_AS(bad.resolved(macro, 0.36, 2), ParameterError);
}

TEST_CASE("auxiliary process shares the fast noise") {
  const auto model = ou(1.0, 1.0, 1.0);
  const TimeGrid fine = TimeGrid::make(1.0, 64);
  const auto driver = sample_mixed(fine, HurstParam::with_defaults(0.4), 1, 1, 31);
  const PathMatrix n1 = fast_noise(driver, 8, 4), n2 = fast_noise(driver, 8, 4);
  CHECK((n1.array() == n2.array()).all());
  for (std::size_t j = 0; j < 64; ++j) {
    CHECK(n1.middleRows(8 * j, 8).sum() == doctest::Approx(driver.w(j + 1, 0) - driver.w(j, 0)).epsilon(1e-12));
  }
  ScaleParams sc;
  sc.eps = 0.1;
  sc.delta = 0.005;
  sc.block = fine.step();
  const auto rs = sc.resolved(fine, 0.36);
  CHECK(rs.block_steps(fine) == 1);
  const auto path = integrate_slowfast(model, rs, driver, 1, Vector::Ones(1), Vector::Zero(1), nullptr, 4);
  const PathMatrix aux = auxiliary_fast(model, rs, path.slow.values, driver, 1, Vector::Zero(1), 4);
  CHECK((aux.array() == path.fast.array()).all());
}

TEST_CASE("auxiliary process on a constant slow path has the frozen law") {
  const auto model = ou(1.0, 1.0, 1.0);
  const TimeGrid g = TimeGrid::make(1.0, 16);
  ScaleParams sc;
  sc.eps = 0.1;
  sc.delta = 0.01;
  const auto rs = sc.resolved(g, 0.36);
  const PathMatrix slow = PathMatrix::Constant(17, 1, 0.8);
  std::vector<double> a, b;
  for (std::uint64_t r = 0; r < 300; ++r) {
    const auto driver = sample_mixed(g, HurstParam::with_defaults(0.4), 1, 1, derive_seed(50, r));
    a.push_back(auxiliary_fast(model, rs, slow, driver, 1, Vector::Zero(1), r)(16, 0));
    b.push_back(frozen_fast(model, Vector::Constant(1, 0.8), Vector::Zero(1), 100.0, 1.0 / 16, 1000 + r)
                    .bottomRows(1)(0, 0));
  }
  CHECK(ks_pvalue(a, b) > 0.01);
}

TEST_CASE("auxiliary gap shrinks with the scale ratio") {
  const auto model = ou(1.0, 0.2, 1.0);
  ExperimentSetup setup = small_setup(64, 40);
  auto ctrl = CameronMartinControl::zero(setup.grid, 0.4, 1, 1);
  ctrl.vdot.setConstant(2.0);
  const AveragingReference ref{skeleton(model, analytic_averaged_drift(model), setup.x0, setup.grid, &ctrl), nullptr};
  double prev = 1e300;
  for (double ratio : {1e-1, 1e-2, 1e-3}) {
    ScaleParams sc;
    sc.eps = 0.1;
    sc.delta = ratio * sc.eps;
    sc.block = 4 * setup.grid.step();
    const auto row = averaging_cell(model, sc, setup, &ctrl, ref);
    CHECK(row.aux_gap.mean < prev);
    prev = row.aux_gap.mean;
  }
}

TEST_CASE("averaging cells are reproducible across worker counts") {
  const auto model = ou(1.0, 1.0, 1.0);
  ExperimentSetup setup = small_setup(32, 6);
  ScaleParams sc;
  sc.eps = 0.1;
  sc.delta = 0.01;
  const AveragingReference ref{PathMatrix(), analytic_averaged_drift(model)};
  setup.workers = 1;
  const auto a = averaging_cell(model, sc, setup, nullptr, ref);
  setup.workers = 3;
  const auto b = averaging_cell(model, sc, setup, nullptr, ref);
  CHECK(a.sup_error.mean == b.sup_error.mean);
  CHECK(a.fast_energy.se == b.fast_energy.se);
  CHECK(a.bounded_error.mean <= 1.0);
}
