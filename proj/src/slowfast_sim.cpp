#include "roughflow/slowfast_sim.hpp"

#include <algorithm>
#include <cmath>

#include "roughflow/error.hpp"
#include "roughflow/parallel.hpp"
#include "roughflow/quadrature.hpp"
#include "roughflow/random.hpp"

namespace roughflow {
namespace {

constexpr std::uint64_t kMicroStream = 0x3000;
constexpr std::uint64_t kFrozenStream = 0x3100;
constexpr std::uint64_t kCheckStream = 0x3200;

double spectral_norm(const Matrix& a) {
  if (a.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(a);
  return svd.singularValues()(0);
}

void check_state(const VecIn& v, const char* where, std::size_t step) {
  if (!v.allFinite() || v.norm() > kDivergenceCap) throw DivergenceError(where, step);
}

MeanSe summarize(const std::vector<double>& xs) {
  MeanSe out;
  if (xs.empty()) return out;
  const double n = static_cast<double>(xs.size());
  double sum = 0.0;
  for (double x : xs) sum += x;
  out.mean = sum / n;
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - out.mean) * (x - out.mean);
    out.se = std::sqrt(ss / (n - 1.0) / n);
  }
  return out;
}

/// Standard error of column means from about sqrt(rows) contiguous batches.
Vector batch_mean_se(const PathMatrix& samples) {
  const auto rows = static_cast<std::size_t>(samples.rows());
  const std::size_t batches = std::max<std::size_t>(2, static_cast<std::size_t>(std::sqrt(static_cast<double>(rows))));
  const std::size_t size = rows / batches;
  Vector out = Vector::Zero(samples.cols());
  if (size == 0) return out;
  Matrix means(batches, samples.cols());
  for (std::size_t b = 0; b < batches; ++b) {
    means.row(b) = samples.middleRows(b * size, size).colwise().mean();
  }
  const Eigen::RowVectorXd grand = means.colwise().mean();
  for (Eigen::Index c = 0; c < samples.cols(); ++c) {
    const double ss = (means.col(c).array() - grand(c)).square().sum();
    out(c) = std::sqrt(ss / static_cast<double>(batches - 1) / static_cast<double>(batches));
  }
  return out;
}

/// Solves G C + C G^T = Q for small G.
Matrix lyapunov(const Matrix& G, const Matrix& Q) {
  const Eigen::Index n = G.rows();
  const Matrix I = Matrix::Identity(n, n);
  Matrix kron(n * n, n * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      kron.block(i * n, j * n, n, n) = I(i, j) * G + G(i, j) * I;
    }
  }
  const Vector q = Eigen::Map<const Vector>(Q.data(), n * n);
  const Vector c = kron.fullPivLu().solve(q);
  Matrix C = Eigen::Map<const Matrix>(c.data(), n, n);
  return 0.5 * (C + C.transpose());
}

}  // namespace

VectorField SlowFastModel::slow_field() const {
  VectorField vf;
  vf.state_dim = m;
  vf.noise_dim = d;
  vf.sigma = sigma1;
  vf.dsigma = dsigma1;
  return vf;
}

// ----------------------------------------------------------------- models

SlowFastModel linear_model(const LinearCoefficients& c, const std::string& name) {
  const auto m = static_cast<std::size_t>(c.A.rows());
  const auto n = static_cast<std::size_t>(c.G.rows());
  const auto d = static_cast<std::size_t>(c.S1.cols());
  const auto e = static_cast<std::size_t>(c.S2.cols());
  auto shape = [](const Matrix& a, std::size_t r, std::size_t k, const char* what) {
    if (static_cast<std::size_t>(a.rows()) != r || static_cast<std::size_t>(a.cols()) != k) {
      throw ParameterError(std::string("linear model: ") + what + " has the wrong shape");
    }
  };
  shape(c.A, m, m, "A");
  shape(c.B, m, n, "B");
  shape(c.G, n, n, "G");
  shape(c.K, n, m, "K");
  shape(c.S1, m, d, "S1");
  shape(c.S2, n, e, "S2");
  if (m == 0 || d == 0) throw ParameterError("linear model: slow block needs m, d >= 1");

  SlowFastModel model;
  model.name = name;
  model.m = m;
  model.n = n;
  model.d = d;
  model.e = e;
  const Matrix A = c.A, B = c.B, G = c.G, K = c.K, S1 = c.S1, S2 = c.S2;
  model.f1 = [A, B](const VecIn& x, const VecIn& y, VecOut out) {
    out.noalias() = A * x;
    if (y.size() > 0) out.noalias() += B * y;
  };
  model.f2 = [G, K](const VecIn& x, const VecIn& y, VecOut out) { out.noalias() = -G * (y - K * x); };
  model.sigma1 = [S1](const VecIn&, MatOut out) { out = S1; };
  model.dsigma1 = [](const VecIn&, MatOut out) { out.setZero(); };
  model.sigma2 = [S2](const VecIn&, const VecIn&, MatOut out) { out = S2; };

  double lambda_min = 0.0;
  if (n > 0) {
    const Matrix sym = 0.5 * (G + G.transpose());
    lambda_min = Eigen::SelfAdjointEigenSolver<Matrix>(sym).eigenvalues().minCoeff();
    if (!(lambda_min > 0.0)) throw ParameterError("linear model: G must have positive definite symmetric part");
  }
  model.beta1 = n > 0 ? 2.0 * lambda_min : 1.0;
  model.beta2 = n > 0 ? lambda_min : 1.0;
  const double gk = n > 0 ? spectral_norm(G * K) : 0.0;
  const double growth = n > 0 ? std::max(gk * gk / lambda_min, S2.squaredNorm()) : 0.0;
  model.L = std::max({spectral_norm(A) + spectral_norm(B), n > 0 ? spectral_norm(G) + gk : 0.0,
                      growth, 1e-12});

  if (n > 0) {
    const Matrix cov = lyapunov(G, S2 * S2.transpose());
    model.gaussian_invariant = [K, cov](const VecIn& x, VecOut mean, MatOut out) {
      mean.noalias() = K * x;
      out = cov;
    };
  }
  const Matrix effective = n > 0 ? Matrix(A + B * K) : A;
  model.averaged = [effective](const VecIn& x, VecOut out) { out.noalias() = effective * x; };
  return model;
}

namespace {

double take(std::map<std::string, double>& params, const std::string& key, double fallback) {
  auto it = params.find(key);
  if (it == params.end()) return fallback;
  const double v = it->second;
  params.erase(it);
  return v;
}

void reject_leftovers(const std::map<std::string, double>& params, const std::string& model) {
  if (!params.empty()) {
    throw ConfigError("model.params." + params.begin()->first, "unknown parameter for " + model);
  }
}

}  // namespace

std::vector<std::string> builtin_model_names() { return {"linear-ou", "bistable-ou", "linear-slow"}; }

SlowFastModel builtin_model(const std::string& name, const std::map<std::string, double>& given) {
  auto params = given;
  auto scalar = [](double v) { return Matrix::Constant(1, 1, v); };
  if (name == "linear-ou") {
    const double a = take(params, "a", 1.0), b = take(params, "b", 1.0);
    const double gamma = take(params, "gamma", 1.0), kappa = take(params, "kappa", 0.0);
    const double s1 = take(params, "s1", 0.5), s2 = take(params, "s2", 1.0);
    reject_leftovers(params, name);
    return linear_model({scalar(-a), scalar(b), scalar(gamma), scalar(kappa), scalar(s1), scalar(s2)}, name);
  }
  if (name == "linear-slow") {
    const double a = take(params, "a", 1.0), s1 = take(params, "s1", 1.0);
    reject_leftovers(params, name);
    return linear_model({scalar(-a), Matrix(1, 0), Matrix(0, 0), Matrix(0, 1), scalar(s1), Matrix(0, 0)}, name);
  }
  if (name == "bistable-ou") {
    const double b = take(params, "b", 1.0);
    const double gamma = take(params, "gamma", 1.0), kappa = take(params, "kappa", 0.0);
    const double s1 = take(params, "s1", 0.5), s2 = take(params, "s2", 1.0);
    const double radius = take(params, "radius", 3.0);
    reject_leftovers(params, name);
    SlowFastModel model =
        linear_model({scalar(0.0), scalar(b), scalar(gamma), scalar(kappa), scalar(s1), scalar(s2)}, name);
    model.f1 = [b](const VecIn& x, const VecIn& y, VecOut out) { out(0) = x(0) - x(0) * x(0) * x(0) + b * y(0); };
    model.averaged = [b, kappa](const VecIn& x, VecOut out) {
      out(0) = x(0) - x(0) * x(0) * x(0) + b * kappa * x(0);
    };
    // Lipschitz only on the box |x| <= radius where the cubic is checked.
    model.L = std::max(model.L, 1.0 + 3.0 * radius * radius + std::abs(b));
    return model;
  }
  throw ConfigError("model.name", "unknown builtin model '" + name + "'");
}

void check_assumptions(const SlowFastModel& model, double radius, std::size_t samples,
                       std::uint64_t seed) {
  const std::size_t m = model.m, n = model.n, d = model.d, e = model.e;
  Rng rng = make_stream(seed, kCheckStream);
  std::uniform_real_distribution<double> unif(-radius, radius);
  auto draw = [&](Vector& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = unif(rng);
  };
  Vector x1(m), x2(m), y1(n), y2(n), a(m), b(m), p(n), q(n);
  Matrix s1(m, d), s2(m, d), t1(n, e), t2(n, e);
  const double L = model.L;
  constexpr double slack = 1e-9;
  for (std::size_t k = 0; k < samples; ++k) {
    draw(x1);
    draw(x2);
    draw(y1);
    draw(y2);
    const double dx = (x1 - x2).norm(), dy = (y1 - y2).norm();
    model.f1(x1, y1, a);
    model.f1(x2, y2, b);
    if ((a - b).norm() > (1 + slack) * L * (dx + dy) + slack) {
      throw ConfigError("model.A2", "f1 violates the Lipschitz bound L = " + std::to_string(L));
    }
    model.sigma1(x1, s1);
    model.sigma1(x2, s2);
    if ((s1 - s2).norm() > (1 + slack) * L * dx + slack) {
      throw ConfigError("model.A2", "sigma1 violates the Lipschitz bound");
    }
    if (n == 0) continue;
    model.f2(x1, y1, p);
    model.f2(x2, y2, q);
    if ((p - q).norm() > (1 + slack) * L * (dx + dy) + slack) {
      throw ConfigError("model.A2", "f2 violates the Lipschitz bound");
    }
    // Dissipativity at a common slow argument.
    model.f2(x1, y2, q);
    model.sigma2(x1, y1, t1);
    model.sigma2(x1, y2, t2);
    const double dissip = 2.0 * (y1 - y2).dot(p - q) + (t1 - t2).squaredNorm();
    if (dissip > -model.beta1 * dy * dy + slack * (1 + dy * dy)) {
      throw ConfigError("model.A4", "fast block is not dissipative with beta1 = " + std::to_string(model.beta1));
    }
    const double growth = 2.0 * y1.dot(p) + t1.squaredNorm();
    if (growth > -model.beta2 * y1.squaredNorm() + L * x1.squaredNorm() + L + slack) {
      throw ConfigError("model.A4", "fast block violates the growth bound with beta2 = " + std::to_string(model.beta2));
    }
  }
}

// ------------------------------------------------------------------ scales

ScaleParams ScaleParams::resolved(const TimeGrid& grid, double beta, std::size_t refine) const {
  if (!(eps > 0.0 && eps <= 1.0)) throw ParameterError("eps must lie in (0, 1]");
  if (!(delta > 0.0)) throw ParameterError("delta must be positive");
  if (!(delta < eps)) throw ParameterError("delta must be smaller than eps");
  if (delta > max_delta_ratio * eps * (1.0 + 1e-12)) {
    throw ParameterError("delta / eps exceeds max_delta_ratio = " + std::to_string(max_delta_ratio));
  }
  if (!(beta > 0.0 && beta < 1.0)) throw ParameterError("beta must lie in (0, 1)");
  if (refine == 0) throw ParameterError("refine must be >= 1");
  ScaleParams out = *this;
  const double h = grid.step();
  const double raw = block > 0.0 ? block : std::pow(delta, 1.0 / (4.0 * beta)) * std::log(1.0 / delta);
  const auto k = static_cast<std::size_t>(std::clamp(std::round(raw / h), 1.0, static_cast<double>(grid.steps())));
  out.block = static_cast<double>(k) * h;
  std::size_t micro = micro_steps;
  if (micro == 0) micro = std::max<std::size_t>(16, static_cast<std::size_t>(std::ceil(h / (delta / 16.0) - 1e-9)));
  out.micro_steps = ((micro + refine - 1) / refine) * refine;
  return out;
}

std::size_t ScaleParams::block_steps(const TimeGrid& grid) const {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::round(block / grid.step())));
}

// ----------------------------------------------------------- integrators

PathMatrix fast_noise(const MixedDriverPath& driver, std::size_t per_fine, std::uint64_t seed) {
  if (per_fine == 0) throw ParameterError("fast_noise: need at least one micro step per fine step");
  const std::size_t N = driver.grid.steps(), e = driver.e();
  const double tau = driver.grid.step() / static_cast<double>(per_fine);
  const double sd = std::sqrt(tau);
  PathMatrix out(N * per_fine, e);
  Rng rng = make_stream(seed, kMicroStream);
  std::normal_distribution<double> normal;
  for (std::size_t j = 0; j < N; ++j) {
    for (std::size_t c = 0; c < e; ++c) {
      double sum = 0.0;
      for (std::size_t i = 0; i < per_fine; ++i) {
        const double z = sd * normal(rng);
        out(j * per_fine + i, c) = z;
        sum += z;
      }
      const double fix = (driver.w(j + 1, c) - driver.w(j, c) - sum) / static_cast<double>(per_fine);
      for (std::size_t i = 0; i < per_fine; ++i) out(j * per_fine + i, c) += fix;
    }
  }
  return out;
}

namespace {

void check_driver(const SlowFastModel& model, const MixedDriverPath& driver, std::size_t refine,
                  const ScaleParams& scales) {
  if (driver.d() != model.d || driver.e() != model.e) {
    throw ParameterError("driver dimensions do not match the model");
  }
  if (refine == 0 || driver.grid.steps() % refine != 0) throw ParameterError("refine must divide the driver grid");
  if (scales.micro_steps == 0 || scales.micro_steps % refine != 0 || scales.block <= 0.0) {
    throw ParameterError("scale parameters must be resolved for this grid");
  }
}

/// Euler–Maruyama over one macro step with slow argument x. When `slow_mean`
/// is given it receives the average of f1(x, y) over the left micro points.
void fast_macro_step(const SlowFastModel& model, const VecIn& x, VecOut y, const PathMatrix& noise,
                     std::size_t first_row, std::size_t count, double tau, double inv_delta,
                     double noise_scale, const Vector* drift_dir, Vector& f, Matrix& s,
                     Vector* slow_mean = nullptr, Vector* slow_tmp = nullptr) {
  if (slow_mean) slow_mean->setZero();
  for (std::size_t i = 0; i < count; ++i) {
    if (slow_mean) {
      model.f1(x, y, *slow_tmp);
      *slow_mean += *slow_tmp;
    }
    model.f2(x, y, f);
    model.sigma2(x, y, s);
    y += (tau * inv_delta) * f;
    y.noalias() += noise_scale * (s * noise.row(first_row + i).transpose());
    if (drift_dir) y.noalias() += s * *drift_dir;
  }
  if (slow_mean) *slow_mean /= static_cast<double>(count);
}

}  // namespace

Level2RoughPath slow_driver(const MixedDriverPath& driver, std::size_t refine, double eps,
                            const CameronMartinControl* ctrl) {
  const Level2RoughPath fbm = lift_path(driver.grid, driver.bH, refine);
  return ctrl ? translate_slow(fbm, driver.bH, eps, *ctrl) : dilate(fbm, eps);
}

SlowFastPath integrate_slowfast(const SlowFastModel& model, const ScaleParams& scales,
                                const MixedDriverPath& driver, std::size_t refine,
                                const VecIn& x0, const VecIn& y0,
                                const CameronMartinControl* ctrl, std::uint64_t seed) {
  check_driver(model, driver, refine, scales);
  if (!(scales.delta < scales.eps)) throw ParameterError("delta must be smaller than eps");
  const TimeGrid grid = driver.grid.coarsen(refine);
  const std::size_t N = grid.steps(), m = model.m, n = model.n;
  if (static_cast<std::size_t>(x0.size()) != m || static_cast<std::size_t>(y0.size()) != n) {
    throw ParameterError("initial state dimensions do not match the model");
  }
  if (ctrl && (!(ctrl->grid == grid) || ctrl->d() != model.d || ctrl->e() != model.e)) {
    throw ParameterError("control must live on the macro grid with dimensions (d, e)");
  }
  const double h = grid.step();
  const double eps = scales.eps, delta = scales.delta;

  const Level2RoughPath rough = slow_driver(driver, refine, eps, ctrl);

  SlowFastPath out;
  out.grid = grid;
  out.slow.grid = grid;
  out.slow.values.resize(N + 1, m);
  out.slow.gubinelli.resize(N + 1, m * model.d);
  out.slow.driver = rough.trace();
  out.fast.resize(N + 1, n);

  const VectorField vf = model.slow_field();
  DavieWorkspace ws(vf);
  Vector x = x0, y = y0, next(m), drift(m), ftmp(m), f(n), vstep(model.e);
  Matrix s(n, model.e);
  PathMatrix noise;
  const std::size_t micro = scales.micro_steps;
  const double tau = h / static_cast<double>(micro);
  if (n > 0) noise = fast_noise(driver, micro / refine, seed);
  const double inv_delta = 1.0 / delta;
  const double noise_scale = 1.0 / std::sqrt(delta);
  const double ctrl_scale = 1.0 / std::sqrt(eps * delta);

  out.slow.values.row(0) = x.transpose();
  out.fast.row(0) = y.transpose();
  for (std::size_t k = 0; k < N; ++k) {
    // The fast block runs first so the slow drift is averaged over it.
    if (n > 0) {
      const Vector* dir = nullptr;
      if (ctrl) {
        vstep = (ctrl_scale * tau) * ctrl->vdot.row(k).transpose();
        dir = &vstep;
      }
      fast_macro_step(model, x, y, noise, k * micro, micro, tau, inv_delta, noise_scale, dir, f, s, &drift, &ftmp);
      check_state(y, "integrate_slowfast (fast)", k + 1);
    } else {
      model.f1(x, y, drift);
    }
    davie_step(vf, x, rough.increments().row(k).data(), rough.areas().row(k).data(), h, drift, ws, next);
    for (std::size_t p = 0; p < m; ++p) {
      for (std::size_t i = 0; i < model.d; ++i) out.slow.gubinelli(k, p * model.d + i) = ws.sigma(p, i);
    }
    check_state(next, "integrate_slowfast (slow)", k + 1);
    x = next;
    out.slow.values.row(k + 1) = x.transpose();
    out.fast.row(k + 1) = y.transpose();
  }
  vf.eval_sigma(x, ws.sigma);
  for (std::size_t p = 0; p < m; ++p) {
    for (std::size_t i = 0; i < model.d; ++i) out.slow.gubinelli(N, p * model.d + i) = ws.sigma(p, i);
  }
  return out;
}

PathMatrix auxiliary_fast(const SlowFastModel& model, const ScaleParams& scales,
                          const PathMatrix& slow_values, const MixedDriverPath& driver,
                          std::size_t refine, const VecIn& y0, std::uint64_t seed) {
  check_driver(model, driver, refine, scales);
  const TimeGrid grid = driver.grid.coarsen(refine);
  const std::size_t N = grid.steps(), n = model.n;
  if (static_cast<std::size_t>(slow_values.rows()) != N + 1) {
    throw ParameterError("auxiliary_fast: slow path must live on the macro grid");
  }
  PathMatrix out(N + 1, n);
  if (n == 0) return out;
  const std::size_t micro = scales.micro_steps;
  const std::size_t block = scales.block_steps(grid);
  const double tau = grid.step() / static_cast<double>(micro);
  const PathMatrix noise = fast_noise(driver, micro / refine, seed);
  Vector y = y0, f(n), xb(model.m);
  Matrix s(n, model.e);
  out.row(0) = y.transpose();
  for (std::size_t k = 0; k < N; ++k) {
    xb = slow_values.row((k / block) * block).transpose();
    fast_macro_step(model, xb, y, noise, k * micro, micro, tau, 1.0 / scales.delta,
                    1.0 / std::sqrt(scales.delta), nullptr, f, s);
    check_state(y, "auxiliary_fast", k + 1);
    out.row(k + 1) = y.transpose();
  }
  return out;
}

PathMatrix frozen_fast(const SlowFastModel& model, const VecIn& x, const VecIn& y0, double horizon,
                       double micro_h, std::uint64_t seed) {
  if (!(horizon > 0.0 && micro_h > 0.0)) throw ParameterError("frozen_fast: horizon and step must be positive");
  if (model.n == 0) throw ParameterError("frozen_fast: model has no fast block");
  const auto steps = static_cast<std::size_t>(std::ceil(horizon / micro_h - 1e-9));
  const double tau = horizon / static_cast<double>(steps);
  const double sd = std::sqrt(tau);
  const std::size_t n = model.n, e = model.e;
  PathMatrix out(steps + 1, n);
  Rng rng = make_stream(seed, kFrozenStream);
  std::normal_distribution<double> normal;
  Vector y = y0, f(n), dw(e);
  Matrix s(n, e);
  out.row(0) = y.transpose();
  for (std::size_t k = 0; k < steps; ++k) {
    for (std::size_t c = 0; c < e; ++c) dw(c) = sd * normal(rng);
    model.f2(x, y, f);
    model.sigma2(x, y, s);
    y += tau * f;
    y.noalias() += s * dw;
    check_state(y, "frozen_fast", k + 1);
    out.row(k + 1) = y.transpose();
  }
  return out;
}

// ----------------------------------------------------- invariant measures

InvariantMeasureEstimate estimate_invariant_measure(const SlowFastModel& model, const VecIn& x,
                                                    std::size_t n_samples, double burn_in,
                                                    std::uint64_t seed, double spacing,
                                                    double micro_h, const Vector& y0) {
  if (model.n == 0) throw ParameterError("estimate_invariant_measure: model has no fast block");
  if (n_samples < 2) throw ParameterError("estimate_invariant_measure: need at least two samples");
  const std::size_t n = model.n, e = model.e;
  if (burn_in <= 0.0) burn_in = 5.0 / model.beta2;
  if (spacing <= 0.0) spacing = 1.0 / model.beta1;
  if (micro_h <= 0.0) micro_h = std::min(0.01, 0.02 / model.beta1);
  const auto thin = std::max<std::size_t>(1, static_cast<std::size_t>(std::round(spacing / micro_h)));
  const auto burn = static_cast<std::size_t>(std::ceil(burn_in / micro_h));
  const double sd = std::sqrt(micro_h);

  InvariantMeasureEstimate est;
  est.frozen_x = x;
  est.burn_in = burn_in;
  est.n_samples = n_samples;
  est.samples.resize(n_samples, n);
  Rng rng = make_stream(seed, kFrozenStream);
  std::normal_distribution<double> normal;
  if (y0.size() != 0 && static_cast<std::size_t>(y0.size()) != n) {
    throw ParameterError("estimate_invariant_measure: y0 has the wrong dimension");
  }
  Vector y = y0.size() != 0 ? y0 : Vector(Vector::Zero(n));
  Vector f(n), dw(e);
  Matrix s(n, e);
  auto advance = [&](std::size_t steps) {
    for (std::size_t k = 0; k < steps; ++k) {
      for (std::size_t c = 0; c < e; ++c) dw(c) = sd * normal(rng);
      model.f2(x, y, f);
      model.sigma2(x, y, s);
      y += micro_h * f;
      y.noalias() += s * dw;
    }
    check_state(y, "estimate_invariant_measure", 0);
  };
  advance(burn);
  for (std::size_t i = 0; i < n_samples; ++i) {
    advance(thin);
    est.samples.row(i) = y.transpose();
  }
  est.mean = est.samples.colwise().mean().transpose();
  const Matrix centred = est.samples.rowwise() - est.mean.transpose();
  est.covariance = centred.transpose() * centred / static_cast<double>(n_samples - 1);
  est.covariance = 0.5 * (est.covariance + est.covariance.transpose());

  est.mean_se = batch_mean_se(est.samples);
  const std::size_t half = n_samples / 2;
  const PathMatrix first = est.samples.topRows(half), second = est.samples.bottomRows(n_samples - half);
  const Vector m1 = first.colwise().mean().transpose(), m2 = second.colwise().mean().transpose();
  const Vector se1 = batch_mean_se(first), se2 = batch_mean_se(second);
  for (std::size_t c = 0; c < n; ++c) {
    if (std::abs(m1(c) - m2(c)) > 5.0 * std::hypot(se1(c), se2(c))) est.drift_warning = true;
  }
  return est;
}

Vector averaged_drift(const SlowFastModel& model, const VecIn& x, const InvariantMeasureEstimate& est) {
  if (est.frozen_x.size() != x.size() || (est.frozen_x - x).norm() > 1e-12 * (1.0 + x.norm())) {
    throw ParameterError("averaged_drift: invariant estimate belongs to a different slow state");
  }
  Vector acc = Vector::Zero(model.m), f(model.m);
  for (Eigen::Index i = 0; i < est.samples.rows(); ++i) {
    model.f1(x, est.samples.row(i).transpose(), f);
    acc += f;
  }
  return acc / static_cast<double>(est.samples.rows());
}

namespace {

Vector gauss_hermite_average(const SlowFastModel& model, const VecIn& x) {
  const std::size_t n = model.n;
  if (n > 6) throw ParameterError("Gaussian averaging supports at most 6 fast components");
  Vector mean(n);
  Matrix cov(n, n);
  model.gaussian_invariant(x, mean, cov);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
  const Matrix root = eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
  static const int kPoints[] = {1, 24, 16, 10, 7, 5, 4};
  const QuadratureRule rule = gauss_hermite(kPoints[n]);
  const std::size_t p = rule.nodes.size();
  std::size_t total = 1;
  for (std::size_t i = 0; i < n; ++i) total *= p;
  Vector acc = Vector::Zero(model.m), f(model.m), z(n), y(n);
  for (std::size_t idx = 0; idx < total; ++idx) {
    double w = 1.0;
    std::size_t rest = idx;
    for (std::size_t i = 0; i < n; ++i) {
      z(i) = rule.nodes[rest % p];
      w *= rule.weights[rest % p];
      rest /= p;
    }
    y = mean + root * z;
    model.f1(x, y, f);
    acc += w * f;
  }
  return acc;
}

}  // namespace

Vector averaged_drift(const SlowFastModel& model, const VecIn& x) {
  Vector out(model.m);
  if (model.averaged) {
    model.averaged(x, out);
    return out;
  }
  if (model.n == 0) {
    model.f1(x, Vector(0), out);
    return out;
  }
  if (model.gaussian_invariant) return gauss_hermite_average(model, x);
  throw ParameterError("averaged_drift: no analytic invariant measure registered for " + model.name);
}

DriftField analytic_averaged_drift(const SlowFastModel& model) {
  if (model.averaged) return model.averaged;
  if (model.n == 0 || model.gaussian_invariant) {
    return [model](const VecIn& x, VecOut out) { out = averaged_drift(model, x); };
  }
  throw ParameterError("no closed-form averaged drift registered for " + model.name);
}

AveragedDriftTable::AveragedDriftTable(const SlowFastModel& model, const Vector& lower,
                                       const Vector& upper, std::size_t points,
                                       std::size_t n_samples, std::uint64_t seed,
                                       std::size_t workers)
    : m_(model.m), points_(points), lower_(lower), upper_(upper) {
  if (points < 2) throw ParameterError("drift table needs at least two points per axis");
  if (static_cast<std::size_t>(lower.size()) != m_ || static_cast<std::size_t>(upper.size()) != m_ ||
      !((upper - lower).array() > 0.0).all()) {
    throw ParameterError("drift table box is malformed");
  }
  std::size_t total = 1;
  for (std::size_t i = 0; i < m_; ++i) total *= points;
  values_.resize(total);
  parallel_for(total, workers, [&](std::size_t idx) {
    Vector node(m_);
    std::size_t rest = idx;
    for (std::size_t i = 0; i < m_; ++i) {
      const double frac = static_cast<double>(rest % points) / static_cast<double>(points - 1);
      node(i) = lower_(i) + frac * (upper_(i) - lower_(i));
      rest /= points;
    }
    const auto est = estimate_invariant_measure(model, node, n_samples, 0.0, derive_seed(seed, idx));
    values_[idx] = averaged_drift(model, node, est);
  });
}

AveragedDriftTable AveragedDriftTable::around(const SlowFastModel& model, const PathMatrix& visited,
                                              std::size_t points, std::size_t n_samples,
                                              std::uint64_t seed, std::size_t workers) {
  Vector lo = visited.colwise().minCoeff().transpose();
  Vector hi = visited.colwise().maxCoeff().transpose();
  const Vector width = (hi - lo).cwiseMax(1e-3);
  return AveragedDriftTable(model, lo - 0.2 * width, hi + 0.2 * width, points, n_samples, seed, workers);
}

void AveragedDriftTable::eval(const VecIn& x, VecOut out) const {
  std::vector<std::size_t> cell(m_);
  std::vector<double> frac(m_);
  for (std::size_t i = 0; i < m_; ++i) {
    const double span = upper_(i) - lower_(i);
    const double tol = 1e-12 * span;
    if (x(i) < lower_(i) - tol || x(i) > upper_(i) + tol) {
      throw ParameterError("averaged drift table queried outside its lattice");
    }
    const double pos = std::clamp((x(i) - lower_(i)) / span, 0.0, 1.0) * static_cast<double>(points_ - 1);
    cell[i] = std::min(static_cast<std::size_t>(pos), points_ - 2);
    frac[i] = pos - static_cast<double>(cell[i]);
  }
  out.setZero();
  for (std::size_t corner = 0; corner < (std::size_t{1} << m_); ++corner) {
    double w = 1.0;
    std::size_t idx = 0, stride = 1;
    for (std::size_t i = 0; i < m_; ++i) {
      const bool up = (corner >> i) & 1U;
      w *= up ? frac[i] : 1.0 - frac[i];
      idx += (cell[i] + (up ? 1 : 0)) * stride;
      stride *= points_;
    }
    if (w != 0.0) out += w * values_[idx];
  }
}

DriftField AveragedDriftTable::field() const {
  auto self = std::make_shared<AveragedDriftTable>(*this);
  return [self](const VecIn& x, VecOut out) { self->eval(x, out); };
}

// --------------------------------------------------------------- skeleton

PathMatrix skeleton(const SlowFastModel& model, const DriftField& fbar, const VecIn& x0,
                    const TimeGrid& grid, const CameronMartinControl* ctrl) {
  const std::size_t N = grid.steps(), m = model.m, d = model.d;
  if (static_cast<std::size_t>(x0.size()) != m) throw ParameterError("skeleton: x0 has the wrong dimension");
  PathMatrix u;
  if (ctrl) {
    if (!(ctrl->grid == grid) || ctrl->d() != d) throw ParameterError("skeleton: control does not match grid");
    u = cm_increments(*ctrl).first;
  }
  const double h = grid.step();
  PathMatrix out(N + 1, m);
  Vector x = x0, f(m);
  Matrix s(m, d);
  out.row(0) = x.transpose();
  for (std::size_t k = 0; k < N; ++k) {
    fbar(x, f);
    Vector next = x + h * f;
    if (ctrl) {
      model.sigma1(x, s);
      next.noalias() += s * u.row(k).transpose();
    }
    check_state(next, "skeleton", k + 1);
    x = next;
    out.row(k + 1) = x.transpose();
  }
  return out;
}

PathMatrix integrate_effective(const SlowFastModel& model, const DriftField& fbar, const VecIn& x0,
                               const TimeGrid& grid, const CameronMartinControl* ctrl) {
  if (ctrl) return skeleton(model, fbar, x0, grid, ctrl);
  const std::size_t N = grid.steps(), m = model.m;
  const double h = grid.step();
  PathMatrix out(N + 1, m);
  Vector x = x0, k1(m), k2(m), k3(m), k4(m);
  out.row(0) = x.transpose();
  for (std::size_t k = 0; k < N; ++k) {
    fbar(x, k1);
    fbar(x + 0.5 * h * k1, k2);
    fbar(x + 0.5 * h * k2, k3);
    fbar(x + h * k3, k4);
    x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    check_state(x, "integrate_effective", k + 1);
    out.row(k + 1) = x.transpose();
  }
  return out;
}

PathMatrix integrate_effective(const SlowFastModel& model, const DriftField& fbar, const VecIn& x0,
                               const Level2RoughPath& driver) {
  VectorField vf = model.slow_field();
  vf.drift = fbar;
  return solve_rde(vf, driver, x0).values;
}

// ------------------------------------------------------------- experiments

double default_beta(double H) { return HurstParam::with_defaults(H).beta; }

AveragingRow averaging_cell(const SlowFastModel& model, const ScaleParams& scales_in,
                            const ExperimentSetup& setup, const CameronMartinControl* ctrl,
                            const AveragingReference& reference) {
  const ScaleParams scales = scales_in.resolved(setup.grid, setup.hurst.beta, setup.refine);
  const TimeGrid fine = setup.grid.refine(setup.refine);
  const std::size_t reps = setup.n_mc;
  if (reps == 0) throw ParameterError("n_mc must be positive");
  if (!reference.fbar && static_cast<std::size_t>(reference.fixed.rows()) != setup.grid.size()) {
    throw ParameterError("reference path must live on the macro grid");
  }
  const double h = setup.grid.step();
  std::vector<double> sup(reps), bounded(reps), holder(reps), energy(reps), gap(reps);
  parallel_for(reps, resolve_workers(setup.workers), [&](std::size_t r) {
    const std::uint64_t driver_seed = derive_seed(setup.seed, r);
    const auto driver = sample_mixed(fine, setup.hurst, model.d, model.e, driver_seed);
    const std::uint64_t noise_seed = derive_seed(driver_seed, 1);
    const auto path = integrate_slowfast(model, scales, driver, setup.refine, setup.x0, setup.y0, ctrl, noise_seed);
    PathMatrix own;
    if (reference.fbar) {
      own = integrate_effective(model, reference.fbar, setup.x0,
                                slow_driver(driver, setup.refine, scales.eps, ctrl));
    }
    const PathMatrix& ref = reference.fbar ? own : reference.fixed;
    double worst = 0.0;
    for (Eigen::Index k = 0; k < ref.rows(); ++k) {
      worst = std::max(worst, (path.slow.values.row(k) - ref.row(k)).norm());
    }
    sup[r] = worst;
    bounded[r] = std::min(1.0, worst);
    const double hn = path_holder_norm(setup.grid, path.slow.values, setup.hurst.beta);
    holder[r] = hn * hn;
    double en = 0.0, gp = 0.0;
    if (model.n > 0) {
      const std::size_t N = setup.grid.steps();
      for (std::size_t k = 0; k <= N; ++k) {
        const double w = (k == 0 || k == N) ? 0.5 * h : h;
        en += w * path.fast.row(k).squaredNorm();
      }
    }
    if (model.n > 0 && setup.auxiliary) {
      const std::size_t N = setup.grid.steps();
      const PathMatrix aux = auxiliary_fast(model, scales, path.slow.values, driver, setup.refine, setup.y0, noise_seed);
      for (std::size_t k = 0; k <= N; ++k) {
        const double w = (k == 0 || k == N) ? 0.5 * h : h;
        gp += w * (path.fast.row(k) - aux.row(k)).squaredNorm();
      }
    }
    energy[r] = en;
    gap[r] = gp;
  });
  AveragingRow row;
  row.scales = scales;
  row.sup_error = summarize(sup);
  row.bounded_error = summarize(bounded);
  row.holder_sq = summarize(holder);
  row.fast_energy = summarize(energy);
  row.aux_gap = summarize(gap);
  row.n_mc = reps;
  return row;
}

DriftField resolve_averaged_drift(const SlowFastModel& model, const ScaleParams& pilot_scales,
                                  const ExperimentSetup& setup) {
  try {
    return analytic_averaged_drift(model);
  } catch (const ParameterError&) {
  }
  const std::size_t pilots = std::min<std::size_t>(std::max<std::size_t>(setup.n_mc, 1), 8);
  const ScaleParams sc = pilot_scales.resolved(setup.grid, setup.hurst.beta, setup.refine);
  const TimeGrid fine = setup.grid.refine(setup.refine);
  PathMatrix visited(0, model.m);
  for (std::size_t r = 0; r < pilots; ++r) {
    const std::uint64_t s = derive_seed(setup.seed, r);
    const auto driver = sample_mixed(fine, setup.hurst, model.d, model.e, s);
    const auto p = integrate_slowfast(model, sc, driver, setup.refine, setup.x0, setup.y0, nullptr, derive_seed(s, 1));
    PathMatrix grown(visited.rows() + p.slow.values.rows(), model.m);
    grown << visited, p.slow.values;
    visited = std::move(grown);
  }
  return AveragedDriftTable::around(model, visited, 9, 2000, derive_seed(setup.seed, 0x7ab1e),
                                    resolve_workers(setup.workers))
      .field();
}

std::vector<AveragingRow> averaging_experiment(const SlowFastModel& model,
                                               const std::vector<ScaleParams>& scales_list,
                                               const ExperimentSetup& setup, const DriftField& fbar_in,
                                               bool skeleton_reference) {
  if (scales_list.empty()) return {};
  const DriftField fbar = fbar_in ? fbar_in : resolve_averaged_drift(model, scales_list.front(), setup);
  AveragingReference reference;
  if (skeleton_reference) {
    reference.fixed = skeleton(model, fbar, setup.x0, setup.grid, nullptr);
  } else {
    reference.fbar = fbar;
  }
  std::vector<AveragingRow> rows;
  rows.reserve(scales_list.size());
  for (const auto& sc : scales_list) rows.push_back(averaging_cell(model, sc, setup, nullptr, reference));
  return rows;
}

}  // namespace roughflow
