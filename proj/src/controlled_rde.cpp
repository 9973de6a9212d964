#include "roughflow/controlled_rde.hpp"

#include <algorithm>
#include <cmath>

#include "roughflow/error.hpp"
#include "roughflow/random.hpp"

namespace roughflow {

void VectorField::eval_drift(const VecIn& y, VecOut out) const {
  if (drift) {
    drift(y, out);
  } else {
    out.setZero();
  }
}

void VectorField::eval_sigma(const VecIn& y, MatOut out) const { sigma(y, out); }

void VectorField::eval_dsigma(const VecIn& y, MatOut out) const {
  if (dsigma) {
    dsigma(y, out);
    return;
  }
  const std::size_t m = state_dim, d = noise_dim;
  Vector probe = y;
  Matrix plus(m, d), minus(m, d);
  for (std::size_t q = 0; q < m; ++q) {
    const double step = 1e-6 * std::max(1.0, std::abs(y(q)));
    probe(q) = y(q) + step;
    sigma(probe, plus);
    probe(q) = y(q) - step;
    sigma(probe, minus);
    probe(q) = y(q);
    for (std::size_t p = 0; p < m; ++p) {
      for (std::size_t i = 0; i < d; ++i) out(p * m + q, i) = (plus(p, i) - minus(p, i)) / (2.0 * step);
    }
  }
}

VectorField linear_field(const Matrix& drift, const std::vector<Matrix>& noise) {
  const auto m = static_cast<std::size_t>(drift.rows());
  if (drift.cols() != drift.rows()) throw ParameterError("linear_field: drift must be square");
  for (const auto& n : noise) {
    if (static_cast<std::size_t>(n.rows()) != m || n.cols() != n.rows()) {
      throw ParameterError("linear_field: noise matrices must be m x m");
    }
  }
  VectorField vf;
  vf.state_dim = m;
  vf.noise_dim = noise.size();
  vf.drift = [drift](const VecIn& y, VecOut out) { out.noalias() = drift * y; };
  vf.sigma = [noise](const VecIn& y, MatOut out) {
    for (std::size_t i = 0; i < noise.size(); ++i) out.col(i).noalias() = noise[i] * y;
  };
  vf.dsigma = [noise, m](const VecIn&, MatOut out) {
    for (std::size_t p = 0; p < m; ++p) {
      for (std::size_t q = 0; q < m; ++q) {
        for (std::size_t i = 0; i < noise.size(); ++i) out(p * m + q, i) = noise[i](p, q);
      }
    }
  };
  return vf;
}

void check_bounds(const VectorField& vf, double radius, std::size_t samples, std::uint64_t seed) {
  const FieldBounds& b = vf.bounds;
  if (b.lipschitz <= 0.0 && b.drift_sup <= 0.0 && b.sigma_sup <= 0.0) return;
  const std::size_t m = vf.state_dim, d = vf.noise_dim;
  Rng rng = make_stream(seed, 0xb0);
  std::uniform_real_distribution<double> unif(-radius, radius);
  Vector y1(m), y2(m), f1(m), f2(m);
  Matrix s1(m, d), s2(m, d);
  constexpr double slack = 1.0 + 1e-9;
  for (std::size_t k = 0; k < samples; ++k) {
    for (std::size_t i = 0; i < m; ++i) {
      y1(i) = unif(rng);
      y2(i) = unif(rng);
    }
    vf.eval_drift(y1, f1);
    vf.eval_drift(y2, f2);
    vf.eval_sigma(y1, s1);
    vf.eval_sigma(y2, s2);
    const double gap = (y1 - y2).norm();
    if (b.lipschitz > 0.0) {
      if ((f1 - f2).norm() > slack * b.lipschitz * gap || (s1 - s2).norm() > slack * b.lipschitz * gap) {
        throw ConfigError("vector_field.lipschitz", "declared Lipschitz constant violated");
      }
    }
    if (b.drift_sup > 0.0 && f1.norm() > slack * b.drift_sup) {
      throw ConfigError("vector_field.drift_sup", "declared drift bound violated");
    }
    if (b.sigma_sup > 0.0 && s1.norm() > slack * b.sigma_sup) {
      throw ConfigError("vector_field.sigma_sup", "declared diffusion bound violated");
    }
  }
}

DavieWorkspace::DavieWorkspace(const VectorField& vf)
    : sigma(vf.state_dim, vf.noise_dim),
      dsigma(vf.state_dim * vf.state_dim, vf.noise_dim),
      row(vf.noise_dim) {}

void davie_step(const VectorField& vf, const VecIn& y, const double* inc, const double* area,
                double h, const VecIn& drift, DavieWorkspace& ws, VecOut next) {
  const std::size_t m = vf.state_dim, d = vf.noise_dim;
  vf.eval_sigma(y, ws.sigma);
  vf.eval_dsigma(y, ws.dsigma);
  next = y + h * drift;
  for (std::size_t p = 0; p < m; ++p) {
    double acc = 0.0;
    for (std::size_t i = 0; i < d; ++i) acc += ws.sigma(p, i) * inc[i];
    next(p) += acc;
  }
  // T_p = sum_q sum_i dsigma_{p,i}/dy_q * (sigma_{q,:} X^2)_i
  for (std::size_t q = 0; q < m; ++q) {
    for (std::size_t i = 0; i < d; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < d; ++j) acc += ws.sigma(q, j) * area[j * d + i];
      ws.row(i) = acc;
    }
    for (std::size_t p = 0; p < m; ++p) {
      double acc = 0.0;
      for (std::size_t i = 0; i < d; ++i) acc += ws.dsigma(p * m + q, i) * ws.row(i);
      next(p) += acc;
    }
  }
}

Vector ControlledPath::remainder(std::size_t s, std::size_t t) const {
  const std::size_t m = state_dim(), d = noise_dim();
  Vector r = (values.row(t) - values.row(s)).transpose();
  for (std::size_t p = 0; p < m; ++p) {
    for (std::size_t i = 0; i < d; ++i) r(p) -= gubinelli(s, p * d + i) * (driver(t, i) - driver(s, i));
  }
  return r;
}

ControlledPath solve_rde(const VectorField& vf, const Level2RoughPath& driver, const VecIn& y0) {
  const std::size_t m = vf.state_dim, d = vf.noise_dim;
  if (static_cast<std::size_t>(y0.size()) != m || driver.dim() != d) {
    throw ParameterError("solve_rde: dimensions of field, driver and initial value differ");
  }
  if (!vf.sigma) throw ParameterError("solve_rde: diffusion coefficient missing");
  const std::size_t n = driver.steps();
  const double h = driver.grid().step();
  ControlledPath out;
  out.grid = driver.grid();
  out.values.resize(n + 1, m);
  out.gubinelli.resize(n + 1, m * d);
  out.driver = driver.trace();
  DavieWorkspace ws(vf);
  Vector y = y0, next(m), f(m);
  out.values.row(0) = y.transpose();
  for (std::size_t k = 0; k < n; ++k) {
    vf.eval_drift(y, f);
    davie_step(vf, y, driver.increments().row(k).data(), driver.areas().row(k).data(), h, f, ws, next);
    for (std::size_t p = 0; p < m; ++p) {
      for (std::size_t i = 0; i < d; ++i) out.gubinelli(k, p * d + i) = ws.sigma(p, i);
    }
    if (!next.allFinite() || next.norm() > kDivergenceCap) throw DivergenceError("solve_rde", k + 1);
    y = next;
    out.values.row(k + 1) = y.transpose();
  }
  vf.eval_sigma(y, ws.sigma);
  for (std::size_t p = 0; p < m; ++p) {
    for (std::size_t i = 0; i < d; ++i) out.gubinelli(n, p * d + i) = ws.sigma(p, i);
  }
  return out;
}

namespace {

bool dyadic_pairs(HolderMethod method, std::size_t n) {
  return method == HolderMethod::dyadic || (method == HolderMethod::automatic && n > 4096);
}

/// Calls visit(s, t) over all grid pairs or dyadic intervals.
template <class F>
void for_pairs(std::size_t n, bool dyadic, F&& visit) {
  if (!dyadic) {
    for (std::size_t s = 0; s < n; ++s) {
      for (std::size_t t = s + 1; t <= n; ++t) visit(s, t);
    }
    return;
  }
  for (std::size_t width = 1; width <= n; width *= 2) {
    for (std::size_t s = 0; s + width <= n; s += width) visit(s, s + width);
  }
}

}  // namespace

double controlled_distance(const ControlledPath& a, const ControlledPath& b, double exponent,
                           HolderMethod method) {
  if (!(a.grid == b.grid) || a.state_dim() != b.state_dim() || a.noise_dim() != b.noise_dim()) {
    throw ParameterError("controlled_distance: grids or dimensions differ");
  }
  if (!(exponent > 0.0 && exponent < 0.5)) throw ParameterError("exponent must lie in (0, 1/2)");
  const std::size_t n = a.grid.steps();
  const double h = a.grid.step();
  double gub = 0.0, rem = 0.0;
  for_pairs(n, dyadic_pairs(method, n), [&](std::size_t s, std::size_t t) {
    const double len = static_cast<double>(t - s) * h;
    const double dg = ((a.gubinelli.row(t) - a.gubinelli.row(s)) - (b.gubinelli.row(t) - b.gubinelli.row(s))).norm();
    gub = std::max(gub, dg / std::pow(len, exponent));
    rem = std::max(rem, (a.remainder(s, t) - b.remainder(s, t)).norm() / std::pow(len, 2 * exponent));
  });
  return gub + rem;
}

double remainder_norm(const ControlledPath& path, double exponent, HolderMethod method) {
  const std::size_t n = path.grid.steps();
  const double h = path.grid.step();
  double best = 0.0;
  for_pairs(n, dyadic_pairs(method, n), [&](std::size_t s, std::size_t t) {
    const double len = static_cast<double>(t - s) * h;
    best = std::max(best, path.remainder(s, t).norm() / std::pow(len, 2 * exponent));
  });
  return best;
}

LipschitzReport lipschitz_probe(const VectorField& vf, const Level2RoughPath& driver_a,
                                const Level2RoughPath& driver_b, const VecIn& y0_a,
                                const VecIn& y0_b, double alpha, double beta) {
  const ControlledPath a = solve_rde(vf, driver_a, y0_a);
  const ControlledPath b = solve_rde(vf, driver_b, y0_b);
  LipschitzReport rep;
  const PathMatrix diff = a.values - b.values;
  rep.solution_distance = diff.row(0).norm() + path_holder_norm(a.grid, diff, beta);
  rep.controlled_distance = controlled_distance(a, b, beta);
  rep.input_distance = (y0_a - y0_b).norm() + rough_distance(driver_a, driver_b, alpha);
  rep.ratio = rep.input_distance > 0.0
                  ? (rep.solution_distance + rep.controlled_distance) / rep.input_distance
                  : 0.0;
  return rep;
}

void write_solution_csv(std::ostream& out, const ControlledPath& path) {
  write_path_csv(out, path.grid, path.values);
}

}  // namespace roughflow
