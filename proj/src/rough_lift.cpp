#include "roughflow/rough_lift.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"
#include "roughflow/error.hpp"
#include "roughflow/parallel.hpp"

namespace roughflow {
namespace {

/// Compresses a refined path to per-interval increments and areas with
///   area = sum_m (x_{s,t_m} (x) dx_m + C o (dx_m (x) dx_m)),
/// C = 1/2 trapezoid, 0 left point, 1 right point.
void compress(const PathMatrix& fine, std::size_t refine, const Matrix& weight, PathMatrix& inc,
              PathMatrix& area, std::size_t workers) {
  const auto dim = static_cast<std::size_t>(fine.cols());
  const std::size_t n = (static_cast<std::size_t>(fine.rows()) - 1) / refine;
  inc.resize(n, dim);
  area.resize(n, dim * dim);
  parallel_for(n, workers, [&](std::size_t k) {
    const std::size_t start = k * refine;
    Vector rel = Vector::Zero(dim);
    Vector dx(dim);
    Matrix acc = Matrix::Zero(dim, dim);
    for (std::size_t m = start; m < start + refine; ++m) {
      for (std::size_t i = 0; i < dim; ++i) dx(i) = fine(m + 1, i) - fine(m, i);
      for (std::size_t i = 0; i < dim; ++i) {
        for (std::size_t j = 0; j < dim; ++j) acc(i, j) += (rel(i) + weight(i, j) * dx(i)) * dx(j);
      }
      rel += dx;
    }
    for (std::size_t i = 0; i < dim; ++i) {
      inc(k, i) = fine(start + refine, i) - fine(start, i);
      for (std::size_t j = 0; j < dim; ++j) area(k, i * dim + j) = acc(i, j);
    }
  });
}

/// sum_m (x^i_{s,t_m} + dx^i_m / 2) dy^j_m per coarse interval (Young trapezoid).
void add_cross(const PathMatrix& x, std::size_t xoff, std::size_t xdim, const PathMatrix& y,
               std::size_t yoff, std::size_t ydim, std::size_t refine, double scale,
               std::size_t dim, PathMatrix& area) {
  const std::size_t n = static_cast<std::size_t>(area.rows());
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t start = k * refine;
    for (std::size_t m = start; m < start + refine; ++m) {
      for (std::size_t i = 0; i < xdim; ++i) {
        const double mid = 0.5 * (x(m, i) + x(m + 1, i)) - x(start, i);
        for (std::size_t j = 0; j < ydim; ++j) {
          area(k, (xoff + i) * dim + yoff + j) += scale * mid * (y(m + 1, j) - y(m, j));
        }
      }
    }
  }
}

void check_budget(std::size_t points, std::size_t dim) {
  if (points * std::max<std::size_t>(dim * dim, 1) > kLiftBudget) {
    throw ResourceError("refined lift exceeds the memory budget (" + std::to_string(points) +
                        " points, dim " + std::to_string(dim) + ")");
  }
}

/// Linear interpolation of a coarse path (n+1 rows) onto refine x finer points.
PathMatrix interpolate(const PathMatrix& coarse, std::size_t refine) {
  const auto n = static_cast<std::size_t>(coarse.rows()) - 1;
  PathMatrix fine(n * refine + 1, coarse.cols());
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t m = 0; m < refine; ++m) {
      const double w = static_cast<double>(m) / static_cast<double>(refine);
      fine.row(k * refine + m) = (1.0 - w) * coarse.row(k) + w * coarse.row(k + 1);
    }
  }
  fine.row(n * refine) = coarse.row(n);
  return fine;
}

}  // namespace

// --------------------------------------------------------- Level2RoughPath

Level2RoughPath::Level2RoughPath(TimeGrid grid, std::size_t dim, PathMatrix inc, PathMatrix area)
    : grid_(grid), dim_(dim), inc_(std::move(inc)), area_(std::move(area)) {
  const auto n = static_cast<Eigen::Index>(grid_.steps());
  if (inc_.rows() != n || area_.rows() != n || inc_.cols() != static_cast<Eigen::Index>(dim) ||
      area_.cols() != static_cast<Eigen::Index>(dim * dim)) {
    throw ParameterError("rough path storage does not match grid and dimension");
  }
}

Level2RoughPath Level2RoughPath::zero(const TimeGrid& grid, std::size_t dim) {
  const auto n = static_cast<Eigen::Index>(grid.steps());
  return Level2RoughPath(grid, dim, PathMatrix::Zero(n, dim), PathMatrix::Zero(n, dim * dim));
}

Vector Level2RoughPath::first_between(std::size_t s, std::size_t t) const {
  if (s > t || t > steps()) throw ParameterError("first_between: need s <= t <= n");
  Vector x = Vector::Zero(dim_);
  for (std::size_t k = s; k < t; ++k) x += inc_.row(k).transpose();
  return x;
}

Matrix Level2RoughPath::second_between(std::size_t s, std::size_t t) const {
  if (s > t || t > steps()) throw ParameterError("second_between: need s <= t <= n");
  Vector x = Vector::Zero(dim_);
  Matrix a = Matrix::Zero(dim_, dim_);
  for (std::size_t k = s; k < t; ++k) {
    for (std::size_t i = 0; i < dim_; ++i) {
      for (std::size_t j = 0; j < dim_; ++j) a(i, j) += area(k, i, j) + x(i) * inc_(k, j);
    }
    x += inc_.row(k).transpose();
  }
  return a;
}

PathMatrix Level2RoughPath::trace() const {
  PathMatrix path = PathMatrix::Zero(steps() + 1, dim_);
  for (std::size_t k = 0; k < steps(); ++k) path.row(k + 1) = path.row(k) + inc_.row(k);
  return path;
}

Level2RoughPath Level2RoughPath::block(std::size_t first, std::size_t count) const {
  if (first + count > dim_) throw ParameterError("block exceeds rough path dimension");
  const std::size_t n = steps();
  PathMatrix inc = inc_.middleCols(first, count);
  PathMatrix area(n, count * count);
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t i = 0; i < count; ++i) {
      for (std::size_t j = 0; j < count; ++j) area(k, i * count + j) = this->area(k, first + i, first + j);
    }
  }
  return Level2RoughPath(grid_, count, std::move(inc), std::move(area));
}

Level2RoughPath Level2RoughPath::coarsen(std::size_t factor) const {
  const TimeGrid coarse = grid_.coarsen(factor);
  const std::size_t n = coarse.steps();
  PathMatrix inc(n, dim_), area(n, dim_ * dim_);
  for (std::size_t k = 0; k < n; ++k) {
    inc.row(k) = first_between(k * factor, (k + 1) * factor).transpose();
    const Matrix a = second_between(k * factor, (k + 1) * factor);
    for (std::size_t i = 0; i < dim_; ++i) {
      for (std::size_t j = 0; j < dim_; ++j) area(k, i * dim_ + j) = a(i, j);
    }
  }
  return Level2RoughPath(coarse, dim_, std::move(inc), std::move(area));
}

// ---------------------------------------------------------------- builders

Level2RoughPath lift_mixed(const MixedDriverPath& fine, std::size_t refine, BrownianArea convention,
                           std::size_t workers) {
  if (refine == 0) throw ParameterError("refine must be >= 1");
  const std::size_t d = fine.d(), e = fine.e(), dim = d + e;
  if (dim == 0) throw ParameterError("lift_mixed: empty driver");
  check_budget(fine.grid.size(), dim);
  const TimeGrid grid = fine.grid.coarsen(refine);
  Matrix weight = Matrix::Constant(dim, dim, 0.5);
  if (convention == BrownianArea::ito) {
    weight.bottomRightCorner(e, e).setZero();
    weight.topRightCorner(d, e).setZero();
    weight.bottomLeftCorner(e, d).setOnes();
  }
  PathMatrix inc, area;
  compress(fine.joined(), refine, weight, inc, area, workers);
  return Level2RoughPath(grid, dim, std::move(inc), std::move(area));
}

Level2RoughPath lift_path(const TimeGrid& fine_grid, const PathMatrix& path, std::size_t refine) {
  if (refine == 0) throw ParameterError("refine must be >= 1");
  if (static_cast<std::size_t>(path.rows()) != fine_grid.size()) {
    throw ParameterError("lift_path: path rows do not match grid");
  }
  const auto dim = static_cast<std::size_t>(path.cols());
  check_budget(fine_grid.size(), dim);
  PathMatrix inc, area;
  compress(path, refine, Matrix::Constant(dim, dim, 0.5), inc, area, 1);
  return Level2RoughPath(fine_grid.coarsen(refine), dim, std::move(inc), std::move(area));
}

Level2RoughPath lift_cm(const CameronMartinControl& ctrl) {
  const auto [u, v] = cm_to_path(ctrl);
  PathMatrix joined(u.rows(), u.cols() + v.cols());
  joined << u, v;
  return lift_path(ctrl.grid, joined, 1);
}

Level2RoughPath translate(const Level2RoughPath& base, const PathMatrix& driver,
                          const CameronMartinControl& ctrl) {
  const std::size_t dim = base.dim();
  if (ctrl.d() + ctrl.e() != dim || static_cast<std::size_t>(driver.cols()) != dim) {
    throw ParameterError("translate: dimensions of base, driver and control differ");
  }
  if (!(ctrl.grid == base.grid())) throw ParameterError("translate: control grid differs from base");
  const std::size_t n = base.steps();
  const std::size_t rows = static_cast<std::size_t>(driver.rows());
  if (rows < 2 || (rows - 1) % n != 0) throw ParameterError("translate: driver is not on a refinement");
  const std::size_t refine = (rows - 1) / n;

  const auto [u, v] = cm_to_path(ctrl);
  PathMatrix h(n + 1, dim);
  h << u, v;
  const PathMatrix h_fine = refine == 1 ? h : interpolate(h, refine);

  PathMatrix inc = base.increments();
  PathMatrix area = base.areas();
  for (std::size_t k = 0; k < n; ++k) inc.row(k) += h.row(k + 1) - h.row(k);
  add_cross(driver, 0, dim, h_fine, 0, dim, refine, 1.0, dim, area);
  add_cross(h_fine, 0, dim, driver, 0, dim, refine, 1.0, dim, area);
  add_cross(h_fine, 0, dim, h_fine, 0, dim, refine, 1.0, dim, area);
  return Level2RoughPath(base.grid(), dim, std::move(inc), std::move(area));
}

Level2RoughPath translate_slow(const Level2RoughPath& fbm_lift, const PathMatrix& fbm, double eps,
                               const CameronMartinControl& ctrl) {
  if (!(eps > 0.0)) throw ParameterError("translate_slow: eps must be positive");
  const std::size_t d = fbm_lift.dim();
  if (ctrl.d() != d) throw ParameterError("translate_slow: control dimension differs from driver");
  const auto n = static_cast<Eigen::Index>(ctrl.grid.steps());
  const auto slow_ctrl = CameronMartinControl::make(ctrl.grid, ctrl.H, ctrl.udot, PathMatrix(n, 0));
  return translate(dilate(fbm_lift, eps), std::sqrt(eps) * fbm, slow_ctrl);
}

Level2RoughPath dilate(const Level2RoughPath& rp, double eps) {
  if (!(eps > 0.0)) throw ParameterError("dilate: eps must be positive");
  return Level2RoughPath(rp.grid(), rp.dim(), rp.increments() * std::sqrt(eps), rp.areas() * eps);
}

// ------------------------------------------------------------------- norms

namespace {

void check_exponent(double a) {
  if (!(a > 0.0 && a < 0.5)) throw ParameterError("Hölder exponent must lie in (0, 1/2)");
}

bool use_dyadic(HolderMethod method, std::size_t n) {
  return method == HolderMethod::dyadic || (method == HolderMethod::automatic && n > 4096);
}

/// sup over grid pairs of the differences of two rough paths (b may be null).
HolderReport pair_sup(const Level2RoughPath& a, const Level2RoughPath* b, double exponent,
                      HolderMethod method) {
  check_exponent(exponent);
  const std::size_t n = a.steps(), dim = a.dim();
  const double h = a.grid().step();
  HolderReport rep;
  rep.exponent = exponent;
  rep.dyadic = use_dyadic(method, n);

  // The difference of two compositions is not a composition, so both are carried.
  auto update = [&](Vector& xa, Matrix& aa, Vector& xb, Matrix& ab, std::size_t k) {
    for (std::size_t i = 0; i < dim; ++i) {
      for (std::size_t j = 0; j < dim; ++j) {
        aa(i, j) += a.area(k, i, j) + xa(i) * a.inc(k, j);
        if (b) ab(i, j) += b->area(k, i, j) + xb(i) * b->inc(k, j);
      }
    }
    for (std::size_t i = 0; i < dim; ++i) {
      xa(i) += a.inc(k, i);
      if (b) xb(i) += b->inc(k, i);
    }
  };

  if (!rep.dyadic) {
    Vector xa(dim), xb(dim);
    Matrix aa(dim, dim), ab(dim, dim);
    for (std::size_t s = 0; s < n; ++s) {
      xa.setZero(); xb.setZero(); aa.setZero(); ab.setZero();
      for (std::size_t t = s + 1; t <= n; ++t) {
        update(xa, aa, xb, ab, t - 1);
        const double len = static_cast<double>(t - s) * h;
        const double first = b ? (xa - xb).norm() : xa.norm();
        const double second = b ? (aa - ab).norm() : aa.norm();
        rep.first_level_norm = std::max(rep.first_level_norm, first / std::pow(len, exponent));
        rep.second_level_norm = std::max(rep.second_level_norm, second / std::pow(len, 2 * exponent));
      }
    }
  } else {
    // Dyadic intervals, built level by level with Chen.
    std::vector<Vector> xa(n), xb(n);
    std::vector<Matrix> aa(n), ab(n);
    for (std::size_t k = 0; k < n; ++k) {
      xa[k] = a.increments().row(k).transpose();
      aa[k] = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
          a.areas().row(k).data(), dim, dim);
      if (b) {
        xb[k] = b->increments().row(k).transpose();
        ab[k] = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
            b->areas().row(k).data(), dim, dim);
      } else {
        xb[k] = Vector::Zero(dim);
        ab[k] = Matrix::Zero(dim, dim);
      }
    }
    double len = h;
    std::size_t count = n;
    while (true) {
      for (std::size_t k = 0; k < count; ++k) {
        rep.first_level_norm = std::max(rep.first_level_norm, (xa[k] - xb[k]).norm() / std::pow(len, exponent));
        rep.second_level_norm =
            std::max(rep.second_level_norm, (aa[k] - ab[k]).norm() / std::pow(len, 2 * exponent));
      }
      if (count == 1) break;
      for (std::size_t k = 0; k < count / 2; ++k) {
        aa[k] = aa[2 * k] + aa[2 * k + 1] + xa[2 * k] * xa[2 * k + 1].transpose();
        ab[k] = ab[2 * k] + ab[2 * k + 1] + xb[2 * k] * xb[2 * k + 1].transpose();
        xa[k] = xa[2 * k] + xa[2 * k + 1];
        xb[k] = xb[2 * k] + xb[2 * k + 1];
      }
      count /= 2;
      len *= 2.0;
    }
  }
  rep.triple_norm = rep.first_level_norm + rep.second_level_norm;
  return rep;
}

}  // namespace

HolderReport holder_norms(const Level2RoughPath& rp, double exponent, HolderMethod method) {
  return pair_sup(rp, nullptr, exponent, method);
}

double rough_distance(const Level2RoughPath& a, const Level2RoughPath& b, double exponent,
                      HolderMethod method) {
  if (!(a.grid() == b.grid()) || a.dim() != b.dim()) {
    throw ParameterError("rough_distance: grids or dimensions differ");
  }
  return pair_sup(a, &b, exponent, method).triple_norm;
}

double path_holder_norm(const TimeGrid& grid, const PathMatrix& path, double exponent,
                        HolderMethod method) {
  if (!(exponent > 0.0 && exponent <= 1.0)) throw ParameterError("Hölder exponent must lie in (0, 1]");
  if (static_cast<std::size_t>(path.rows()) != grid.size()) {
    throw ParameterError("path rows do not match grid");
  }
  const std::size_t n = grid.steps();
  const double h = grid.step();
  double best = 0.0;
  if (!use_dyadic(method, n)) {
    for (std::size_t s = 0; s < n; ++s) {
      for (std::size_t t = s + 1; t <= n; ++t) {
        const double len = static_cast<double>(t - s) * h;
        best = std::max(best, (path.row(t) - path.row(s)).norm() / std::pow(len, exponent));
      }
    }
    return best;
  }
  for (std::size_t width = 1; width <= n; width *= 2) {
    const double scale = std::pow(static_cast<double>(width) * h, exponent);
    for (std::size_t s = 0; s + width <= n; s += width) {
      best = std::max(best, (path.row(s + width) - path.row(s)).norm() / scale);
    }
  }
  return best;
}

// -------------------------------------------------------------------- JSON

std::string to_json(const Level2RoughPath& rp) {
  using nlohmann::json;
  const std::size_t n = rp.steps(), dim = rp.dim();
  json inc = json::array(), area = json::array();
  for (std::size_t k = 0; k < n; ++k) {
    json row = json::array();
    for (std::size_t i = 0; i < dim; ++i) row.push_back(rp.inc(k, i));
    inc.push_back(std::move(row));
    json mat = json::array();
    for (std::size_t i = 0; i < dim; ++i) {
      json r = json::array();
      for (std::size_t j = 0; j < dim; ++j) r.push_back(rp.area(k, i, j));
      mat.push_back(std::move(r));
    }
    area.push_back(std::move(mat));
  }
  json doc = {{"grid", {{"horizon", rp.grid().horizon()}, {"steps", n}}},
              {"dim", dim},
              {"inc", std::move(inc)},
              {"area", std::move(area)}};
  return doc.dump();
}

Level2RoughPath rough_path_from_json(const std::string& text) {
  using nlohmann::json;
  try {
    const json doc = json::parse(text);
    const TimeGrid grid = TimeGrid::make(doc.at("grid").at("horizon").get<double>(),
                                         doc.at("grid").at("steps").get<std::size_t>());
    const auto dim = doc.at("dim").get<std::size_t>();
    const auto& inc_j = doc.at("inc");
    const auto& area_j = doc.at("area");
    const std::size_t n = grid.steps();
    if (inc_j.size() != n || area_j.size() != n) throw ParameterError("rough path JSON length mismatch");
    PathMatrix inc(n, dim), area(n, dim * dim);
    for (std::size_t k = 0; k < n; ++k) {
      if (inc_j[k].size() != dim || area_j[k].size() != dim) throw ParameterError("rough path JSON shape");
      for (std::size_t i = 0; i < dim; ++i) {
        inc(k, i) = inc_j[k][i].get<double>();
        if (area_j[k][i].size() != dim) throw ParameterError("rough path JSON shape");
        for (std::size_t j = 0; j < dim; ++j) area(k, i * dim + j) = area_j[k][i][j].get<double>();
      }
    }
    return Level2RoughPath(grid, dim, std::move(inc), std::move(area));
  } catch (const nlohmann::json::exception& ex) {
    throw ParameterError(std::string("rough path JSON: ") + ex.what());
  }
}

}  // namespace roughflow
