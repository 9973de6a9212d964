#include "roughflow/gaussian_drivers.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <iomanip>
#include <istream>
#include <map>
#include <mutex>
#include <sstream>
#include <tuple>

#include <boost/math/special_functions/beta.hpp>
#include <unsupported/Eigen/FFT>

#include "roughflow/error.hpp"
#include "roughflow/quadrature.hpp"
#include "roughflow/random.hpp"

namespace roughflow {
namespace {

constexpr std::uint64_t kFbmStream = 1ULL << 20;
constexpr std::uint64_t kBmStream = 2ULL << 20;

bool is_power_of_two(std::size_t n) { return n > 0 && (n & (n - 1)) == 0; }

/// Autocovariance of fractional Gaussian noise with step h at lag k.
double fgn_autocovariance(double H, double h, std::size_t k) {
  const double kk = static_cast<double>(k);
  const double two_h = 2.0 * H;
  const double up = std::pow(kk + 1.0, two_h);
  const double mid = k == 0 ? 0.0 : std::pow(kk, two_h);
  const double down = k == 0 ? 1.0 : std::pow(kk - 1.0, two_h);
  return 0.5 * std::pow(h, two_h) * (up - 2.0 * mid + down);
}

void check_hurst_range(double H) {
  if (!(H > 0.0 && H < 1.0)) throw ParameterError("Hurst index must lie in (0, 1)");
}

PathMatrix cumulate(const PathMatrix& increments) {
  PathMatrix path = PathMatrix::Zero(increments.rows() + 1, increments.cols());
  for (Eigen::Index k = 0; k < increments.rows(); ++k) {
    path.row(k + 1) = path.row(k) + increments.row(k);
  }
  return path;
}

Matrix fgn_covariance(std::size_t n, double h, double H) {
  Matrix cov(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      cov(i, j) = fgn_autocovariance(H, h, i > j ? i - j : j - i);
    }
  }
  return cov;
}

/// Square-root eigenvalues of the circulant embedding, or empty when the
/// embedding has a negative eigenvalue.
std::vector<double> circulant_sqrt_eigenvalues(std::size_t n, double h, double H) {
  const std::size_t m = 2 * n;
  std::vector<std::complex<double>> row(m), spectrum;
  for (std::size_t j = 0; j <= n; ++j) row[j] = fgn_autocovariance(H, h, j);
  for (std::size_t j = 1; j < n; ++j) row[m - j] = row[j];
  Eigen::FFT<double> fft;
  fft.fwd(spectrum, row);
  double largest = 0.0;
  for (const auto& z : spectrum) largest = std::max(largest, std::abs(z.real()));
  std::vector<double> roots(m);
  for (std::size_t j = 0; j < m; ++j) {
    const double lambda = spectrum[j].real();
    if (lambda < -1e-10 * largest) return {};
    roots[j] = std::sqrt(std::max(lambda, 0.0) / static_cast<double>(m));
  }
  return roots;
}

Vector circulant_increments(const std::vector<double>& roots, std::size_t n, Rng& rng) {
  const std::size_t m = roots.size();
  std::normal_distribution<double> normal;
  std::vector<std::complex<double>> noise(m), mixed;
  for (std::size_t j = 0; j < m; ++j) {
    const double re = normal(rng);
    const double im = normal(rng);
    noise[j] = roots[j] * std::complex<double>(re, im);
  }
  Eigen::FFT<double> fft;
  fft.fwd(mixed, noise);
  Vector out(n);
  for (std::size_t k = 0; k < n; ++k) out(k) = mixed[k].real();
  return out;
}

}  // namespace

// ---------------------------------------------------------------- TimeGrid

TimeGrid TimeGrid::make(double horizon, std::size_t steps) {
  if (!(horizon > 0.0) || !std::isfinite(horizon)) throw ParameterError("grid horizon must be > 0");
  if (!is_power_of_two(steps)) throw ParameterError("grid steps must be a power of two");
  return TimeGrid(horizon, steps);
}

std::vector<double> TimeGrid::points() const {
  std::vector<double> t(size());
  for (std::size_t k = 0; k < t.size(); ++k) t[k] = at(k);
  return t;
}

TimeGrid TimeGrid::coarsen(std::size_t factor) const {
  if (factor == 0 || steps_ % factor != 0) {
    throw ParameterError("coarsening factor must divide the number of steps");
  }
  return make(horizon_, steps_ / factor);
}

TimeGrid TimeGrid::refine(std::size_t factor) const { return make(horizon_, steps_ * factor); }

// --------------------------------------------------------------- HurstParam

HurstParam HurstParam::make(double H, double alpha, double beta) {
  constexpr double third = 1.0 / 3.0;
  if (!(H > third && H <= 0.5)) throw ParameterError("H must lie in (1/3, 1/2]");
  if (!(beta > third && beta < alpha && alpha < H)) {
    throw ParameterError("exponents must satisfy 1/3 < beta < alpha < H");
  }
  return HurstParam{H, alpha, beta};
}

HurstParam HurstParam::with_defaults(double H) {
  constexpr double third = 1.0 / 3.0;
  if (!(H > third && H <= 0.5)) throw ParameterError("H must lie in (1/3, 1/2]");
  const double alpha = H - 0.2 * (H - third);
  const double beta = third + 0.5 * (alpha - third);
  return make(H, alpha, beta);
}

PathMatrix MixedDriverPath::joined() const {
  PathMatrix out(bH.rows(), bH.cols() + w.cols());
  out << bH, w;
  return out;
}

// ------------------------------------------------------------------ samplers

PathMatrix sample_fbm(const TimeGrid& grid, double H, std::size_t dim, std::uint64_t seed,
                      FbmMethod method) {
  check_hurst_range(H);
  const std::size_t n = grid.steps();
  const double h = grid.step();
  PathMatrix increments(n, dim);
  std::vector<double> roots;
  if (method != FbmMethod::cholesky) {
    roots = circulant_sqrt_eigenvalues(n, h, H);
    if (roots.empty() && method == FbmMethod::circulant) {
      throw ParameterError("circulant embedding is not nonnegative definite");
    }
  }
  std::unique_ptr<IncrementCovariance> cov;
  if (roots.empty()) cov = std::make_unique<IncrementCovariance>(grid, H);
  for (std::size_t c = 0; c < dim; ++c) {
    Rng rng = make_stream(seed, kFbmStream + c);
    if (!roots.empty()) {
      increments.col(c) = circulant_increments(roots, n, rng);
    } else {
      std::normal_distribution<double> normal;
      Vector xi(n);
      for (std::size_t k = 0; k < n; ++k) xi(k) = normal(rng);
      increments.col(c) = cov->factor() * xi;
    }
  }
  return cumulate(increments);
}

PathMatrix sample_fbm(const TimeGrid& grid, const HurstParam& hurst, std::size_t dim,
                      std::uint64_t seed, FbmMethod method) {
  return sample_fbm(grid, hurst.H, dim, seed, method);
}

PathMatrix sample_bm(const TimeGrid& grid, std::size_t dim, std::uint64_t seed) {
  if (dim == 0) throw ParameterError("sample_bm: dimension must be positive");
  const std::size_t n = grid.steps();
  const double scale = std::sqrt(grid.step());
  PathMatrix increments(n, dim);
  for (std::size_t c = 0; c < dim; ++c) {
    Rng rng = make_stream(seed, kBmStream + c);
    std::normal_distribution<double> normal;
    for (std::size_t k = 0; k < n; ++k) increments(k, c) = scale * normal(rng);
  }
  return cumulate(increments);
}

MixedDriverPath sample_mixed(const TimeGrid& grid, const HurstParam& hurst, std::size_t d,
                             std::size_t e, std::uint64_t seed) {
  MixedDriverPath path;
  path.grid = grid;
  path.hurst = hurst;
  path.bH = d > 0 ? sample_fbm(grid, hurst, d, seed) : PathMatrix(grid.size(), 0);
  path.w = e > 0 ? sample_bm(grid, e, seed) : PathMatrix(grid.size(), 0);
  return path;
}

// ------------------------------------------------------ IncrementCovariance

IncrementCovariance::IncrementCovariance(const TimeGrid& grid, double H) : H_(H) {
  check_hurst_range(H);
  cov_ = fgn_covariance(grid.steps(), grid.step(), H);
  Eigen::LLT<Matrix> llt(cov_);
  if (llt.info() != Eigen::Success) throw ParameterError("fGn covariance is not positive definite");
  chol_ = llt.matrixL();
}

PathMatrix IncrementCovariance::color(const PathMatrix& xi) const {
  PathMatrix out(xi.rows(), xi.cols());
  for (Eigen::Index c = 0; c < xi.cols(); ++c) {
    out.col(c) = chol_.triangularView<Eigen::Lower>() * Vector(xi.col(c));
  }
  return out;
}

PathMatrix IncrementCovariance::whiten(const PathMatrix& increments) const {
  PathMatrix out(increments.rows(), increments.cols());
  for (Eigen::Index c = 0; c < increments.cols(); ++c) {
    out.col(c) = chol_.triangularView<Eigen::Lower>().solve(Vector(increments.col(c)));
  }
  return out;
}

WhitenedFbm sample_fbm_whitened(const TimeGrid& grid, double H, std::size_t dim,
                                std::uint64_t seed) {
  check_hurst_range(H);
  const std::size_t n = grid.steps();
  WhitenedFbm out;
  out.xi.resize(n, dim);
  for (std::size_t c = 0; c < dim; ++c) {
    Rng rng = make_stream(seed, kFbmStream + c);
    std::normal_distribution<double> normal;
    for (std::size_t k = 0; k < n; ++k) out.xi(k, c) = normal(rng);
  }
  if (H == 0.5) {
    out.path = cumulate(out.xi * std::sqrt(grid.step()));
  } else {
    out.path = cumulate(IncrementCovariance(grid, H).color(out.xi));
  }
  return out;
}

// ----------------------------------------------------------- Volterra kernel

double volterra_kernel(double H, double t, double s) {
  check_hurst_range(H);
  if (!(s > 0.0 && s < t)) return 0.0;
  if (H == 0.5) return 1.0;
  if (H > 0.5) throw ParameterError("volterra_kernel implemented for H <= 1/2");
  const double a = 1.0 - 2.0 * H;
  const double b = H + 0.5;
  const double full_beta = boost::math::beta(a, b);
  const double c_h = std::sqrt(2.0 * H / (a * full_beta));
  const double first = std::pow(t, H - 0.5) * std::pow(s, 0.5 - H) * std::pow(t - s, H - 0.5);
  // s^{1/2-H} int_s^t u^{H-3/2}(u-s)^{H-1/2} du = s^{H-1/2} B(a,b) (1 - I_{s/t}(a,b)).
  const double second = std::pow(s, H - 0.5) * full_beta * boost::math::ibetac(a, b, s / t);
  return c_h * (first - (H - 0.5) * second);
}

namespace {

const QuadratureRule& legendre_rule(int points) {
  static const QuadratureRule four = gauss_legendre(4);
  static const QuadratureRule eight = gauss_legendre(8);
  return points <= 4 ? four : eight;
}

template <class F>
double integrate_smooth(const F& f, double a, double b, int points) {
  const QuadratureRule& rule = legendre_rule(points);
  const double half = 0.5 * (b - a);
  const double mid = 0.5 * (a + b);
  double sum = 0.0;
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) sum += rule.weights[i] * f(mid + half * rule.nodes[i]);
  return half * sum;
}

/// int over the segment between `singular` and `other` of f, where f has an
/// integrable |s - singular|^{H-1/2} blow-up at `singular`. Geometric grading
/// toward the singular end, Gauss–Jacobi on the innermost piece.
template <class F>
double integrate_graded(const F& f, double H, double singular, double other) {
  constexpr int kLevels = 40;
  const double expo = H - 0.5;
  const double length = other - singular;
  double sum = 0.0;
  double outer = 1.0;
  for (int level = 0; level < kLevels; ++level) {
    const double inner = 0.5 * outer;
    const double p = singular + length * inner;
    const double q = singular + length * outer;
    sum += integrate_smooth(f, std::min(p, q), std::max(p, q), 8);
    outer = inner;
  }
  // Innermost piece [singular, singular + length * outer], weight |s - singular|^expo.
  static thread_local std::map<double, QuadratureRule> cache;
  auto it = cache.find(expo);
  if (it == cache.end()) it = cache.emplace(expo, gauss_jacobi(8, 0.0, expo)).first;
  const QuadratureRule& rule = it->second;
  const double ell = std::abs(length) * outer;
  double inner_sum = 0.0;
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
    const double dist = 0.5 * ell * (1.0 + rule.nodes[i]);
    const double s = length > 0 ? singular + dist : singular - dist;
    inner_sum += rule.weights[i] * f(s) * std::pow(dist, -expo);
  }
  sum += std::pow(0.5 * ell, 1.0 + expo) * inner_sum;
  return sum;
}

}  // namespace

double volterra_cell_integral(double H, double t, double a, double b) {
  if (!(a >= 0.0 && a < b && b <= t)) throw ParameterError("cell must satisfy 0 <= a < b <= t");
  if (H == 0.5) return b - a;
  auto kernel = [H, t](double s) { return volterra_kernel(H, t, s); };
  const bool left = a == 0.0;
  const bool right = b == t;
  if (left && right) {
    const double mid = 0.5 * (a + b);
    return integrate_graded(kernel, H, a, mid) + integrate_graded(kernel, H, b, mid);
  }
  if (left) return integrate_graded(kernel, H, a, b);
  if (right) return integrate_graded(kernel, H, b, a);
  return integrate_smooth(kernel, a, b, 8);
}

namespace {

/// Unit-step Volterra increment matrix: D(k, j) = M(k+1, j) - M(k, j) with
/// M(i, j) = int_j^{j+1} K_H(i, s) ds.
Matrix unit_increment_matrix(std::size_t n, double H) {
  Matrix values = Matrix::Zero(n + 1, n);
  auto kernel_at = [H](double t) { return [H, t](double s) { return volterra_kernel(H, t, s); }; };
  for (std::size_t i = 1; i <= n; ++i) {
    const double t = static_cast<double>(i);
    auto kernel = kernel_at(t);
    for (std::size_t j = 0; j < i; ++j) {
      const double a = static_cast<double>(j);
      const double b = a + 1.0;
      const bool near = (j == 1) || (j + 2 == i);
      if (j == 0 || j + 1 == i) {
        values(i, j) = volterra_cell_integral(H, t, a, b);
      } else {
        values(i, j) = integrate_smooth(kernel, a, b, near ? 8 : 4);
      }
    }
  }
  Matrix increments(n, n);
  for (std::size_t k = 0; k < n; ++k) increments.row(k) = values.row(k + 1) - values.row(k);
  return increments;
}

}  // namespace

std::shared_ptr<const Matrix> volterra_increment_matrix(const TimeGrid& grid, double H) {
  check_hurst_range(H);
  const std::size_t n = grid.steps();
  if (H == 0.5) {
    return std::make_shared<const Matrix>(Matrix::Identity(n, n) * grid.step());
  }
  if (n > kMaxVolterraSteps) {
    throw ResourceError("Volterra matrix limited to " + std::to_string(kMaxVolterraSteps) + " steps");
  }
  using Key = std::tuple<std::size_t, double, double>;
  static std::mutex mutex;
  static std::map<Key, std::shared_ptr<const Matrix>> cache;
  const Key key{n, grid.horizon(), H};
  {
    std::lock_guard<std::mutex> lock(mutex);
    if (auto it = cache.find(key); it != cache.end()) return it->second;
  }
  // K_H(c t, c s) = c^{H-1/2} K_H(t, s): cell integrals scale by h^{H+1/2}.
  auto matrix = std::make_shared<const Matrix>(unit_increment_matrix(n, H) *
                                               std::pow(grid.step(), H + 0.5));
  std::lock_guard<std::mutex> lock(mutex);
  return cache.emplace(key, matrix).first->second;
}

// ------------------------------------------------------ Cameron–Martin space

CameronMartinControl CameronMartinControl::make(const TimeGrid& grid, double H, PathMatrix udot,
                                                PathMatrix vdot) {
  check_hurst_range(H);
  const auto n = static_cast<Eigen::Index>(grid.steps());
  if (udot.rows() != n || vdot.rows() != n) {
    throw ParameterError("control coefficients need one row per grid step");
  }
  if (!udot.allFinite() || !vdot.allFinite()) throw ParameterError("control has non-finite entries");
  CameronMartinControl ctrl;
  ctrl.grid = grid;
  ctrl.H = H;
  ctrl.udot = std::move(udot);
  ctrl.vdot = std::move(vdot);
  ctrl.sq_norm = cm_norm(ctrl);
  return ctrl;
}

CameronMartinControl CameronMartinControl::zero(const TimeGrid& grid, double H, std::size_t d,
                                                std::size_t e) {
  const auto n = static_cast<Eigen::Index>(grid.steps());
  return make(grid, H, PathMatrix::Zero(n, d), PathMatrix::Zero(n, e));
}

CameronMartinControl CameronMartinControl::scaled(double factor) const {
  return make(grid, H, udot * factor, vdot * factor);
}

double cm_norm(const CameronMartinControl& ctrl) {
  return (ctrl.udot.squaredNorm() + ctrl.vdot.squaredNorm()) * ctrl.grid.step();
}

std::pair<PathMatrix, PathMatrix> cm_increments(const CameronMartinControl& ctrl) {
  const double h = ctrl.grid.step();
  PathMatrix v_inc = ctrl.vdot * h;
  PathMatrix u_inc;
  if (ctrl.H == 0.5) {
    u_inc = ctrl.udot * h;
  } else if (ctrl.udot.cols() == 0 || ctrl.udot.isZero(0.0)) {
    u_inc = PathMatrix::Zero(ctrl.udot.rows(), ctrl.udot.cols());
  } else {
    const auto volterra = volterra_increment_matrix(ctrl.grid, ctrl.H);
    u_inc.resize(ctrl.udot.rows(), ctrl.udot.cols());
    for (Eigen::Index c = 0; c < ctrl.udot.cols(); ++c) {
      u_inc.col(c) = volterra->triangularView<Eigen::Lower>() * Vector(ctrl.udot.col(c));
    }
  }
  return {std::move(u_inc), std::move(v_inc)};
}

std::pair<PathMatrix, PathMatrix> cm_to_path(const CameronMartinControl& ctrl) {
  const auto inc = cm_increments(ctrl);
  return {cumulate(inc.first), cumulate(inc.second)};
}

// ----------------------------------------------------------------------- I/O

void write_path_csv(std::ostream& out, const TimeGrid& grid, const PathMatrix& path) {
  if (static_cast<std::size_t>(path.rows()) != grid.size()) {
    throw ParameterError("path rows do not match grid");
  }
  out << "t";
  for (Eigen::Index c = 0; c < path.cols(); ++c) out << ",comp_" << c;
  out << '\n' << std::setprecision(17);
  for (Eigen::Index k = 0; k < path.rows(); ++k) {
    out << grid.at(static_cast<std::size_t>(k));
    for (Eigen::Index c = 0; c < path.cols(); ++c) out << ',' << path(k, c);
    out << '\n';
  }
}

namespace {

std::vector<double> parse_row(const std::string& line) {
  std::vector<double> values;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    try {
      values.push_back(std::stod(cell));
    } catch (const std::exception&) {
      throw ParameterError("malformed CSV cell '" + cell + "'");
    }
  }
  return values;
}

std::size_t count_columns(const std::string& header) {
  return static_cast<std::size_t>(std::count(header.begin(), header.end(), ',')) + 1;
}

}  // namespace

std::pair<TimeGrid, PathMatrix> read_path_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("t", 0) != 0) throw ParameterError("missing CSV header");
  const std::size_t cols = count_columns(line) - 1;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto row = parse_row(line);
    if (row.size() != cols + 1) throw ParameterError("CSV row has wrong column count");
    rows.push_back(std::move(row));
  }
  if (rows.size() < 2) throw ParameterError("path CSV needs at least two rows");
  const TimeGrid grid = TimeGrid::make(rows.back()[0], rows.size() - 1);
  PathMatrix path(rows.size(), cols);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    for (std::size_t c = 0; c < cols; ++c) path(k, c) = rows[k][c + 1];
  }
  return {grid, path};
}

void write_control_csv(std::ostream& out, const CameronMartinControl& ctrl) {
  out << std::setprecision(17) << "# horizon=" << ctrl.grid.horizon() << " hurst=" << ctrl.H
      << " d=" << ctrl.d() << " e=" << ctrl.e() << '\n';
  out << "t";
  for (std::size_t c = 0; c < ctrl.d(); ++c) out << ",udot_" << c;
  for (std::size_t c = 0; c < ctrl.e(); ++c) out << ",vdot_" << c;
  out << '\n';
  for (std::size_t k = 0; k < ctrl.grid.steps(); ++k) {
    out << ctrl.grid.at(k);
    for (std::size_t c = 0; c < ctrl.d(); ++c) out << ',' << ctrl.udot(k, c);
    for (std::size_t c = 0; c < ctrl.e(); ++c) out << ',' << ctrl.vdot(k, c);
    out << '\n';
  }
}

CameronMartinControl read_control_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("# ", 0) != 0) {
    throw ParameterError("control CSV must start with a '# horizon=... hurst=...' line");
  }
  double horizon = 0.0, hurst = 0.0;
  std::size_t d = 0, e = 0;
  {
    std::stringstream ss(line.substr(2));
    std::string token;
    while (ss >> token) {
      const auto eq = token.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = token.substr(0, eq), value = token.substr(eq + 1);
      if (key == "horizon") horizon = std::stod(value);
      else if (key == "hurst") hurst = std::stod(value);
      else if (key == "d") d = std::stoul(value);
      else if (key == "e") e = std::stoul(value);
    }
  }
  if (!std::getline(in, line) || count_columns(line) != 1 + d + e) {
    throw ParameterError("control CSV header does not match d and e");
  }
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto row = parse_row(line);
    if (row.size() != 1 + d + e) throw ParameterError("control CSV row has wrong column count");
    rows.push_back(std::move(row));
  }
  const TimeGrid grid = TimeGrid::make(horizon, rows.size());
  PathMatrix udot(rows.size(), d), vdot(rows.size(), e);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    for (std::size_t c = 0; c < d; ++c) udot(k, c) = rows[k][1 + c];
    for (std::size_t c = 0; c < e; ++c) vdot(k, c) = rows[k][1 + d + c];
  }
  return CameronMartinControl::make(grid, hurst, std::move(udot), std::move(vdot));
}

}  // namespace roughflow
