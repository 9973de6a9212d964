#include <cmath>
#include <functional>

#include "doctest.h"
#include "roughflow/error.hpp"
#include "roughflow/rough_lift.hpp"

using namespace roughflow;

namespace {

double chen_defect(const Level2RoughPath& rp) {
  double worst = 0.0;
  const std::size_t n = rp.steps();
  for (std::size_t width = 2; width <= n; width *= 2) {
    for (std::size_t s = 0; s + width <= n; s += width) {
      const std::size_t u = s + width / 2, t = s + width;
      const Vector x1 = rp.first_between(s, u), x2 = rp.first_between(u, t);
      const Matrix lhs = rp.second_between(s, t);
      const Matrix rhs = rp.second_between(s, u) + rp.second_between(u, t) + x1 * x2.transpose();
      worst = std::max(worst, (lhs - rhs).cwiseAbs().maxCoeff());
      worst = std::max(worst, (rp.first_between(s, t) - x1 - x2).cwiseAbs().maxCoeff());
    }
  }
  return worst;
}

PathMatrix time_path(const TimeGrid& g, std::function<double(double)> f) {
  PathMatrix p(g.size(), 1);
  for (std::size_t k = 0; k < g.size(); ++k) p(k, 0) = f(g.at(k));
  return p;
}

}  // namespace

TEST_CASE("one-dimensional geometric area") {
  const TimeGrid fine = TimeGrid::make(1.0, 256);
  const PathMatrix b = sample_fbm(fine, 0.4, 1, 3);
  const Level2RoughPath rp = lift_path(fine, b, 4);
  CHECK(rp.steps() == 64);
  for (std::size_t s : {0u, 5u, 17u}) {
    const double x = rp.first_between(s, 64)(0);
    CHECK(std::abs(rp.second_between(s, 64)(0, 0) - 0.5 * x * x) < 1e-12);
  }
}

TEST_CASE("mixed lift block conventions") {
  const TimeGrid fine = TimeGrid::make(1.0, 512);
  const auto path = sample_mixed(fine, HurstParam::with_defaults(0.4), 2, 2, 17);
  const Level2RoughPath ito = lift_mixed(path, 8);
  const Level2RoughPath geo = lift_mixed(path, 8, BrownianArea::geometric);
  CHECK(ito.dim() == 4);
  CHECK(chen_defect(ito) < 1e-12);
  const Matrix a = ito.second_between(3, 40);
  const Vector x = ito.first_between(3, 40);
  // fBm block geometric, cross blocks sum to the product.
  CHECK(std::abs(a(0, 1) + a(1, 0) - x(0) * x(1)) < 1e-12);
  CHECK(std::abs(a(0, 0) - 0.5 * x(0) * x(0)) < 1e-12);
  CHECK(std::abs(a(0, 2) + a(2, 0) - x(0) * x(2)) < 1e-12);
  // Ito diagonal differs from geometric by half the quadratic variation.
  const Matrix g = geo.second_between(3, 40);
  CHECK(std::abs(g(2, 3) + g(3, 2) - x(2) * x(3)) < 1e-12);
  CHECK(g(2, 2) - a(2, 2) > 0.0);
  CHECK(std::abs(g(1, 1) - a(1, 1)) < 1e-15);
}

TEST_CASE("ito area is centred and refinement-consistent") {
  const TimeGrid fine = TimeGrid::make(1.0, 256);
  const HurstParam hp = HurstParam::with_defaults(0.4);
  // Sub-sampled copy of a Brownian path on a grid `stride` times coarser.
  auto subsample = [](const MixedDriverPath& p, std::size_t stride) {
    MixedDriverPath q = p;
    q.grid = p.grid.coarsen(stride);
    q.bH = PathMatrix(q.grid.size(), 0);
    q.w.resize(q.grid.size(), 1);
    for (std::size_t k = 0; k < q.grid.size(); ++k) q.w(k, 0) = p.w(k * stride, 0);
    return q;
  };
  const int reps = 2000;
  double mean = 0.0, sq = 0.0, err4 = 0.0, err8 = 0.0;
  for (int r = 0; r < reps; ++r) {
    const auto p = sample_mixed(fine, hp, 0, 1, 100 + r);
    const double v = lift_mixed(p, 16).second_between(0, 16)(0, 0);
    mean += v;
    sq += v * v;
    // First interval of a 16-step working grid at refine 4, 8 and 16.
    const double ref = lift_mixed(p, 16).areas()(0, 0);
    err4 += std::pow(lift_mixed(subsample(p, 4), 4).areas()(0, 0) - ref, 2);
    err8 += std::pow(lift_mixed(subsample(p, 2), 8).areas()(0, 0) - ref, 2);
  }
  mean /= reps;
  const double se = std::sqrt((sq / reps - mean * mean) / reps);
  CHECK(std::abs(mean) < 3 * se);
  CHECK(std::sqrt(err4 / err8) >= 1.3);
}

TEST_CASE("cameron-martin lift") {
  const TimeGrid g = TimeGrid::make(1.0, 4096);
  PathMatrix udot = PathMatrix::Ones(4096, 1), vdot(4096, 1);
  for (std::size_t k = 0; k < 4096; ++k) vdot(k, 0) = g.at(k) + g.at(k + 1);  // v = t^2 at grid points
  const auto ctrl = CameronMartinControl::make(g, 0.5, udot, vdot);
  const Level2RoughPath rp = lift_cm(ctrl);
  const Matrix a = rp.second_between(0, 4096);
  CHECK(a(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(std::abs(a(0, 1) - 2.0 / 3.0) < 1e-8);
  const auto zero = lift_cm(CameronMartinControl::zero(g, 0.4, 1, 1));
  CHECK(zero.areas().isZero(0.0));
  CHECK(chen_defect(lift_cm(CameronMartinControl::make(TimeGrid::make(1.0, 64), 0.4,
                                                       PathMatrix::Random(64, 2), PathMatrix::Random(64, 2)))) < 1e-12);
}

TEST_CASE("translation") {
  const TimeGrid fine = TimeGrid::make(1.0, 256);
  const auto path = sample_mixed(fine, HurstParam::with_defaults(0.4), 2, 2, 5);
  const Level2RoughPath base = lift_mixed(path, 4);
  const auto zero = CameronMartinControl::zero(base.grid(), 0.4, 2, 2);
  const Level2RoughPath same = translate(base, path.joined(), zero);
  CHECK((same.areas() - base.areas()).norm() == 0.0);
  CHECK((same.increments() - base.increments()).norm() == 0.0);

  const auto ctrl = CameronMartinControl::make(base.grid(), 0.4, PathMatrix::Random(64, 2),
                                               PathMatrix::Random(64, 2));
  const Level2RoughPath moved = translate(base, path.joined(), ctrl);
  CHECK(chen_defect(moved) < 1e-12);
  const auto [u, v] = cm_to_path(ctrl);
  CHECK(std::abs(moved.first_between(0, 64)(0) - base.first_between(0, 64)(0) - u(64, 0)) < 1e-12);
  CHECK(std::abs(moved.first_between(0, 64)(3) - base.first_between(0, 64)(3) - v(64, 1)) < 1e-12);
  CHECK_THROWS_AS(translate(base, path.joined(), CameronMartinControl::zero(base.grid(), 0.4, 1, 2)),
                  ParameterError);
}

TEST_CASE("translation of a smooth lift equals the lift of the sum") {
  const TimeGrid g = TimeGrid::make(1.0, 1024);
  PathMatrix x(g.size(), 2);
  for (std::size_t k = 0; k < g.size(); ++k) {
    x(k, 0) = std::sin(3 * g.at(k));
    x(k, 1) = g.at(k) * g.at(k);
  }
  const Level2RoughPath base = lift_path(g, x);
  PathMatrix udot(1024, 1), vdot(1024, 1);
  for (std::size_t k = 0; k < 1024; ++k) {
    udot(k, 0) = std::cos(g.at(k));
    vdot(k, 0) = 1.0 - g.at(k);
  }
  const auto ctrl = CameronMartinControl::make(g, 0.5, udot, vdot);
  const auto [u, v] = cm_to_path(ctrl);
  PathMatrix sum = x;
  sum.col(0) += u.col(0);
  sum.col(1) += v.col(0);
  const Level2RoughPath direct = lift_path(g, sum);
  const Level2RoughPath moved = translate(base, x, ctrl);
  CHECK((direct.areas() - moved.areas()).cwiseAbs().maxCoeff() < 1e-8);
  CHECK((direct.second_between(0, 1024) - moved.second_between(0, 1024)).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("translate_slow matches the slow block of the full translation") {
  const TimeGrid fine = TimeGrid::make(1.0, 128);
  const auto path = sample_mixed(fine, HurstParam::with_defaults(0.4), 1, 0, 8);
  const Level2RoughPath b = lift_mixed(path, 2);
  PathMatrix udot = PathMatrix::Random(64, 1);
  const auto ctrl = CameronMartinControl::make(b.grid(), 0.4, udot, PathMatrix(64, 0));
  const double eps = 0.3;
  const Level2RoughPath slow = translate_slow(b, path.bH, eps, ctrl);
  const Level2RoughPath ref = lift_path(fine, std::sqrt(eps) * path.bH, 2);
  CHECK(std::abs(slow.first_between(0, 64)(0) - ref.first_between(0, 64)(0) - cm_to_path(ctrl).first(64, 0)) < 1e-12);
  const double x = slow.first_between(0, 64)(0);
  CHECK(std::abs(slow.second_between(0, 64)(0, 0) - 0.5 * x * x) < 1e-12);
}

TEST_CASE("dilation") {
  const TimeGrid fine = TimeGrid::make(1.0, 64);
  const auto path = sample_mixed(fine, HurstParam::with_defaults(0.45), 1, 1, 2);
  const Level2RoughPath rp = lift_mixed(path, 2);
  const Level2RoughPath q = dilate(rp, 0.25);
  CHECK((q.increments() - 0.5 * rp.increments()).norm() == 0.0);
  CHECK((q.areas() - 0.25 * rp.areas()).norm() == 0.0);
  CHECK((dilate(rp, 1.0).areas() - rp.areas()).norm() == 0.0);
  const Level2RoughPath ab = dilate(dilate(rp, 0.3), 0.7), direct = dilate(rp, 0.21);
  CHECK((ab.areas() - direct.areas()).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((dilate(rp.coarsen(4), 0.3).areas() - dilate(rp, 0.3).coarsen(4).areas()).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("holder norms") {
  const TimeGrid g = TimeGrid::make(1.0, 64);
  const Level2RoughPath lin = lift_path(g, time_path(g, [](double t) { return 3.0 * t; }));
  const HolderReport rep = holder_norms(lin, 0.3, HolderMethod::exact);
  CHECK(rep.first_level_norm == doctest::Approx(3.0));
  CHECK(rep.triple_norm == rep.first_level_norm + rep.second_level_norm);
  CHECK(holder_norms(Level2RoughPath::zero(g, 2), 0.3).triple_norm == 0.0);
  CHECK_THROWS_AS(holder_norms(lin, 0.6), ParameterError);
  const HolderReport dy = holder_norms(lin, 0.3, HolderMethod::dyadic);
  CHECK(dy.dyadic);
  CHECK(dy.first_level_norm == doctest::Approx(3.0));

  int stable = 0;
  for (int seed = 0; seed < 10; ++seed) {
    const TimeGrid f = TimeGrid::make(1.0, 1 << 13);
    const PathMatrix b = sample_fbm(f, 0.4, 1, 40 + seed);
    const double n13 = holder_norms(lift_path(f, b), 0.38, HolderMethod::dyadic).first_level_norm;
    const double n12 = holder_norms(lift_path(f, b, 2), 0.38, HolderMethod::dyadic).first_level_norm;
    const double ratio = n13 / n12;
    stable += (ratio >= 0.8 && ratio <= 1.25);
  }
  CHECK(stable >= 9);
}

TEST_CASE("rough distance is a metric on samples") {
  const TimeGrid fine = TimeGrid::make(1.0, 64);
  const HurstParam hp = HurstParam::with_defaults(0.4);
  auto make = [&](int s) { return lift_mixed(sample_mixed(fine, hp, 1, 1, s), 2); };
  const Level2RoughPath a = make(1), b = make(2);
  CHECK(rough_distance(a, a, 0.35) == 0.0);
  CHECK(rough_distance(a, b, 0.35) == rough_distance(b, a, 0.35));
  for (int t = 0; t < 100; ++t) {
    const Level2RoughPath x = make(3 * t + 10), y = make(3 * t + 11), z = make(3 * t + 12);
    CHECK(rough_distance(x, z, 0.35) <= rough_distance(x, y, 0.35) + rough_distance(y, z, 0.35) + 1e-12);
  }
}

TEST_CASE("json round trip is lossless") {
  const TimeGrid fine = TimeGrid::make(2.0, 32);
  const auto rp = lift_mixed(sample_mixed(fine, HurstParam::with_defaults(0.4), 1, 2, 4), 2);
  const auto back = rough_path_from_json(to_json(rp));
  CHECK(back.grid() == rp.grid());
  CHECK((back.areas() - rp.areas()).norm() == 0.0);
  CHECK((back.increments() - rp.increments()).norm() == 0.0);
}
