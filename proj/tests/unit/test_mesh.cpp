#include <algorithm>
#include <cmath>
#include <random>

#include "aerocrowd/error.hpp"
#include "aerocrowd/fast_marching.hpp"
#include "aerocrowd/interpolation.hpp"
#include "doctest.h"

using namespace aerocrowd;

namespace {

GridGeometry room(double w, double h_dom, double h) {
  GridGeometry g;
  g.width = w;
  g.height = h_dom;
  g.h = h;
  return g;
}

std::vector<int> cells_of(const Grid& g, CellKind kind) {
  std::vector<int> out;
  for (int k = 0; k < g.size(); ++k) {
    if (g.kind(k) == kind) out.push_back(k);
  }
  return out;
}

// Exact distance from a cell centre to the nearest wall-cell centre of an
// empty walled square (walls are the outer ring).
double exact_ring_distance(const Grid& g, int idx) {
  const Vec2 c = g.center(idx);
  const double lo = 0.5 * g.h();
  const double hi_x = g.width() - 0.5 * g.h();
  const double hi_y = g.height() - 0.5 * g.h();
  return std::min({c.x - lo, hi_x - c.x, c.y - lo, hi_y - c.y});
}

}  // namespace

TEST_CASE("build_grid classifies an empty room") {
  const Grid g = build_grid(room(10.0, 10.0, 0.1));
  CHECK(g.nx() == 100);
  CHECK(g.ny() == 100);
  for (int j = 0; j < g.ny(); ++j) {
    for (int i = 0; i < g.nx(); ++i) {
      if (g.on_boundary(i, j)) {
        CHECK(g.kind(i, j) == CellKind::kWall);
      } else {
        CHECK(g.kind(i, j) == CellKind::kFluid);
      }
    }
  }
}

TEST_CASE("axis-aligned wall segment rasterizes to one row") {
  auto geo = room(10.0, 10.0, 0.1);
  WallShape w;
  w.segment = {{2.0, 5.0}, {7.95, 5.0}};
  geo.walls.push_back(w);
  const Grid g = build_grid(geo);
  int rows_touched = 0;
  for (int j = 1; j < g.ny() - 1; ++j) {
    int walls = 0;
    for (int i = 1; i < g.nx() - 1; ++i) walls += g.kind(i, j) == CellKind::kWall;
    if (walls > 0) {
      ++rows_touched;
      CHECK(j == 50);
      CHECK(walls == 60);
    }
  }
  CHECK(rows_touched == 1);
}

TEST_CASE("diagonal wall leaves no 4-connected leak") {
  auto geo = room(4.0, 4.0, 0.1);
  WallShape w;
  w.segment = {{0.0, 0.0}, {4.0, 4.0}};
  geo.walls.push_back(w);
  const Grid g = build_grid(geo);
  std::vector<int> src{g.index(30, 5)};
  const ScalarField d = fast_march_distance(g, src);
  CHECK(d(5, 30) == kUnreachable);
  CHECK(std::isfinite(d(35, 3)));
}

TEST_CASE("under-resolved openings and out-of-domain geometry are rejected") {
  auto geo = room(10.0, 10.0, 0.1);
  geo.doors.push_back({5.0, 3.0, 5.15, 3.0});
  CHECK_THROWS_WITH_AS(build_grid(geo), doctest::Contains("opening under-resolved"), ConfigError);

  auto geo2 = room(10.0, 10.0, 0.1);
  WallShape w;
  w.segment = {{-1.0, 5.0}, {3.0, 5.0}};
  geo2.walls.push_back(w);
  CHECK_THROWS_AS(build_grid(geo2), ConfigError);

  auto geo3 = room(10.0, 10.0, 0.1);
  geo3.outlets.push_back({9.9, 4.0, 10.5, 5.0});
  CHECK_THROWS_AS(build_grid(geo3), ConfigError);

  CHECK_THROWS_AS(build_grid(room(0.3, 10.0, 0.1)), ConfigError);
}

TEST_CASE("inlets and outlets claim boundary cells and doors open walls") {
  auto geo = room(6.0, 3.0, 0.1);
  geo.inlets.push_back({0.0, 1.0, 0.1, 2.0});
  geo.outlets.push_back({5.9, 1.0, 6.0, 2.0});
  WallShape w;
  w.type = WallShape::Type::kRect;
  w.rect = {3.0, 0.0, 3.1, 3.0};
  geo.walls.push_back(w);
  geo.doors.push_back({3.0, 1.2, 3.1, 1.8});
  const Grid g = build_grid(geo);
  CHECK(g.count(CellKind::kInlet) == 10);
  CHECK(g.count(CellKind::kOutlet) == 10);
  CHECK(g.kind(0, 15) == CellKind::kInlet);
  CHECK(g.region(g.index(0, 15)) == 0);
  CHECK(g.kind(30, 15) == CellKind::kFluid);
  CHECK(g.kind(30, 5) == CellKind::kWall);
  for (int j = 0; j < g.ny(); ++j) {
    for (int i = 0; i < g.nx(); ++i) {
      if (g.on_boundary(i, j)) CHECK(g.kind(i, j) != CellKind::kFluid);
    }
  }
}

TEST_CASE("fast_march_distance basic cases") {
  Grid g(20, 20, 0.1);
  SUBCASE("empty source set is an error") {
    std::vector<int> none;
    CHECK_THROWS_AS(fast_march_distance(g, none), ConfigError);
  }
  SUBCASE("all cells are sources") {
    std::vector<int> all(g.size());
    for (int k = 0; k < g.size(); ++k) all[k] = k;
    const auto d = fast_march_distance(g, all);
    for (int k = 0; k < g.size(); ++k) CHECK(d[k] == 0.0);
  }
  SUBCASE("walled-off region is unreachable") {
    for (int j = 0; j < 20; ++j) g.set_kind(g.index(10, j), CellKind::kWall);
    std::vector<int> src{g.index(2, 2)};
    const auto d = fast_march_distance(g, src);
    CHECK(std::isfinite(d(9, 19)));
    CHECK(d(10, 5) == kUnreachable);
    CHECK(d(15, 5) == kUnreachable);
  }
}

TEST_CASE("point source distance is within O(h) of Euclidean") {
  // Brute-force oracle: distance between cell centres.
  for (double h : {0.2, 0.1, 0.05}) {
    const int n = static_cast<int>(std::lround(10.0 / h));
    Grid g(n, n, h);
    const int src = g.index(n / 2, n / 2);
    std::vector<int> s{src};
    const auto d = fast_march_distance(g, s);
    double err = 0.0;
    for (int k = 0; k < g.size(); ++k) err = std::max(err, std::abs(d[k] - norm(g.center(k) - g.center(src))));
    // First-order marching from a point grows like h log(1/h): C = 1.09, 1.31, 1.55.
    CHECK(err <= 1.6 * h);
    CHECK(d[src] == 0.0);
  }
}

TEST_CASE("wall distance on an empty square converges with C <= 1.5") {
  for (double h : {0.2, 0.1, 0.05}) {
    const Grid g = build_grid(room(10.0, 10.0, h));
    DistanceMaps maps;
    compute_wall_distance(g, maps);
    double err = 0.0;
    for (int k = 0; k < g.size(); ++k) err = std::max(err, std::abs(maps.d_w[k] - exact_ring_distance(g, k)));
    CHECK(err / h <= 1.5);
    for (int k : cells_of(g, CellKind::kWall)) CHECK(maps.d_w[k] == 0.0);
  }
}

TEST_CASE("wall distance gradient has unit length off the medial axis") {
  const Grid g = build_grid(room(6.0, 4.0, 0.1));
  DistanceMaps maps;
  compute_wall_distance(g, maps);
  const VectorField raw = gradient_field(g, maps.d_w);
  int checked = 0;
  for (int j = 1; j < g.ny() - 1; ++j) {
    for (int i = 1; i < g.nx() - 1; ++i) {
      // Skeleton cells: forward and backward one-sided slopes disagree.
      const double fx = maps.d_w(i + 1, j) - maps.d_w(i, j), bx = maps.d_w(i, j) - maps.d_w(i - 1, j);
      const double fy = maps.d_w(i, j + 1) - maps.d_w(i, j), by = maps.d_w(i, j) - maps.d_w(i, j - 1);
      if (std::abs(fx - bx) > 1e-9 || std::abs(fy - by) > 1e-9) continue;
      CHECK(norm(raw.at(g.index(i, j))) == doctest::Approx(1.0).epsilon(1e-6));
      ++checked;
    }
  }
  CHECK(checked > g.size() / 2);
}

TEST_CASE("fast marching is independent of heap tie-breaking and monotone") {
  auto geo = room(8.0, 5.0, 0.1);
  WallShape w;
  w.type = WallShape::Type::kRect;
  w.rect = {3.0, 1.0, 3.4, 4.0};
  geo.walls.push_back(w);
  const Grid g = build_grid(geo);
  std::vector<int> src{g.index(70, 25), g.index(10, 10), g.index(10, 40)};
  std::vector<int> order;
  MarchOptions lo{TieBreak::kLowestIndex, &order};
  MarchOptions hi{TieBreak::kHighestIndex, nullptr};
  const auto a = fast_march_distance(g, src, lo);
  const auto b = fast_march_distance(g, src, hi);
  for (int k = 0; k < g.size(); ++k) {
    if (std::isfinite(a[k])) {
      CHECK(std::abs(a[k] - b[k]) <= 1e-12);
    } else {
      CHECK(b[k] == kUnreachable);
    }
  }
  for (size_t k = 1; k < order.size(); ++k) CHECK(a[order[k]] >= a[order[k - 1]]);
}

TEST_CASE("time to exit along a straight corridor") {
  auto geo = room(20.3, 2.0, 0.1);
  const Grid g = build_grid(geo);
  // Exit column just inside the left end, far end one column before the right wall.
  std::vector<int> exits;
  for (int j = 1; j < g.ny() - 1; ++j) exits.push_back(g.index(1, j));
  const auto tau = fast_march_time_to_exit(g, exits, 1.35);
  const double far = tau(g.nx() - 2, g.ny() / 2);
  const double analytic = (g.center(g.nx() - 2, 0).x - g.center(1, 0).x) / 1.35;
  CHECK(analytic == doctest::Approx(20.0 / 1.35).epsilon(1e-9));
  CHECK(far == doctest::Approx(analytic).epsilon(0.05));
  for (int e : exits) CHECK(tau[e] == 0.0);
  CHECK(tau(0, 5) == kUnreachable);
  CHECK_THROWS_AS(fast_march_time_to_exit(g, exits, 0.0), ConfigError);
}

TEST_CASE("two exits give the pointwise minimum of single-exit fields") {
  const Grid g = build_grid(room(12.0, 6.0, 0.1));
  std::vector<int> e1{g.index(1, 30)};
  std::vector<int> e2{g.index(100, 1)};
  std::vector<int> both{e1[0], e2[0]};
  const auto t1 = fast_march_time_to_exit(g, e1, 1.35);
  const auto t2 = fast_march_time_to_exit(g, e2, 1.35);
  const auto tb = fast_march_time_to_exit(g, both, 1.35);
  double worst = 0.0;
  for (int k = 0; k < g.size(); ++k) {
    if (!std::isfinite(tb[k])) continue;
    worst = std::max(worst, std::abs(tb[k] - std::min(t1[k], t2[k])));
  }
  // Fronts only interact in the Godunov update along the meeting line.
  CHECK(worst <= g.h() / 1.35);
}

TEST_CASE("interpolate") {
  Grid g(10, 8, 0.5, {1.0, -2.0});
  ScalarField f(g);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int k = 0; k < f.size(); ++k) f[k] = u(rng);

  SUBCASE("cell centre returns the cell value") {
    CHECK(interpolate(g, f, g.center(3, 4)) == doctest::Approx(f(3, 4)).epsilon(1e-14));
  }
  SUBCASE("centre of a 2x2 stencil is the mean") {
    const Vec2 p = 0.5 * (g.center(2, 2) + g.center(3, 3));
    const double mean = 0.25 * (f(2, 2) + f(3, 2) + f(2, 3) + f(3, 3));
    CHECK(interpolate(g, f, p) == doctest::Approx(mean).epsilon(1e-14));
  }
  SUBCASE("linear fields are reproduced exactly") {
    const double a = 0.7, b = -1.3, c = 2.1;
    for (int k = 0; k < f.size(); ++k) {
      const Vec2 x = g.center(k);
      f[k] = a + b * x.x + c * x.y;
    }
    std::uniform_real_distribution<double> px(g.origin().x + 0.5 * g.h(), g.origin().x + g.width() - 0.5 * g.h());
    std::uniform_real_distribution<double> py(g.origin().y + 0.5 * g.h(), g.origin().y + g.height() - 0.5 * g.h());
    for (int trial = 0; trial < 200; ++trial) {
      const Vec2 p{px(rng), py(rng)};
      CHECK(interpolate(g, f, p) == doctest::Approx(a + b * p.x + c * p.y).epsilon(1e-12));
    }
  }
  SUBCASE("edge clamps to the nearest cell") {
    CHECK(interpolate(g, f, g.origin()) == doctest::Approx(f(0, 0)));
  }
  SUBCASE("points outside the domain throw") {
    CHECK_THROWS_AS(interpolate(g, f, {0.0, 0.0}), std::out_of_range);
    CHECK_THROWS_AS(sample_gradient(g, f, {100.0, 0.0}), std::out_of_range);
  }
}

TEST_CASE("sample_gradient") {
  Grid g(12, 9, 0.25);
  ScalarField fx(g), fc(g, 4.0), fxy(g);
  for (int k = 0; k < g.size(); ++k) {
    fx[k] = g.center(k).x;
    fxy[k] = g.center(k).x + 2.0 * g.center(k).y;
  }
  const Vec2 pts[] = {{1.3, 0.9}, {0.01, 0.01}, {2.99, 2.2}, {1.5, 2.249}};
  for (const Vec2& p : pts) {
    const Vec2 gx = sample_gradient(g, fx, p);
    CHECK(gx.x == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(gx.y) <= 1e-12);
    const Vec2 gc = sample_gradient(g, fc, p);
    CHECK(std::abs(gc.x) + std::abs(gc.y) == 0.0);
    const Vec2 gxy = sample_gradient(g, fxy, p);
    CHECK(std::abs(gxy.x - 1.0) <= 1e-12);
    CHECK(std::abs(gxy.y - 2.0) <= 1e-12);
  }
}
