#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "aerocrowd/error.hpp"
#include "aerocrowd/interpolation.hpp"
#include "aerocrowd/pedestrians.hpp"

using namespace aerocrowd;

namespace {

Grid room(double w, double h_dom, double h = 0.1) {
  GridGeometry geo;
  geo.width = w;
  geo.height = h_dom;
  geo.h = h;
  return build_grid(geo);
}

Pedestrian walker(int id, Vec2 x, Vec2 v = {}) {
  Pedestrian p;
  p.id = id;
  p.x = x;
  p.prev_x = x;
  p.v = v;
  p.pushiness = 0.0;
  return p;
}

TraitParams fixed_traits() {
  TraitParams t;
  t.pushiness_min = t.pushiness_max = 0.0;
  return t;
}

}  // namespace

TEST_CASE("will force") {
  Pedestrian p = walker(0, {});
  const Vec2 a = will_force(p, {1.0, 0.0});
  CHECK(norm(a) == doctest::Approx(2.7));
  p.v = {1.35, 0.0};
  CHECK(norm(will_force(p, {1.0, 0.0})) == 0.0);
}

TEST_CASE("free relaxation follows v_d (1 - exp(-t/t_r))") {
  const Grid g = room(200.0, 200.0, 1.0);
  CrowdEnvironment env = CrowdEnvironment::build(g, {{{199.0, 99.0, 200.0, 101.0}}}, 1.35);
  Crowd crowd(g, env, {}, fixed_traits(), {});
  Rng rng(1);
  Pedestrian& p = crowd.add({100.0, 100.0}, Health::kSusceptible, -1, 0.0, rng);
  p.goal.route.push_back({{190.0, 100.0}, 0.5});
  const double dt = 0.05;
  double worst = 0.0;
  for (int n = 1; n <= 100; ++n) {
    crowd.integrate(0.0, dt);
    const double t = n * dt;
    const double exact = 1.35 * (1.0 - std::exp(-t / 0.5));
    worst = std::max(worst, std::abs(norm(crowd.peds()[0].v) - exact) / exact);
    if (n == 10) CHECK(norm(crowd.peds()[0].v) == doctest::Approx(0.632 * 1.35).epsilon(0.01));
  }
  CHECK(worst < 0.01);
}

TEST_CASE("desired direction") {
  CHECK(waypoint_direction({0.0, 0.0}, {3.0, 4.0}) == Vec2{0.6, 0.8});
  CHECK(waypoint_direction({1.0, 1.0}, {1.0, 1.0}) == Vec2{});

  const Grid g = room(20.0, 4.0);
  const CrowdEnvironment env = CrowdEnvironment::build(g, {{{19.9, 1.0, 20.0, 3.0}}}, 1.35);
  Pedestrian p = walker(0, {});
  double worst = 0.0;
  for (double x = 1.5; x <= 15.0; x += 0.37) {
    for (double y = 1.2; y <= 2.8; y += 0.2) {
      p.x = {x, y};
      const Vec2 s = desired_direction(p, env, 0.0);
      worst = std::max(worst, std::abs(std::atan2(s.y, s.x)) * 180.0 / std::numbers::pi);
    }
  }
  CHECK(worst <= 2.0);
  // Loitering pedestrians want to stand still.
  p.goal.route.push_back({{5.0, 2.0}, 0.5, 1.0, 2.0});
  p.goal.loiter_until = 3.0;
  CHECK(desired_direction(p, env, 1.0) == Vec2{});
}

TEST_CASE("avoidance force") {
  CrowdParams params;
  std::vector<Pedestrian> peds{walker(0, {0.0, 0.0}, {1.0, 0.0}), walker(1, {0.25, 0.0})};
  const std::vector<int> nbrs{0, 1};
  const Vec2 e{1.0, 0.0};
  SUBCASE("rho = 1 gives half the maximum") {
    CHECK(norm(avoidance_force(peds[0], peds, nbrs, e, params)) == doctest::Approx(5.4));
  }
  SUBCASE("neighbour behind is ignored") {
    peds[1].x = {-0.5, 0.1};
    peds[1].v = {2.0, 0.0};
    CHECK(avoidance_force(peds[0], peds, nbrs, e, params) == Vec2{});
  }
  SUBCASE("fully pushy pedestrians do not avoid") {
    peds[0].pushiness = 1.0;
    CHECK(avoidance_force(peds[0], peds, nbrs, e, params) == Vec2{});
    peds[0].pushiness = 0.5;
    CHECK(norm(avoidance_force(peds[0], peds, nbrs, e, params)) == doctest::Approx(2.7));
  }
  SUBCASE("far range is tangential, head-on steers right") {
    peds[1].x = {2.0, 0.0};
    const Vec2 f = avoidance_force(peds[0], peds, nbrs, e, params);
    CHECK(std::abs(f.x) < 1e-15);
    CHECK(f.y < 0.0);
    CHECK(norm(f) == doctest::Approx(10.8 / 65.0));
  }
  SUBCASE("close range decelerates") {
    peds[1].x = {0.4, 0.0};
    const Vec2 f = avoidance_force(peds[0], peds, nbrs, e, params);
    CHECK(f.x < 0.0);
    CHECK(f.x == doctest::Approx(f.y));
  }
  SUBCASE("neighbours off the collision course are ignored") {
    peds[1].x = {2.0, 1.5};
    CHECK(avoidance_force(peds[0], peds, nbrs, e, params) == Vec2{});
  }
  SUBCASE("steer away from an offset neighbour") {
    peds[1].x = {2.0, -0.3};
    CHECK(avoidance_force(peds[0], peds, nbrs, e, params).y > 0.0);
  }
}

TEST_CASE("wall force") {
  const Grid g = room(6.0, 6.0);
  const CrowdEnvironment env = CrowdEnvironment::build(g, {{{5.9, 2.0, 6.0, 4.0}}}, 1.35);
  CrowdParams params;
  Pedestrian p = walker(0, {3.0, 0.6});
  const double d = 0.6 - 0.05;  // distance to the bottom wall cell centres
  const Vec2 f = wall_force(p, env, params);
  CHECK(norm(f) == doctest::Approx(21.6 / (1.0 + (d / 0.25) * (d / 0.25))).epsilon(0.02));
  CHECK(f.y > 0.99 * norm(f));
  p.x = {3.0, 3.0};
  CHECK(norm(wall_force(p, env, params)) < 21.6 / (1.0 + 100.0));
}

namespace {

// Pedestrian driven at the bottom wall; returns the final wall distance.
double wall_standoff(double t_r, double force_scale, double* min_d = nullptr) {
  const Grid g = room(6.0, 6.0);
  CrowdEnvironment env = CrowdEnvironment::build(g, {{{5.9, 4.0, 6.0, 5.0}}}, 1.35);
  CrowdParams params;
  params.force_scale = force_scale;
  TraitParams traits = fixed_traits();
  traits.relaxation_time = t_r;
  Crowd crowd(g, env, params, traits, {});
  Rng rng(3);
  Pedestrian& p = crowd.add({3.0, 3.0}, Health::kSusceptible, -1, 0.0, rng);
  p.goal.route.push_back({{3.0, -50.0}, 0.1});
  double lowest = 1e9;
  for (int n = 0; n < 1200; ++n) {
    crowd.integrate(0.0, 0.05);
    lowest = std::min(lowest, interpolate(g, crowd.environment().d_w, crowd.peds()[0].x));
  }
  if (min_d) *min_d = lowest;
  return interpolate(g, crowd.environment().d_w, crowd.peds()[0].x);
}

}  // namespace

TEST_CASE("wall standoff equilibrium") {
  double lowest = 0.0;
  const double d = wall_standoff(0.5, 1.0, &lowest);
  // Will and wall forces balance at rest: 1 = 8 / (1 + (d/r)^2).
  CHECK(d == doctest::Approx(0.25 * std::sqrt(7.0)).epsilon(0.02));
  CHECK(lowest > 0.0);
  SUBCASE("common force scaling leaves the equilibrium unchanged") {
    CHECK(std::abs(wall_standoff(0.5 / 3.0, 3.0) - d) < 1e-6);
    CHECK(std::abs(wall_standoff(0.25, 1.0) - d) < 1e-6);
  }
}

TEST_CASE("force scale is equivalent to dividing t_r") {
  auto trajectory = [](double t_r, double scale) {
    const Grid g = room(50.0, 50.0, 0.5);
    CrowdEnvironment env = CrowdEnvironment::build(g, {{{49.5, 20.0, 50.0, 30.0}}}, 1.35);
    CrowdParams params;
    params.force_scale = scale;
    params.wall_ratio = 0.0;
    TraitParams traits = fixed_traits();
    traits.relaxation_time = t_r;
    Crowd crowd(g, env, params, traits, {});
    Rng rng(5);
    crowd.add({10.0, 25.0}, Health::kSusceptible, -1, 0.0, rng).goal.route.push_back({{30.0, 40.0}, 0.1});
    std::vector<Vec2> xs;
    for (int n = 0; n < 100; ++n) {
      crowd.integrate(0.0, 0.05);
      xs.push_back(crowd.peds()[0].x);
    }
    return xs;
  };
  const auto a = trajectory(0.5, 2.0);
  const auto b = trajectory(0.25, 1.0);
  double worst = 0.0;
  for (size_t k = 0; k < a.size(); ++k) worst = std::max(worst, norm(a[k] - b[k]));
  CHECK(worst < 1e-12);
}

TEST_CASE("contact force") {
  CrowdParams params;
  Pedestrian a = walker(0, {0.0, 0.0});
  Pedestrian b = walker(1, {0.25, 0.0});
  const double f = 8.0 * 2.7;
  CHECK(norm(contact_force(a, b, params)) == doctest::Approx(0.8 * f));
  CHECK(contact_force(a, b, params) + contact_force(b, a, params) == Vec2{});
  CHECK(contact_force(a, b, params).x < 0.0);
  b.x = {0.6, 0.0};  // rho = 1.2
  CHECK(norm(contact_force(a, b, params)) == doctest::Approx(2.0 * f / (1.0 + 1.44)));
  b.x = {0.8, 0.0};  // rho = 1.6, beyond the cutoff
  CHECK(contact_force(a, b, params) == Vec2{});
  SUBCASE("coincident centres separate along the previous offset") {
    b.x = a.x;
    b.prev_x = {0.0, 0.1};
    const Vec2 fa = contact_force(a, b, params);
    CHECK(fa.y < 0.0);
    CHECK(fa + contact_force(b, a, params) == Vec2{});
  }
}

TEST_CASE("motion inhibition") {
  CrowdParams params;
  std::vector<Pedestrian> peds{walker(0, {0.0, 0.0}), walker(1, {0.8, 0.0})};
  CHECK(motion_inhibition(peds[0], peds, {0}, {1.0, 0.0}, params) == doctest::Approx(1.35));
  CHECK(motion_inhibition(peds[0], peds, {0, 1}, {1.0, 0.0}, params) == doctest::Approx(0.6));
  peds[1].x = {0.4, 0.0};
  CHECK(motion_inhibition(peds[0], peds, {0, 1}, {1.0, 0.0}, params) == 0.0);
  CHECK(motion_inhibition(peds[0], peds, {0, 1}, {-1.0, 0.0}, params) == doctest::Approx(1.35));
}

TEST_CASE("single-file queue slows with density") {
  auto mean_speed = [](double spacing) {
    const Grid g = room(40.0, 1.4);
    CrowdEnvironment env = CrowdEnvironment::build(g, {{{39.9, 0.2, 40.0, 1.2}}}, 1.35);
    CrowdParams params;
    Crowd crowd(g, env, params, fixed_traits(), {});
    Rng rng(9);
    for (int k = 0; k < 12; ++k) {
      Pedestrian& p = crowd.add({12.0 - k * spacing, 0.7}, Health::kSusceptible, -1, 0.0, rng);
      p.goal.exit_group = 0;
      p.v = {1.35, 0.0};
    }
    double sum = 0.0;
    int count = 0;
    for (int n = 0; n < 40; ++n) {
      crowd.integrate(0.0, 0.05);
      for (size_t k = 1; k < crowd.peds().size(); ++k, ++count) sum += norm(crowd.peds()[k].v);
    }
    return sum / count;
  };
  const double sparse = mean_speed(1.4);
  const double medium = mean_speed(0.9);
  const double dense = mean_speed(0.65);
  CHECK(sparse > medium);
  CHECK(medium > dense);
}

TEST_CASE("RK2 integration") {
  SUBCASE("zero force moves in a straight line") {
    std::vector<Vec2> x{{1.0, 2.0}}, v{{0.5, -0.25}};
    rk2_step(x, v, 0.1, [](auto, auto, std::span<Vec2> a) { a[0] = {}; });
    CHECK(x[0].x == doctest::Approx(1.05));
    CHECK(x[0].y == doctest::Approx(1.975));
  }
  SUBCASE("harmonic oscillator radius drift is second order") {
    auto drift = [](double dt) {
      std::vector<Vec2> x{{1.0, 0.0}}, v{{0.0, 1.0}};
      const int steps = static_cast<int>(std::lround(2.0 * std::numbers::pi / dt));
      for (int n = 0; n < steps; ++n) {
        rk2_step(x, v, dt, [](std::span<const Vec2> xs, auto, std::span<Vec2> a) { a[0] = -xs[0]; });
      }
      return std::abs(norm(x[0]) - 1.0);
    };
    const double d1 = drift(0.02);
    const double d2 = drift(0.01);
    CHECK(d1 <= 0.02 * 0.02);
    CHECK(d1 / d2 > 3.5);
  }
}

TEST_CASE("neighbour query matches brute force") {
  NeighborIndex index(1.0);
  std::vector<Pedestrian> none;
  index.build(none);
  CHECK(index.query({0.0, 0.0}, 3.0).empty());

  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Pedestrian> peds;
    for (int k = 0; k < 200; ++k) {
      // Ids deliberately out of storage order.
      peds.push_back(walker((k * 37) % 200, {rng.uniform(-10.0, 10.0), rng.uniform(-10.0, 10.0)}));
    }
    index.build(peds);
    for (int q = 0; q < 10; ++q) {
      const Vec2 c{rng.uniform(-11.0, 11.0), rng.uniform(-11.0, 11.0)};
      const double radius = rng.uniform(0.0, 6.0);
      std::vector<int> brute;
      for (size_t k = 0; k < peds.size(); ++k) {
        if (norm2(peds[k].x - c) <= radius * radius) brute.push_back(static_cast<int>(k));
      }
      std::sort(brute.begin(), brute.end(), [&](int a, int b) { return peds[a].id < peds[b].id; });
      CHECK(index.query(c, radius) == brute);
    }
  }
  std::vector<Pedestrian> pair{walker(0, {1.0, 1.0}), walker(1, {1.0, 1.0}), walker(2, {1.0, 1.1})};
  index.build(pair);
  CHECK(index.query({1.0, 1.0}, 0.0) == std::vector<int>{0, 1});
}

TEST_CASE("head-on pair keeps clearance and action equals reaction") {
  const Grid g = room(20.0, 8.0);
  CrowdEnvironment env = CrowdEnvironment::build(g, {{{19.9, 3.0, 20.0, 5.0}}}, 1.35);
  Crowd crowd(g, env, {}, fixed_traits(), {});
  Rng rng(2);
  crowd.add({4.0, 4.0}, Health::kSusceptible, -1, 0.0, rng).goal.route.push_back({{16.0, 4.0}, 0.3});
  crowd.add({16.0, 4.0}, Health::kSusceptible, -1, 0.0, rng).goal.route.push_back({{4.0, 4.0}, 0.3});
  double min_rho = 1e9;
  for (int n = 0; n < 300; ++n) {
    const Vec2 c0 = crowd.forces(0, 0.0).contact;
    const Vec2 c1 = crowd.forces(1, 0.0).contact;
    CHECK(norm(c0 + c1) <= 1e-12);
    crowd.integrate(0.0, 0.05);
    const auto& p = crowd.peds();
    min_rho = std::min(min_rho, norm(p[0].x - p[1].x) / (p[0].r + p[1].r));
  }
  CHECK(min_rho >= 0.85);
  CHECK(crowd.peds()[0].x.x > 12.0);  // they got past each other
  CHECK(crowd.peds()[1].x.x < 8.0);
}

TEST_CASE("spawning and despawning") {
  const Grid g = room(100.0, 100.0, 0.5);
  CrowdEnvironment env = CrowdEnvironment::build(g, {{{99.5, 40.0, 100.0, 60.0}}}, 1.35);
  SUBCASE("fixed flux gives the exact count") {
    Entrance e;
    e.region = {10.0, 10.0, 30.0, 30.0};
    e.flux = 1.0;
    Crowd crowd(g, env, {}, {}, {e});
    Rng rng(4);
    crowd.initialize_arrivals(rng);
    for (int n = 0; n <= 1200; ++n) crowd.spawn_and_despawn(n * 0.05, rng);
    CHECK(crowd.peds().size() == 60);
  }
  SUBCASE("health fractions") {
    Entrance e;
    e.region = {5.0, 5.0, 95.0, 95.0};
    e.flux = 20.0;
    e.poisson = true;
    Crowd crowd(g, env, {}, {}, {e});
    Rng rng(8);
    crowd.initialize_arrivals(rng);
    double t = 0.0;
    while (crowd.total_spawned() < 1000) crowd.spawn_and_despawn(t += 0.05, rng);
    int counts[3] = {0, 0, 0};
    for (int k = 0; k < 1000; ++k) ++counts[static_cast<int>(crowd.peds()[k].health)];
    CHECK(std::abs(counts[0] / 1000.0 - 0.7) <= 0.05);
    CHECK(std::abs(counts[1] / 1000.0 - 0.1) <= 0.05);
    CHECK(std::abs(counts[2] / 1000.0 - 0.2) <= 0.05);
  }
  SUBCASE("reaching the exit removes the pedestrian") {
    Crowd crowd(g, env, {}, {}, {});
    Rng rng(1);
    crowd.add({99.4, 50.0}, Health::kSusceptible, -1, 0.0, rng);
    crowd.add({50.0, 50.0}, Health::kSusceptible, -1, 0.0, rng);
    const auto events = crowd.spawn_and_despawn(1.0, rng);
    REQUIRE(events.size() == 1);
    CHECK(events[0].kind == CrowdEvent::Kind::kDespawn);
    CHECK(events[0].ped_id == 0);
    CHECK(crowd.peds().size() == 1);
  }
  SUBCASE("full entrance defers arrivals") {
    Entrance e;
    e.region = {10.0, 10.0, 10.6, 10.6};
    e.flux = 10.0;
    Crowd crowd(g, env, {}, {}, {e});
    Rng rng(4);
    crowd.initialize_arrivals(rng);
    for (int n = 1; n <= 10; ++n) crowd.spawn_and_despawn(n * 0.1, rng);
    CHECK(crowd.peds().size() == 1);
    CHECK(crowd.deferred() > 0);
  }
}

TEST_CASE("waypoints with loitering") {
  const Grid g = room(20.0, 10.0);
  CrowdEnvironment env = CrowdEnvironment::build(g, {{{19.9, 4.0, 20.0, 6.0}}}, 1.35);
  Entrance e;
  e.region = {1.0, 4.0, 2.0, 6.0};
  e.route = {{{8.0, 5.0}, 0.5, 2.0, 2.0}};
  Crowd crowd(g, env, {}, {}, {e});
  Rng rng(6);
  Pedestrian& p = crowd.add({2.0, 5.0}, Health::kSusceptible, 0, 0.0, rng);
  CHECK(p.goal.route.size() == 1);
  double t = 0.0;
  double loiter_start = -1.0;
  bool left = false;
  for (int n = 0; n < 600 && !crowd.peds().empty(); ++n) {
    crowd.update_goals(t, rng);
    const Pedestrian& q = crowd.peds()[0];
    if (loiter_start < 0.0 && std::isfinite(q.goal.loiter_until)) loiter_start = t;
    if (q.goal.heading_to_exit()) left = true;
    crowd.integrate(t, 0.05);
    crowd.spawn_and_despawn(t, rng);
    t += 0.05;
  }
  CHECK(loiter_start > 0.0);
  CHECK(left);
  CHECK(crowd.peds().empty());
}

TEST_CASE("crowd invariants: speed bound, determinism") {
  auto run = [] {
    const Grid g = room(20.0, 6.0);
    CrowdEnvironment env = CrowdEnvironment::build(g, {{{19.9, 2.0, 20.0, 4.0}}, {{0.0, 2.0, 0.1, 4.0}}}, 1.35);
    Entrance left;
    left.region = {0.5, 1.0, 2.0, 5.0};
    left.flux = 1.0;
    left.poisson = true;
    left.exit_group = 0;
    Entrance right = left;
    right.region = {18.0, 1.0, 19.5, 5.0};
    right.exit_group = 1;
    Crowd crowd(g, env, {}, {}, {left, right});
    Rng rng(21);
    crowd.initialize_arrivals(rng);
    double worst_ratio = 0.0;
    Vec2 net_contact;
    for (int n = 0; n < 600; ++n) {
      const double t = n * 0.05;
      crowd.spawn_and_despawn(t, rng);
      crowd.update_goals(t, rng);
      for (size_t k = 0; k < crowd.peds().size(); ++k) net_contact += crowd.forces(static_cast<int>(k), t).contact;
      crowd.integrate(t, 0.05);
      for (const Pedestrian& p : crowd.peds()) worst_ratio = std::max(worst_ratio, norm(p.v) / p.v_d);
    }
    std::vector<double> out{worst_ratio, norm(net_contact), static_cast<double>(crowd.total_spawned())};
    for (const Pedestrian& p : crowd.peds()) {
      out.push_back(p.x.x);
      out.push_back(p.x.y);
    }
    return out;
  };
  const auto a = run();
  const auto b = run();
  CHECK(a == b);
  CHECK(a[0] <= 1.2);
  CHECK(a[1] <= 1e-10);
  CHECK(a[2] > 20);
}
