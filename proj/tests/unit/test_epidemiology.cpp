#include <doctest.h>

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "aerocrowd/epidemiology.hpp"
#include "aerocrowd/error.hpp"

using namespace aerocrowd;

namespace {

Pedestrian person(int id, Health h) {
  Pedestrian p;
  p.id = id;
  p.health = h;
  return p;
}

// Sneeze start times of one infectious pedestrian over [0, duration].
std::vector<double> sneeze_times(std::uint64_t seed, double duration, double dt = 0.05) {
  std::vector<Pedestrian> peds{person(0, Health::kInfectious)};
  Rng rng(seed);
  std::vector<double> times;
  for (int n = 0; n * dt <= duration + 1e-9; ++n) {
    for (const SneezeEvent& e : schedule_exhalations(peds, n * dt, rng, {}, 20.0)) times.push_back(e.t_start);
  }
  return times;
}

}  // namespace

TEST_CASE("only infectious pedestrians sneeze") {
  std::vector<Pedestrian> peds{person(0, Health::kSusceptible), person(1, Health::kAsymptomatic),
                               person(2, Health::kNewlyInfected)};
  Rng rng(3);
  for (int n = 0; n < 4000; ++n) CHECK(schedule_exhalations(peds, n * 0.05, rng, {}, 20.0).empty());
}

TEST_CASE("sneeze count and spacing over 120 s") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto times = sneeze_times(seed, 120.0);
    CHECK(times.size() >= 3);
    CHECK(times.size() <= 4);
    CHECK(times[0] >= 25.0 - 1e-9);
    CHECK(times[0] <= 35.0 + 0.05);
    for (size_t k = 1; k < times.size(); ++k) {
      CHECK(times[k] - times[k - 1] >= 25.0 - 1e-9);
      CHECK(times[k] - times[k - 1] <= 35.0 + 0.05 + 1e-9);
    }
  }
  CHECK(sneeze_times(11, 120.0) == sneeze_times(11, 120.0));
}

TEST_CASE("sneeze events carry the schedule and set the active window") {
  std::vector<Pedestrian> peds{person(4, Health::kInfectious)};
  peds[0].next_sneeze_t = 1.0;
  peds[0].orientation = {0.0, -1.0};
  Rng rng(1);
  const auto events = schedule_exhalations(peds, 1.0, rng, {}, 18.0);
  REQUIRE(events.size() == 1);
  CHECK(events[0].ped_id == 4);
  CHECK(events[0].T_a == 18.0);
  CHECK(events[0].direction.y == -1.0);
  CHECK(count_sneezing(peds, 1.5) == 1);
  CHECK(count_sneezing(peds, 2.5) == 0);
}

TEST_CASE("infection probability") {
  InfectionModel dr;
  dr.mode = InfectionMode::kDoseResponse;
  dr.c_dr = 250.0;
  CHECK(infection_probability(0.0, dr) == 0.0);
  CHECK(std::abs(infection_probability(std::log(2.0) / dr.c_dr, dr) - 0.5) <= 1e-12);
  double prev = 0.0;
  for (int k = 0; k <= 1000000; ++k) {
    const double p = infection_probability(k * 1e-5, dr);
    if (p < prev) FAIL("not monotone at " << k);
    prev = p;
  }
  CHECK(infection_probability(1e6, dr) == 1.0);
  CHECK_THROWS_AS(infection_probability(-1e-9, dr), std::invalid_argument);

  InfectionModel th;
  CHECK(infection_probability(0.99e-4, th) == 0.0);
  CHECK(infection_probability(1e-4, th) == 1.0);
  th.dose_threshold = 0.0;
  CHECK_THROWS_AS(th.validate(), ConfigError);
}

TEST_CASE("threshold crossing is flagged at that step and never reverts") {
  std::vector<Pedestrian> peds{person(0, Health::kSusceptible)};
  InfectionModel model;
  Rng rng(0);
  const double inc = 0.3e-4;
  int flagged = -1;
  for (int k = 0; k < 10; ++k) {
    peds[0].dose += inc;
    const std::vector<double> incs{inc};
    const auto ev = update_health(peds, incs, model, rng, k);
    if (!ev.empty()) {
      CHECK(flagged == -1);
      flagged = k;
    }
    if (flagged >= 0) CHECK(peds[0].health == Health::kNewlyInfected);
  }
  // Dose reaches 1.2e-4 after the fourth increment (k = 3).
  CHECK(flagged == 3);
}

TEST_CASE("dose response with huge c_dr matches a vanishing threshold") {
  Rng trace_rng(42);
  const int n_peds = 20;
  const int steps = 50;
  std::vector<std::vector<double>> trace(steps, std::vector<double>(n_peds, 0.0));
  for (auto& row : trace) {
    for (double& x : row) x = trace_rng.uniform() < 0.1 ? trace_rng.uniform() * 1e-6 : 0.0;
  }
  auto run = [&](const InfectionModel& model) {
    std::vector<Pedestrian> peds;
    for (int i = 0; i < n_peds; ++i) peds.push_back(person(i, Health::kSusceptible));
    Rng rng(9);
    std::vector<std::pair<int, int>> log;
    for (int k = 0; k < steps; ++k) {
      for (int i = 0; i < n_peds; ++i) peds[i].dose += trace[k][i];
      for (const auto& e : update_health(peds, trace[k], model, rng, k)) log.emplace_back(k, e.ped_id);
    }
    return log;
  };
  InfectionModel dr;
  dr.mode = InfectionMode::kDoseResponse;
  dr.c_dr = 1e300;
  InfectionModel th;
  th.dose_threshold = 1e-300;
  const auto a = run(dr);
  CHECK(!a.empty());
  CHECK(a == run(th));
}

TEST_CASE("health state machine has only the susceptible to newly infected edge") {
  Rng rng(5);
  InfectionModel model;
  model.mode = InfectionMode::kDoseResponse;
  model.c_dr = 1e5;
  std::vector<Pedestrian> peds;
  for (int i = 0; i < 40; ++i) peds.push_back(person(i, static_cast<Health>(i % 4)));
  for (int k = 0; k < 200; ++k) {
    const std::vector<Health> before = [&] {
      std::vector<Health> h;
      for (const auto& p : peds) h.push_back(p.health);
      return h;
    }();
    std::vector<double> incs(peds.size());
    for (double& x : incs) x = rng.uniform() * 1e-5;
    update_health(peds, incs, model, rng, k);
    for (size_t i = 0; i < peds.size(); ++i) {
      const bool same = peds[i].health == before[i];
      const bool edge = before[i] == Health::kSusceptible && peds[i].health == Health::kNewlyInfected;
      CHECK((same || edge));
    }
  }
}

TEST_CASE("droplet rest distances and times") {
  struct Row {
    double d, dist, time;
  };
  for (const Row& row : {Row{1e-4, 2.27e-2, 1.20e-1}, Row{1e-5, 2.79e-4, 1.34e-3}, Row{1e-6, 2.94e-6, 1.40e-5}}) {
    DropletParams p;
    p.d = row.d;
    const DropletRest r = droplet_rest(p);
    CHECK(std::abs(r.distance / row.dist - 1.0) <= 0.10);
    CHECK(std::abs(r.time / row.time - 1.0) <= 0.10);
  }
}

TEST_CASE("droplet integrals match closed forms") {
  // Pure Stokes drag: t = tau ln(1/f), x = tau v_i (1 - f).
  DropletParams p;
  p.d = 5e-5;
  p.stokes_only = true;
  const double tau = p.rho_p * p.d * p.d / (18.0 * p.mu_air);
  const DropletRest r = droplet_rest(p);
  CHECK(std::abs(r.time / (tau * std::log(100.0)) - 1.0) <= 1e-6);
  CHECK(std::abs(r.distance / (tau * 0.99) - 1.0) <= 1e-6);

  // Time to rest is independent of v_i at low Reynolds number.
  DropletParams q;
  q.d = 1e-6;
  std::vector<double> times;
  for (double v : {0.5, 1.0, 2.0}) {
    q.v_i = v;
    times.push_back(droplet_rest(q).time);
  }
  CHECK(std::abs(times[0] / times[2] - 1.0) <= 0.01);
  CHECK(std::abs(times[1] / times[2] - 1.0) <= 0.01);

  q.rest_fraction = 1.0;
  CHECK_THROWS_AS(droplet_rest(q), ConfigError);
}

TEST_CASE("dose histogram") {
  DoseHistogram h;
  CHECK(h.bin(0.0) == 0);
  CHECK(h.bin(1e-11) == 0);
  CHECK(h.bin(1e-10) == 1);
  CHECK(h.bin(1e-4) == 1 + 6 * 2);
  CHECK(h.bin(0.99e-4) == 12);
  CHECK(h.bin(5.0) == h.bin_count() - 1);
  for (int b = 1; b < h.bin_count(); ++b) CHECK(h.bin(h.lower_edge(b)) == b);

  RunStats stats;
  std::vector<Pedestrian> present{person(0, Health::kSusceptible), person(1, Health::kInfectious)};
  present[0].dose = 3e-5;
  Pedestrian gone = person(2, Health::kSusceptible);
  gone.dose = 2e-4;
  stats.record_departure(gone);
  const auto doses = stats.all_doses(present);
  const auto counts = h.counts(doses);
  CHECK(std::accumulate(counts.begin(), counts.end(), 0) == 3);
  const auto cum = h.cumulative_at_least(counts);
  CHECK(cum[0] == 3);
  CHECK(cum[h.bin(1e-4)] == 1);
}

TEST_CASE("run stats rows") {
  RunStats stats;
  std::vector<Pedestrian> peds{person(0, Health::kSusceptible), person(1, Health::kAsymptomatic)};
  stats.record(0.0, peds);
  stats.add_infections(2);
  stats.record(1.0, peds);
  REQUIRE(stats.rows().size() == 2);
  CHECK(stats.rows()[0].sneezing == 0);
  CHECK(stats.rows()[1].cumulative_infections == 2);
  CHECK(stats.rows()[1].population == 2);
}
