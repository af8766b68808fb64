#include "aerocrowd/epidemiology.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "aerocrowd/error.hpp"

namespace aerocrowd {

const char* to_string(InfectionMode m) {
  return m == InfectionMode::kDoseResponse ? "dose_response" : "deterministic_threshold";
}

void InfectionModel::validate() const {
  if (!(dose_threshold > 0.0)) throw ConfigError("infection.dose_threshold must be > 0");
  if (!(c_dr > 0.0)) throw ConfigError("infection.c_dr must be > 0");
}

void ExhalationSchedule::validate() const {
  if (!(jitter >= 0.0)) throw ConfigError("exhalation.jitter must be >= 0");
  if (!(mean_interval > jitter)) throw ConfigError("exhalation.mean_interval must exceed exhalation.jitter");
  if (!(duration > 0.0)) throw ConfigError("exhalation.duration must be > 0");
  if (!(v_max >= 0.0)) throw ConfigError("exhalation.v_max must be >= 0");
  if (!(c_max >= 0.0)) throw ConfigError("exhalation.c_max must be >= 0");
  if (!(mouth_radius > 0.0)) throw ConfigError("exhalation.mouth_radius must be > 0");
}

std::vector<SneezeEvent> schedule_exhalations(std::span<Pedestrian> peds, double t, Rng& rng,
                                              const ExhalationSchedule& schedule, double ambient_T) {
  std::vector<SneezeEvent> events;
  for (Pedestrian& p : peds) {
    if (p.health != Health::kInfectious) continue;
    if (std::isinf(p.next_sneeze_t)) {
      p.next_sneeze_t = t + schedule.draw_interval(rng);
      continue;
    }
    if (p.next_sneeze_t > t) continue;
    SneezeEvent e;
    e.ped_id = p.id;
    e.t_start = t;
    e.duration = schedule.duration;
    e.v_max = schedule.v_max;
    e.T_a = ambient_T;
    e.T_b = schedule.exhaled_temperature;
    e.c_max = schedule.c_max;
    e.direction = p.orientation;
    e.mouth_radius = schedule.mouth_radius;
    events.push_back(e);
    p.sneeze_active_until = t + schedule.duration;
    p.next_sneeze_t = t + schedule.draw_interval(rng);
  }
  return events;
}

double infection_probability(double dose, const InfectionModel& model) {
  if (!(dose >= 0.0) || !std::isfinite(dose)) throw std::invalid_argument("dose must be finite and >= 0");
  if (model.mode == InfectionMode::kDeterministicThreshold) return dose >= model.dose_threshold ? 1.0 : 0.0;
  return -std::expm1(-model.c_dr * dose);
}

std::vector<InfectionEvent> update_health(std::span<Pedestrian> peds, std::span<const double> increments,
                                          const InfectionModel& model, Rng& rng, double t) {
  std::vector<InfectionEvent> events;
  for (size_t k = 0; k < peds.size(); ++k) {
    Pedestrian& p = peds[k];
    if (p.health != Health::kSusceptible) continue;
    bool infected = false;
    if (model.mode == InfectionMode::kDeterministicThreshold) {
      infected = p.dose >= model.dose_threshold;
    } else {
      const double inc = k < increments.size() ? increments[k] : 0.0;
      if (inc > 0.0) infected = rng.bernoulli(infection_probability(inc, model));
    }
    if (infected) {
      p.health = Health::kNewlyInfected;
      events.push_back({t, p.id, p.x});
    }
  }
  return events;
}

void DropletParams::validate() const {
  if (!(d > 0.0 && rho_p > 0.0 && rho_air > 0.0 && mu_air > 0.0 && v_i > 0.0))
    throw ConfigError("droplet parameters must be positive");
  if (!(rest_fraction > 0.0 && rest_fraction < 1.0)) throw ConfigError("droplet rest_fraction must be in (0, 1)");
}

namespace {

template <class F>
double simpson(F&& f, double a, double fa, double b, double fb, double fm, double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m);
  const double rm = 0.5 * (m + b);
  const double flm = f(lm);
  const double frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
  return simpson(f, a, fa, m, fm, flm, left, 0.5 * tol, depth - 1) +
         simpson(f, m, fm, b, fb, frm, right, 0.5 * tol, depth - 1);
}

template <class F>
double integrate(F&& f, double a, double b, double rel_tol) {
  const double fa = f(a);
  const double fb = f(b);
  const double fm = f(0.5 * (a + b));
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return simpson(f, a, fa, b, fb, fm, whole, rel_tol * std::abs(whole), 50);
}

}  // namespace

DropletRest droplet_rest(const DropletParams& params) {
  params.validate();
  const double stokes_time = params.rho_p * params.d * params.d / (18.0 * params.mu_air);
  // Relaxation time v / |dv/dt| at speed v.
  const auto relax = [&](double v) {
    if (params.stokes_only) return stokes_time;
    const double re = params.rho_air * v * params.d / params.mu_air;
    return stokes_time / (1.0 + 0.15 * std::pow(re, 0.687));
  };
  // With s = ln v: dt/ds = relax(v), dx/ds = v relax(v); both smooth in s.
  const double s0 = std::log(params.rest_fraction * params.v_i);
  const double s1 = std::log(params.v_i);
  constexpr double kTol = 1e-10;
  DropletRest out;
  out.time = integrate([&](double s) { return relax(std::exp(s)); }, s0, s1, kTol);
  out.distance = integrate([&](double s) { return std::exp(s) * relax(std::exp(s)); }, s0, s1, kTol);
  return out;
}

double DoseHistogram::lower_edge(int b) const {
  if (b <= 0) return 0.0;
  return std::pow(10.0, min_exp + static_cast<double>(b - 1) / bins_per_decade);
}

int DoseHistogram::bin(double dose) const {
  const double first = std::pow(10.0, min_exp);
  if (!(dose >= first)) return 0;
  int b = 1 + static_cast<int>(std::floor((std::log10(dose) - min_exp) * bins_per_decade));
  // log10 rounding can land one bin off at an edge.
  while (b > 1 && dose < lower_edge(b)) --b;
  while (b + 1 < bin_count() && dose >= lower_edge(b + 1)) ++b;
  return std::clamp(b, 1, bin_count() - 1);
}

std::vector<int> DoseHistogram::counts(std::span<const double> doses) const {
  std::vector<int> c(bin_count(), 0);
  for (double d : doses) ++c[bin(d)];
  return c;
}

std::vector<int> DoseHistogram::cumulative_at_least(std::span<const int> counts) const {
  std::vector<int> cum(counts.size(), 0);
  int run = 0;
  for (size_t b = counts.size(); b-- > 0;) {
    run += counts[b];
    cum[b] = run;
  }
  return cum;
}

int count_sneezing(std::span<const Pedestrian> peds, double t) {
  return static_cast<int>(std::count_if(peds.begin(), peds.end(), [t](const Pedestrian& p) {
    return p.health == Health::kInfectious && t <= p.sneeze_active_until;
  }));
}

void RunStats::record(double t, std::span<const Pedestrian> peds) {
  rows_.push_back({t, count_sneezing(peds, t), cumulative_infections_, static_cast<int>(peds.size())});
}

std::vector<double> RunStats::all_doses(std::span<const Pedestrian> present) const {
  std::vector<double> d = departed_doses_;
  for (const Pedestrian& p : present) d.push_back(p.dose);
  return d;
}

}  // namespace aerocrowd
