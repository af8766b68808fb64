#pragma once

#include <span>
#include <string>
#include <vector>

#include "aerocrowd/immersed.hpp"
#include "aerocrowd/pedestrians.hpp"
#include "aerocrowd/rng.hpp"

namespace aerocrowd {

enum class InfectionMode { kDeterministicThreshold, kDoseResponse };

const char* to_string(InfectionMode m);

struct InfectionModel {
  InfectionMode mode = InfectionMode::kDeterministicThreshold;
  double dose_threshold = 1.0e-4;  ///< pathogen units
  double c_dr = 1.0e4;             ///< 1 / pathogen units

  void validate() const;
};

struct ExhalationSchedule {
  double mean_interval = 30.0;  ///< s
  double jitter = 5.0;          ///< s, half-width of the uniform interval
  double duration = 1.0;        ///< s
  double v_max = 5.0;           ///< m/s
  double exhaled_temperature = kBodyTemperature;
  double c_max = 1.0;
  double mouth_radius = 0.05;   ///< m

  void validate() const;
  double draw_interval(Rng& rng) const { return rng.uniform(mean_interval - jitter, mean_interval + jitter); }
};

/// Infectious pedestrians with next_sneeze_t <= t emit an event starting at t
/// and redraw their next time. A pedestrian seen for the first time (next time
/// still infinite) only draws its first time. Draws follow pedestrian order.
/// `ambient_T` is the air temperature the exhaled pulse relaxes to.
std::vector<SneezeEvent> schedule_exhalations(std::span<Pedestrian> peds, double t, Rng& rng,
                                              const ExhalationSchedule& schedule, double ambient_T);

/// Throws std::invalid_argument on a negative or non-finite dose.
double infection_probability(double dose, const InfectionModel& model);

struct InfectionEvent {
  double t = 0.0;
  int ped_id = 0;
  Vec2 x;
};

/// Susceptible pedestrians may become newly infected. Threshold mode checks
/// the accumulated dose; dose-response mode draws one Bernoulli per
/// susceptible pedestrian with a positive increment, in pedestrian order.
/// `increments` is aligned with `peds`.
std::vector<InfectionEvent> update_health(std::span<Pedestrian> peds, std::span<const double> increments,
                                          const InfectionModel& model, Rng& rng, double t);

struct DropletParams {
  double d = 1.0e-4;        ///< m
  double rho_p = 1000.0;    ///< kg/m^3
  double rho_air = 1.2;     ///< kg/m^3
  double mu_air = 1.85e-5;  ///< kg/(m s)
  double v_i = 1.0;         ///< m/s
  double rest_fraction = 0.01;
  bool stokes_only = false;  ///< drop the finite-Reynolds correction

  void validate() const;
};

struct DropletRest {
  double distance = 0.0;  ///< m
  double time = 0.0;      ///< s
};

/// Decelerates a droplet in still air from v_i to rest_fraction * v_i.
DropletRest droplet_rest(const DropletParams& params);

/// Log-spaced dose bins from 10^min_exp to 10^max_exp plus an underflow bin
/// (index 0) for doses below the first edge, zero included. Doses above the
/// last edge go to the last bin.
struct DoseHistogram {
  int min_exp = -10;
  int max_exp = 0;
  int bins_per_decade = 2;

  int bin_count() const { return (max_exp - min_exp) * bins_per_decade + 1; }
  /// Lower edge of bin b (b >= 1); bin 0 has lower edge 0.
  double lower_edge(int b) const;
  int bin(double dose) const;
  std::vector<int> counts(std::span<const double> doses) const;
  /// Pedestrians with dose >= the lower edge of each bin (running sum from the top).
  std::vector<int> cumulative_at_least(std::span<const int> counts) const;
};

int count_sneezing(std::span<const Pedestrian> peds, double t);

/// Time series and dose records gathered during a run.
class RunStats {
 public:
  struct Row {
    double t;
    int sneezing;
    int cumulative_infections;
    int population;
  };

  void record(double t, std::span<const Pedestrian> peds);
  void add_infections(int n) { cumulative_infections_ += n; }
  /// Keeps the final dose of a pedestrian that left the domain.
  void record_departure(const Pedestrian& p) { record_departure(p.dose); }
  void record_departure(double dose) { departed_doses_.push_back(dose); }

  const std::vector<Row>& rows() const { return rows_; }
  int cumulative_infections() const { return cumulative_infections_; }
  /// Departed doses followed by the doses of those still present.
  std::vector<double> all_doses(std::span<const Pedestrian> present) const;

 private:
  std::vector<Row> rows_;
  std::vector<double> departed_doses_;
  int cumulative_infections_ = 0;
};

}  // namespace aerocrowd
