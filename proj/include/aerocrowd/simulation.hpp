#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "aerocrowd/epidemiology.hpp"
#include "aerocrowd/flow.hpp"
#include "aerocrowd/immersed.hpp"
#include "aerocrowd/output.hpp"
#include "aerocrowd/pedestrians.hpp"
#include "aerocrowd/rng.hpp"
#include "aerocrowd/scenario.hpp"

namespace aerocrowd {

struct RunOptions {
  std::filesystem::path out_dir;          ///< empty: keep everything in memory
  std::optional<std::uint64_t> seed;      ///< overrides the scenario seed
  std::optional<double> snapshot_interval;
};

struct EventRecord {
  long long seq = 0;
  double t = 0.0;
  std::string kind;  ///< spawn, despawn, deferred, sneeze, sneeze_skipped, infection, warning
  int ped_id = -1;
  Vec2 x;
  std::string detail;
};

/// One macro step as written to run.csv.
struct StepRecord {
  long long step = 0;
  double t = 0.0;
  double dt = 0.0;
  double dt_flow = 0.0;
  int population = 0;
  int sneezing = 0;
  int new_infections = 0;
  int cumulative_infections = 0;
  int spawned = 0;
  double total_pathogen = 0.0;
  double max_c = 0.0;
  double max_speed = 0.0;
  double max_divergence = 0.0;
  int pressure_iterations = 0;
  double clamped_mass = 0.0;
};

enum Phase { kPhaseTimestep, kPhasePedestrians, kPhaseExchange, kPhaseFlow, kPhaseExposure, kPhaseCount };
const char* phase_name(int phase);

struct RunSummary {
  long long steps = 0;
  double t_end = 0.0;
  int total_spawned = 0;
  int cumulative_infections = 0;
  int sneeze_events = 0;
  int deferred_arrivals = 0;
  int warnings = 0;
  double max_divergence_ratio = 0.0;  ///< max over steps of div / (poisson_tol |v|max / h)
  double wall_seconds = 0.0;
  std::array<double, kPhaseCount> phase_seconds{};
  std::array<std::uint64_t, kPhaseCount> phase_hashes{};
};

/// Coupled crowd, airflow and exposure loop. Each macro step runs, in order:
/// time step choice, pedestrians, exchange (footprints and sneezes), flow,
/// exposure (inhalation, health, statistics).
class Simulation {
 public:
  Simulation(ScenarioConfig config, RunOptions options = {});
  ~Simulation();
  Simulation(const Simulation&) = delete;
  Simulation& operator=(const Simulation&) = delete;

  bool done() const;
  /// Advances one macro step. Errors are rethrown as SolverError carrying the
  /// step number, time and phase; outputs written so far stay valid.
  const StepRecord& step();
  /// Steps to the configured duration and finalizes outputs.
  RunSummary run();
  /// Writes histogram.csv and metrics.json (also called by run()).
  void finalize(const std::string& status = "completed", const std::string& message = "");

  const ScenarioConfig& config() const { return config_; }
  std::uint64_t seed() const { return seed_; }
  double t() const { return t_; }
  long long steps() const { return steps_; }
  const Grid& grid() const { return *grid_; }
  const FlowSolver& solver() const { return *solver_; }
  const FlowState& flow() const { return state_; }
  const Crowd& crowd() const { return *crowd_; }
  const RunStats& stats() const { return stats_; }
  const std::vector<EventRecord>& events() const { return events_; }
  const std::vector<StepRecord>& records() const { return records_; }
  const RunSummary& summary() const { return summary_; }
  std::vector<double> all_doses() const { return stats_.all_doses(crowd_->peds()); }

 private:
  void log_event(double t, std::string kind, int ped_id, Vec2 x, std::string detail = {});
  void write_snapshot();
  double choose_dt(double& dt_flow) const;

  ScenarioConfig config_;
  RunOptions options_;
  std::uint64_t seed_;
  Rng rng_;
  std::unique_ptr<Grid> grid_;
  std::unique_ptr<FlowSolver> solver_;
  FlowState state_;
  FlowSources sources_;
  std::unique_ptr<Crowd> crowd_;
  std::vector<SneezeEvent> sneezes_;
  RunStats stats_;
  std::vector<EventRecord> events_;
  std::vector<StepRecord> records_;
  RunSummary summary_;

  double t_ = 0.0;
  long long steps_ = 0;
  long long event_seq_ = 0;
  int pending_infections_ = 0;
  double next_row_t_ = 0.0;
  double next_snapshot_t_ = 0.0;
  int snapshot_index_ = 0;
  bool finalized_ = false;

  CsvFile run_csv_;
  CsvFile events_csv_;
};

}  // namespace aerocrowd
