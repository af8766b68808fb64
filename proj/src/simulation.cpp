#include "aerocrowd/simulation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <sstream>

#include "json.hpp"

#include "aerocrowd/error.hpp"

namespace aerocrowd {

namespace fs = std::filesystem;

const char* phase_name(int phase) {
  static const char* names[] = {"timestep", "pedestrians", "exchange", "flow", "exposure"};
  return phase >= 0 && phase < kPhaseCount ? names[phase] : "unknown";
}

namespace {

constexpr double kTimeEps = 1e-9;

// FNV-1a over raw bytes; feeds the per-phase determinism hashes.
class Hasher {
 public:
  explicit Hasher(std::uint64_t& h) : h_(h) {}
  void bytes(const void* data, size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t k = 0; k < n; ++k) {
      h_ ^= p[k];
      h_ *= 1099511628211ULL;
    }
  }
  void real(double x) { bytes(&x, sizeof x); }
  void integer(long long x) { bytes(&x, sizeof x); }
  void field(const ScalarField& f) { bytes(f.values().data(), f.values().size() * sizeof(double)); }

 private:
  std::uint64_t& h_;
};

ScenarioConfig prepared(ScenarioConfig c) {
  c.validate();
  check_geometry(c);
  return c;
}

std::string sanitize(std::string s) {
  std::replace(s.begin(), s.end(), ',', ';');
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

std::string hex(std::uint64_t h) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace

Simulation::Simulation(ScenarioConfig config, RunOptions options)
    : config_(prepared(std::move(config))),
      options_(std::move(options)),
      seed_(options_.seed.value_or(config_.seed)),
      rng_(seed_),
      grid_(std::make_unique<Grid>(build_grid(config_.geometry))),
      state_(*grid_, config_.initial_temperature),
      sources_(*grid_) {
  if (options_.snapshot_interval) {
    if (*options_.snapshot_interval < 0.0) throw ConfigError("--snapshot-every must be non-negative");
    config_.output.snapshot_interval = *options_.snapshot_interval;
  }
  summary_.phase_hashes.fill(14695981039346656037ULL);

  FlowBoundaryConditions bcs;
  bcs.inlets = config_.inlet_conditions;
  if (config_.reference_point) bcs.reference_cell = grid_->locate(*config_.reference_point);
  solver_ = std::make_unique<FlowSolver>(*grid_, config_.fluid, config_.scheme, bcs);
  for (const HeatSource& h : config_.heat_sources) {
    for (int idx : grid_->cells_overlapping(h.region)) {
      if (!grid_->is_wall(idx)) sources_.heat[idx] += h.q;
    }
  }

  CrowdEnvironment env = CrowdEnvironment::build(*grid_, config_.exit_groups, config_.traits.desired_speed);
  crowd_ = std::make_unique<Crowd>(*grid_, std::move(env), config_.crowd, config_.traits, config_.entrances);

  if (!options_.out_dir.empty()) {
    fs::create_directories(options_.out_dir);
    run_csv_ = CsvFile(options_.out_dir / "run.csv",
                       {"step", "t", "dt", "dt_flow", "population", "sneezing", "new_infections",
                        "cumulative_infections", "spawned", "total_pathogen", "max_c", "max_speed", "max_divergence",
                        "pressure_iterations", "clamped_mass"});
    events_csv_ = CsvFile(options_.out_dir / "events.csv", {"seq", "t", "kind", "ped_id", "x", "y", "detail"});
  }

  // Draw order at start-up: initial groups, then first arrival times.
  for (size_t k = 0; k < config_.initial_population.size(); ++k) {
    for (const CrowdEvent& e : crowd_->populate(config_.initial_population[k], 0.0, rng_)) {
      log_event(0.0, "spawn", e.ped_id, e.x, std::string("initial,") + to_string(e.health));
    }
  }
  crowd_->initialize_arrivals(rng_);

  solver_->apply_boundary_conditions(state_);
  solver_->sync_faces(state_);
  if (config_.output.snapshot_interval > 0.0) write_snapshot();
}

Simulation::~Simulation() = default;

bool Simulation::done() const { return t_ >= config_.duration - kTimeEps; }

void Simulation::log_event(double t, std::string kind, int ped_id, Vec2 x, std::string detail) {
  EventRecord r{event_seq_++, t, std::move(kind), ped_id, x, sanitize(std::move(detail))};
  if (events_csv_.is_open()) {
    events_csv_.row({std::to_string(r.seq), fmt9(r.t), r.kind, std::to_string(r.ped_id), fmt9(r.x.x), fmt9(r.x.y),
                     r.detail});
  }
  if (r.kind == "warning") ++summary_.warnings;
  events_.push_back(std::move(r));
}

void Simulation::write_snapshot() {
  if (options_.out_dir.empty()) return;
  char name[32];
  std::snprintf(name, sizeof name, "%06d", snapshot_index_++);
  const fs::path dir = options_.out_dir / "snapshots";
  write_vtk(dir / (std::string("flow_") + name + ".vtk"), *grid_, state_, config_.name);
  write_pedestrians_csv(dir / (std::string("peds_") + name + ".csv"), crowd_->peds(), t_);
  next_snapshot_t_ = t_ + config_.output.snapshot_interval;
}

double Simulation::choose_dt(double& dt_flow) const {
  double imposed = 0.0;
  bool sneeze_possible = false;
  for (const Pedestrian& p : crowd_->peds()) {
    imposed = std::max(imposed, norm(p.v));
    if (p.health == Health::kInfectious && (p.next_sneeze_t <= t_ || p.sneeze_active_until >= t_)) {
      sneeze_possible = true;
    }
  }
  // Pedestrians may accelerate to the speed cap within the step.
  if (!crowd_->peds().empty()) {
    imposed = std::max(imposed, config_.crowd.max_speed_factor * config_.traits.desired_speed);
  }
  if (sneeze_possible) imposed += config_.exhalation.v_max;
  dt_flow = solver_->compute_dt(state_, imposed).dt;
  return std::min({config_.dt_ped, dt_flow, config_.duration - t_});
}

const StepRecord& Simulation::step() {
  if (done()) throw std::logic_error("simulation already finished");
  int phase = kPhaseTimestep;
  using clock = std::chrono::steady_clock;
  auto mark = clock::now();
  auto lap = [&](int next) {
    const auto now = clock::now();
    summary_.phase_seconds[phase] += std::chrono::duration<double>(now - mark).count();
    mark = now;
    phase = next;
  };
  try {
    StepRecord rec;
    rec.step = steps_ + 1;
    const double dt = choose_dt(rec.dt_flow);
    rec.dt = dt;
    if (!(dt > 0.0) || dt > config_.dt_ped + 1e-15 || (rec.dt_flow < config_.dt_ped && dt > rec.dt_flow)) {
      throw SolverError("time step rule violated (dt " + fmt9(dt) + ", flow limit " + fmt9(rec.dt_flow) + ")");
    }
    {
      Hasher h(summary_.phase_hashes[kPhaseTimestep]);
      h.real(dt);
    }

    lap(kPhasePedestrians);
    for (const CrowdEvent& e : crowd_->spawn_and_despawn(t_, rng_)) {
      switch (e.kind) {
        case CrowdEvent::Kind::kSpawn:
          log_event(t_, "spawn", e.ped_id, e.x, "entrance " + std::to_string(e.entrance) + " " + to_string(e.health));
          break;
        case CrowdEvent::Kind::kDespawn:
          stats_.record_departure(e.dose);
          log_event(t_, "despawn", e.ped_id, e.x, "dose " + fmt9(e.dose));
          break;
        case CrowdEvent::Kind::kDeferred:
          log_event(t_, "deferred", -1, e.x, "entrance " + std::to_string(e.entrance) + " blocked");
          break;
      }
    }
    crowd_->update_goals(t_, rng_);
    crowd_->integrate(t_, dt);
    std::vector<Pedestrian>& peds = crowd_->peds();
    {
      Hasher h(summary_.phase_hashes[kPhasePedestrians]);
      for (const Pedestrian& p : peds) {
        h.integer(p.id);
        h.real(p.x.x);
        h.real(p.x.y);
        h.real(p.v.x);
        h.real(p.v.y);
      }
    }

    lap(kPhaseExchange);
    std::vector<std::string> warnings;
    const auto footprints = rasterize_pedestrians(peds, *grid_, &warnings);
    for (const SneezeEvent& e : schedule_exhalations(peds, t_, rng_, config_.exhalation, config_.initial_temperature)) {
      const auto it = std::find_if(peds.begin(), peds.end(), [&](const Pedestrian& p) { return p.id == e.ped_id; });
      log_event(t_, "sneeze", e.ped_id, it->x, "direction " + fmt9(e.direction.x) + " " + fmt9(e.direction.y));
      sneezes_.push_back(e);
      ++summary_.sneeze_events;
    }
    const double t_mid = t_ + 0.5 * dt;
    std::erase_if(sneezes_, [&](const SneezeEvent& e) { return t_mid > e.t_start + e.duration; });
    solver_->apply_boundary_conditions(state_);
    impose_immersed_bcs(state_, footprints);
    const auto applied = apply_sneeze(state_, *grid_, sneezes_, peds, t_mid, &warnings);
    {
      Hasher h(summary_.phase_hashes[kPhaseExchange]);
      for (const auto& f : footprints) {
        h.integer(f.ped_id);
        for (int c : f.cells) h.integer(c);
      }
      for (const auto& a : applied) {
        h.integer(a.ped_id);
        for (int c : a.cells) h.integer(c);
        if (a.skipped) {
          const auto it =
              std::find_if(peds.begin(), peds.end(), [&](const Pedestrian& p) { return p.id == a.ped_id; });
          log_event(t_, "sneeze_skipped", a.ped_id, it->x, "mouth region in walls");
        }
      }
    }

    lap(kPhaseFlow);
    const StepDiagnostics diag = solver_->advance(state_, sources_, dt);
    {
      Hasher h(summary_.phase_hashes[kPhaseFlow]);
      h.field(state_.v.x);
      h.field(state_.v.y);
      h.field(state_.p);
      h.field(state_.T);
      h.field(state_.c);
      h.field(state_.tau);
    }

    lap(kPhaseExposure);
    t_ += dt;
    ++steps_;
    if (config_.duration - t_ < kTimeEps) t_ = config_.duration;
    const std::vector<double> inc = sample_inhalation(peds, *grid_, state_, dt, &warnings);
    const auto infections = update_health(peds, inc, config_.infection, rng_, t_);
    for (const InfectionEvent& e : infections) {
      const auto it = std::find_if(peds.begin(), peds.end(), [&](const Pedestrian& p) { return p.id == e.ped_id; });
      log_event(t_, "infection", e.ped_id, e.x, "dose " + fmt9(it->dose));
    }
    for (const std::string& w : warnings) log_event(t_, "warning", -1, {}, w);
    stats_.add_infections(static_cast<int>(infections.size()));
    pending_infections_ += static_cast<int>(infections.size());
    stats_.record(t_, peds);
    {
      Hasher h(summary_.phase_hashes[kPhaseExposure]);
      for (const Pedestrian& p : peds) {
        h.real(p.dose);
        h.integer(static_cast<int>(p.health));
      }
    }

    rec.t = t_;
    rec.population = static_cast<int>(peds.size());
    rec.sneezing = stats_.rows().back().sneezing;
    rec.cumulative_infections = stats_.cumulative_infections();
    rec.spawned = crowd_->total_spawned();
    rec.total_pathogen = solver_->total_scalar(state_);
    for (int idx = 0; idx < grid_->size(); ++idx) {
      if (!grid_->is_wall(idx)) rec.max_c = std::max(rec.max_c, state_.c[idx]);
    }
    rec.max_speed = diag.max_speed;
    rec.max_divergence = diag.max_divergence;
    rec.pressure_iterations = diag.pressure_iterations;
    rec.clamped_mass = diag.clamped_mass;
    const double scale = config_.scheme.poisson_tol * std::max(diag.max_speed, config_.scheme.v_floor) / grid_->h();
    summary_.max_divergence_ratio = std::max(summary_.max_divergence_ratio, diag.max_divergence / scale);

    const bool row_due = config_.output.row_interval <= 0.0 || t_ >= next_row_t_ - kTimeEps || done();
    rec.new_infections = static_cast<int>(infections.size());
    if (row_due) {
      rec.new_infections = pending_infections_;
      pending_infections_ = 0;
      next_row_t_ = t_ + config_.output.row_interval;
      if (run_csv_.is_open()) {
        run_csv_.row({std::to_string(rec.step), fmt9(rec.t), fmt9(rec.dt), fmt9(rec.dt_flow),
                      std::to_string(rec.population), std::to_string(rec.sneezing),
                      std::to_string(rec.new_infections), std::to_string(rec.cumulative_infections),
                      std::to_string(rec.spawned), fmt9(rec.total_pathogen), fmt9(rec.max_c), fmt9(rec.max_speed),
                      fmt9(rec.max_divergence), std::to_string(rec.pressure_iterations), fmt9(rec.clamped_mass)});
      }
    }
    if (config_.output.snapshot_interval > 0.0 && (t_ >= next_snapshot_t_ - kTimeEps || done())) write_snapshot();
    lap(kPhaseExposure);
    records_.push_back(rec);
    return records_.back();
  } catch (const std::exception& e) {
    std::ostringstream os;
    os << "step " << steps_ + 1 << " (t = " << fmt9(t_) << "), phase " << phase_name(phase) << ": " << e.what();
    throw SolverError(os.str());
  }
}

RunSummary Simulation::run() {
  const auto start = std::chrono::steady_clock::now();
  try {
    while (!done()) step();
  } catch (const std::exception& e) {
    summary_.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    try {
      finalize("failed", e.what());
    } catch (...) {
    }
    throw;
  }
  summary_.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  finalize();
  return summary_;
}

void Simulation::finalize(const std::string& status, const std::string& message) {
  if (finalized_) return;
  finalized_ = true;
  summary_.steps = steps_;
  summary_.t_end = t_;
  summary_.total_spawned = crowd_->total_spawned();
  summary_.cumulative_infections = stats_.cumulative_infections();
  summary_.deferred_arrivals = crowd_->deferred();
  if (options_.out_dir.empty()) return;
  const std::vector<double> doses = all_doses();
  write_histogram_csv(options_.out_dir / "histogram.csv", config_.output.histogram, doses);

  nlohmann::ordered_json m;
  m["scenario"] = config_.name;
  m["seed"] = seed_;
  m["status"] = status;
  if (!message.empty()) m["error"] = message;
  m["steps"] = summary_.steps;
  m["t_end"] = summary_.t_end;
  m["total_spawned"] = summary_.total_spawned;
  m["cumulative_infections"] = summary_.cumulative_infections;
  m["sneeze_events"] = summary_.sneeze_events;
  m["deferred_arrivals"] = summary_.deferred_arrivals;
  m["warnings"] = summary_.warnings;
  m["max_divergence_ratio"] = summary_.max_divergence_ratio;
  m["wall_seconds"] = summary_.wall_seconds;
  for (int p = 0; p < kPhaseCount; ++p) {
    m["phase_seconds"][phase_name(p)] = summary_.phase_seconds[p];
    m["phase_hashes"][phase_name(p)] = hex(summary_.phase_hashes[p]);
  }
  std::ofstream out(options_.out_dir / "metrics.json");
  out << m.dump(2) << '\n';
  if (!out) throw SolverError("cannot write metrics.json");
}

}  // namespace aerocrowd
