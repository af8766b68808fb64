#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "aerocrowd/epidemiology.hpp"
#include "aerocrowd/flow.hpp"
#include "aerocrowd/grid.hpp"
#include "aerocrowd/pedestrians.hpp"

namespace aerocrowd {

struct HeatSource {
  Rect region;
  double q = 0.0;  ///< W/m^3
};

struct OutputCadence {
  double row_interval = 0.0;       ///< s between run.csv rows; 0 writes every step
  double snapshot_interval = 0.0;  ///< s between snapshots; 0 disables them
  DoseHistogram histogram;
};

/// Fully validated scenario with every default filled in.
struct ScenarioConfig {
  std::string name = "scenario";
  GridGeometry geometry;
  std::vector<InletCondition> inlet_conditions;  ///< aligned with geometry.inlets
  std::vector<HeatSource> heat_sources;
  std::optional<Vec2> reference_point;
  double initial_temperature = 20.0;

  std::vector<Entrance> entrances;
  std::vector<std::vector<Rect>> exit_groups;
  std::vector<InitialGroup> initial_population;
  CrowdParams crowd;
  TraitParams traits;

  FluidProps fluid;
  SchemeParams scheme;
  InfectionModel infection;
  ExhalationSchedule exhalation;

  double duration = 60.0;  ///< s
  double dt_ped = 0.05;    ///< s
  std::uint64_t seed = 1;
  OutputCadence output;

  /// Semantic checks that need no geometry (ranges, fractions).
  void validate() const;
};

/// Parses JSON text. Unknown keys and type mismatches throw ConfigError
/// naming the key path, e.g. "$.entrances[0].flux".
ScenarioConfig parse_scenario(const std::string& text);
ScenarioConfig load_scenario(const std::filesystem::path& path);

/// Builds the grid and crowd environment once to check that every entrance
/// and initial group reaches its exit group. Throws ConfigError otherwise.
void check_geometry(const ScenarioConfig& config);

}  // namespace aerocrowd
