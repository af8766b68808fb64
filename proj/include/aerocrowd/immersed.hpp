#pragma once

#include <span>
#include <string>
#include <vector>

#include "aerocrowd/flow.hpp"
#include "aerocrowd/grid.hpp"
#include "aerocrowd/pedestrians.hpp"

namespace aerocrowd {

inline constexpr double kBodyTemperature = 37.0;

struct ImmersedFootprint {
  int ped_id = 0;
  std::vector<int> cells;
  Vec2 velocity;
  double temperature = kBodyTemperature;
};

/// Footprints of the pedestrian discs: fluid cells whose centres lie inside
/// a disc; a cell covered by several discs goes to the nearest centre (lower
/// id on ties). Pedestrians with no covered cell get an empty footprint and
/// a warning.
std::vector<ImmersedFootprint> compute_footprints(std::span<const Pedestrian> peds, const Grid& grid,
                                                  std::vector<std::string>* warnings = nullptr);

/// Clears previous immersed marks, then marks and returns the footprints.
std::vector<ImmersedFootprint> rasterize_pedestrians(std::span<const Pedestrian> peds, Grid& grid,
                                                     std::vector<std::string>* warnings = nullptr);

/// Covered cells take the pedestrian velocity and body temperature.
void impose_immersed_bcs(FlowState& state, const std::vector<ImmersedFootprint>& footprints);

struct SneezeEvent {
  int ped_id = 0;
  double t_start = 0.0;
  double duration = 1.0;      ///< T_s, s
  double v_max = 5.0;         ///< m/s
  double T_a = 20.0;          ///< C
  double T_b = kBodyTemperature;
  double c_max = 1.0;         ///< units/m^3
  Vec2 direction{1.0, 0.0};
  double mouth_radius = 0.05; ///< m

  bool active(double t) const { return t >= t_start && t <= t_start + duration; }
};

struct SneezePulse {
  double f = 0.0;
  Vec2 v;
  double T = 0.0;
  double c = 0.0;
};

/// Triangular profile rising to 1 at T_s/2 and back to 0 at T_s.
double sneeze_profile(double local_t, double duration);
SneezePulse sneeze_pulse(const SneezeEvent& e, double t, const Vec2& walking_velocity = {});

/// Mouth point: body centre plus orientation times radius.
Vec2 mouth_point(const Pedestrian& p);

/// Cells reset by a sneeze at mouth point m: centres within the mouth disc,
/// else the cell containing m; wall, inlet and outlet cells are dropped.
std::vector<int> mouth_cells(const Grid& grid, const Vec2& m, double radius);

struct SneezeApplication {
  int ped_id = 0;
  std::vector<int> cells;
  bool skipped = false;
};

/// Resets v, T and c in each active event's mouth disc. Direction and mouth
/// follow the pedestrian's current orientation and position. Written cells
/// become immersed for this step so the reset acts as a boundary value. A cell
/// claimed by an earlier event is not rewritten, so reset regions are disjoint.
std::vector<SneezeApplication> apply_sneeze(FlowState& state, Grid& grid, std::span<const SneezeEvent> events,
                                            std::span<const Pedestrian> peds, double t,
                                            std::vector<std::string>* warnings = nullptr);

/// c at the mouth point (body centre if the mouth is outside the domain).
double mouth_concentration(const Pedestrian& p, const Grid& grid, const FlowState& state,
                           std::vector<std::string>* warnings = nullptr);

/// dose += c(mouth) * breathing_rate * dt for every pedestrian; returns the
/// increments in pedestrian order.
std::vector<double> sample_inhalation(std::span<Pedestrian> peds, const Grid& grid, const FlowState& state,
                                      double dt, std::vector<std::string>* warnings = nullptr);

}  // namespace aerocrowd
