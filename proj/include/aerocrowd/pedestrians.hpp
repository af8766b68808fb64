#pragma once

#include <array>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "aerocrowd/fast_marching.hpp"
#include "aerocrowd/grid.hpp"
#include "aerocrowd/rng.hpp"
#include "aerocrowd/vec2.hpp"

namespace aerocrowd {

enum class Health : std::uint8_t { kSusceptible, kAsymptomatic, kInfectious, kNewlyInfected };

const char* to_string(Health h);

struct Waypoint {
  Vec2 position;
  double radius = 0.5;      ///< reached when the centre is this close, m
  double loiter_min = 0.0;  ///< s
  double loiter_max = 0.0;  ///< s
};

/// Route through waypoints, then to the nearest exit of an exit group.
struct Goal {
  std::vector<Waypoint> route;
  size_t next = 0;
  double loiter_until = -std::numeric_limits<double>::infinity();
  int exit_group = 0;

  bool heading_to_exit() const { return next >= route.size(); }
};

struct Pedestrian {
  int id = 0;
  Vec2 x;
  Vec2 v;
  double r = 0.25;
  double v_d = 1.35;
  double t_r = 0.5;
  double pushiness = 0.5;
  double comfort_zone = 0.0;
  Goal goal;
  Health health = Health::kSusceptible;
  double dose = 0.0;
  double breathing_rate = 1.0e-4;  ///< m^3/s
  double next_sneeze_t = std::numeric_limits<double>::infinity();
  double sneeze_active_until = -std::numeric_limits<double>::infinity();
  Vec2 orientation{1.0, 0.0};
  double spawn_t = 0.0;
  int entrance = -1;
  Vec2 prev_x;  ///< position at the start of the current step
};

struct ForceBreakdown {
  Vec2 will;
  Vec2 avoid;
  Vec2 wall;
  Vec2 contact;

  Vec2 total() const { return will + avoid + wall + contact; }
};

struct CrowdParams {
  double perception_range = 5.0;    ///< m
  double perception_cone = 120.0;   ///< full opening angle, degrees
  double lookahead = 2.0;           ///< s, collision-course horizon
  double avoid_ratio = 4.0;         ///< f_max(avoid) / (v_d / t_r)
  double wall_ratio = 8.0;
  double contact_ratio = 8.0;
  double contact_cutoff = 1.5;      ///< rho_ij beyond which contact vanishes
  double far_range = 2.0;           ///< rho beyond which avoidance is purely tangential
  bool right_bias = true;
  double stride_frequency = 2.0;    ///< Hz
  double max_speed_factor = 1.2;    ///< hard cap |v| <= factor * v_d
  double orientation_speed = 0.1;   ///< m/s, below which orientation is kept
  /// Common factor on every f_max; equivalent to dividing t_r by it.
  double force_scale = 1.0;

  void validate() const;
};

/// Exit regions sharing one time-to-exit field.
struct ExitGroup {
  std::vector<Rect> regions;
  std::vector<int> cells;
  ScalarField tau_e;
};

/// Static fields the forces read: wall distance and per-group time to exit.
struct CrowdEnvironment {
  const Grid* grid = nullptr;
  ScalarField d_w;
  std::vector<ExitGroup> exits;

  /// Wall distance ignores wall cells inside exit regions so exits stay
  /// walkable. Throws ConfigError if a group has no cells.
  static CrowdEnvironment build(const Grid& grid, const std::vector<std::vector<Rect>>& exit_groups,
                                double walking_speed);

  bool reached_exit(const Pedestrian& p) const;
};

/// Uniform-bin spatial hash over pedestrian centres.
class NeighborIndex {
 public:
  explicit NeighborIndex(double bin_size = 1.0) : bin_(bin_size) {}
  void build(std::span<const Pedestrian> peds);
  /// Indices (into the span given to build) of pedestrians with centre
  /// within `radius` of x (inclusive), ordered by pedestrian id.
  std::vector<int> query(const Vec2& x, double radius) const;

 private:
  double bin_;
  std::span<const Pedestrian> peds_;
  std::vector<std::pair<long long, int>> entries_;  // (bin key, index), sorted
  long long key(int bx, int by) const { return (static_cast<long long>(bx) << 32) ^ static_cast<unsigned>(by); }
};

// Individual force laws (per unit mass, m/s^2).
Vec2 will_force(const Pedestrian& p, const Vec2& s, double force_scale = 1.0);
Vec2 desired_direction(const Pedestrian& p, const CrowdEnvironment& env, double t);
Vec2 waypoint_direction(const Vec2& x, const Vec2& target);
Vec2 avoidance_force(const Pedestrian& p, std::span<const Pedestrian> others, const std::vector<int>& neighbors,
                     const Vec2& motion_dir, const CrowdParams& params);
Vec2 wall_force(const Pedestrian& p, const CrowdEnvironment& env, const CrowdParams& params);
/// Contact acceleration on a (the negation acts on b).
Vec2 contact_force(const Pedestrian& a, const Pedestrian& b, const CrowdParams& params);
/// Speed cap from stride frequency and the free distance ahead along dir.
double motion_inhibition(const Pedestrian& p, std::span<const Pedestrian> others, const std::vector<int>& neighbors,
                         const Vec2& dir, const CrowdParams& params);

/// Two-stage midpoint Runge-Kutta for x' = v, v' = a(x, v).
using AccelFn = std::function<void(std::span<const Vec2> x, std::span<const Vec2> v, std::span<Vec2> a)>;
void rk2_step(std::vector<Vec2>& x, std::vector<Vec2>& v, double dt, const AccelFn& accel);

struct Entrance {
  Rect region;
  double flux = 0.0;  ///< pedestrians per second
  bool poisson = false;
  std::array<double, 3> health_fractions{0.7, 0.1, 0.2};  ///< susceptible, asymptomatic, infectious
  int exit_group = 0;
  std::vector<Waypoint> route;
};

/// Trait distributions applied at spawn.
struct TraitParams {
  double radius = 0.25;
  double desired_speed = 1.35;
  double relaxation_time = 0.5;
  double pushiness_min = 0.2;
  double pushiness_max = 0.8;
  double comfort_zone = 0.0;
  double breathing_rate = 1.0e-4;
};

struct CrowdEvent {
  enum class Kind { kSpawn, kDespawn, kDeferred };
  Kind kind;
  double t;
  int ped_id;  ///< -1 for deferred arrivals
  int entrance;
  Vec2 x;
  double dose = 0.0;
  Health health = Health::kSusceptible;
};

/// Pedestrians present at the start of a run.
struct InitialGroup {
  int count = 0;
  Rect region;
  std::array<double, 3> health_fractions{1.0, 0.0, 0.0};
  int exit_group = 0;
  std::vector<Waypoint> route;
};

/// Owns the pedestrians, their entrances and exits.
class Crowd {
 public:
  Crowd(const Grid& grid, CrowdEnvironment env, CrowdParams params, TraitParams traits,
        std::vector<Entrance> entrances);

  const std::vector<Pedestrian>& peds() const { return peds_; }
  std::vector<Pedestrian>& peds() { return peds_; }
  const CrowdParams& params() const { return params_; }
  const CrowdEnvironment& environment() const { return env_; }
  const std::vector<Entrance>& entrances() const { return entrances_; }
  int total_spawned() const { return next_id_; }
  int deferred() const { return deferred_; }

  /// Adds a pedestrian with the next id; traits drawn from the rng.
  Pedestrian& add(const Vec2& x, Health health, int entrance, double t, Rng& rng);
  /// Places a group without overlap; throws ConfigError when the region is
  /// too crowded.
  std::vector<CrowdEvent> populate(const InitialGroup& group, double t, Rng& rng);
  /// Draws first arrival times. Call once before the first spawn.
  void initialize_arrivals(Rng& rng);
  /// Spawns due arrivals at time t, then removes pedestrians at their exits.
  std::vector<CrowdEvent> spawn_and_despawn(double t, Rng& rng);
  /// Waypoint bookkeeping: advances reached waypoints and draws loiter times.
  void update_goals(double t, Rng& rng);

  ForceBreakdown forces(int index, double t) const;
  /// Advances every pedestrian by dt with RK2 then applies the speed caps.
  void integrate(double t, double dt);

 private:
  ForceBreakdown forces_at(std::span<const Pedestrian> snapshot, int index, const NeighborIndex& nbrs,
                           double t) const;
  bool slot_free(const Vec2& x, double r) const;
  std::optional<Vec2> find_slot(const Rect& region, int attempts, Rng& rng) const;
  static Health draw_health(const std::array<double, 3>& fractions, Rng& rng);

  const Grid& grid_;
  CrowdEnvironment env_;
  CrowdParams params_;
  TraitParams traits_;
  std::vector<Entrance> entrances_;
  std::vector<double> next_arrival_;
  std::vector<int> pending_;
  std::vector<Pedestrian> peds_;
  int next_id_ = 0;
  int deferred_ = 0;
};

}  // namespace aerocrowd
