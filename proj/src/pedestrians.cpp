#include "aerocrowd/pedestrians.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "aerocrowd/error.hpp"
#include "aerocrowd/interpolation.hpp"

namespace aerocrowd {

const char* to_string(Health h) {
  switch (h) {
    case Health::kSusceptible: return "susceptible";
    case Health::kAsymptomatic: return "asymptomatic_infected";
    case Health::kInfectious: return "infectious";
    case Health::kNewlyInfected: return "newly_infected";
  }
  return "unknown";
}

void CrowdParams::validate() const {
  if (!(perception_range > 0.0)) throw ConfigError("pedestrian.perception_range must be positive");
  if (!(perception_cone > 0.0 && perception_cone <= 360.0)) {
    throw ConfigError("pedestrian.perception_cone must lie in (0, 360]");
  }
  if (!(lookahead > 0.0)) throw ConfigError("pedestrian.lookahead must be positive");
  if (!(contact_cutoff >= 1.0)) throw ConfigError("pedestrian.contact_cutoff must be at least 1");
  if (!(stride_frequency > 0.0)) throw ConfigError("pedestrian.stride_frequency must be positive");
  if (!(max_speed_factor >= 1.0)) throw ConfigError("pedestrian.max_speed_factor must be at least 1");
  if (!(force_scale > 0.0)) throw ConfigError("pedestrian.force_scale must be positive");
  if (avoid_ratio < 0.0 || wall_ratio < 0.0 || contact_ratio < 0.0) {
    throw ConfigError("pedestrian force ratios must be non-negative");
  }
}

// ---------------------------------------------------------------------------
// Environment

CrowdEnvironment CrowdEnvironment::build(const Grid& grid, const std::vector<std::vector<Rect>>& exit_groups,
                                         double walking_speed) {
  CrowdEnvironment env;
  env.grid = &grid;
  std::vector<char> in_exit(grid.size(), 0);
  for (size_t gi = 0; gi < exit_groups.size(); ++gi) {
    ExitGroup group;
    group.regions = exit_groups[gi];
    for (const Rect& r : group.regions) {
      for (int idx : grid.cells_overlapping(r)) {
        group.cells.push_back(idx);
        in_exit[idx] = 1;
      }
    }
    std::sort(group.cells.begin(), group.cells.end());
    group.cells.erase(std::unique(group.cells.begin(), group.cells.end()), group.cells.end());
    if (group.cells.empty()) throw ConfigError("exit group " + std::to_string(gi) + " covers no cells");
    group.tau_e = fast_march_time_to_exit(grid, group.cells, walking_speed);
    env.exits.push_back(std::move(group));
  }
  std::vector<int> walls;
  for (int idx = 0; idx < grid.size(); ++idx) {
    if (grid.is_wall(idx) && !in_exit[idx]) walls.push_back(idx);
  }
  env.d_w = walls.empty() ? ScalarField(grid, kUnreachable) : fast_march_distance(grid, walls);
  return env;
}

bool CrowdEnvironment::reached_exit(const Pedestrian& p) const {
  if (!p.goal.heading_to_exit() || p.goal.exit_group < 0 || p.goal.exit_group >= static_cast<int>(exits.size())) {
    return false;
  }
  for (const Rect& r : exits[p.goal.exit_group].regions) {
    const Rect grown{r.x0 - p.r, r.y0 - p.r, r.x1 + p.r, r.y1 + p.r};
    if (grown.contains(p.x)) return true;
  }
  return false;
}

// ---------------------------------------------------------------------------
// Neighbour index

void NeighborIndex::build(std::span<const Pedestrian> peds) {
  peds_ = peds;
  entries_.clear();
  entries_.reserve(peds.size());
  for (size_t k = 0; k < peds.size(); ++k) {
    const int bx = static_cast<int>(std::floor(peds[k].x.x / bin_));
    const int by = static_cast<int>(std::floor(peds[k].x.y / bin_));
    entries_.emplace_back(key(bx, by), static_cast<int>(k));
  }
  std::sort(entries_.begin(), entries_.end());
}

std::vector<int> NeighborIndex::query(const Vec2& x, double radius) const {
  std::vector<int> out;
  if (entries_.empty()) return out;
  const int bx0 = static_cast<int>(std::floor((x.x - radius) / bin_));
  const int bx1 = static_cast<int>(std::floor((x.x + radius) / bin_));
  const int by0 = static_cast<int>(std::floor((x.y - radius) / bin_));
  const int by1 = static_cast<int>(std::floor((x.y + radius) / bin_));
  const double r2 = radius * radius;
  for (int bx = bx0; bx <= bx1; ++bx) {
    for (int by = by0; by <= by1; ++by) {
      const long long k = key(bx, by);
      auto it = std::lower_bound(entries_.begin(), entries_.end(), std::pair<long long, int>{k, -1});
      for (; it != entries_.end() && it->first == k; ++it) {
        if (norm2(peds_[it->second].x - x) <= r2) out.push_back(it->second);
      }
    }
  }
  std::sort(out.begin(), out.end(), [&](int a, int b) { return peds_[a].id < peds_[b].id; });
  return out;
}

// ---------------------------------------------------------------------------
// Forces

Vec2 will_force(const Pedestrian& p, const Vec2& s, double force_scale) {
  return force_scale * (p.v_d * s - p.v) / p.t_r;
}

Vec2 waypoint_direction(const Vec2& x, const Vec2& target) { return normalized(target - x); }

Vec2 desired_direction(const Pedestrian& p, const CrowdEnvironment& env, double t) {
  if (t < p.goal.loiter_until) return {};
  if (!p.goal.heading_to_exit()) return waypoint_direction(p.x, p.goal.route[p.goal.next].position);
  if (p.goal.exit_group < 0 || p.goal.exit_group >= static_cast<int>(env.exits.size())) return {};
  const Grid& g = *env.grid;
  if (!g.contains(p.x)) return {};
  return normalized(-sample_gradient(g, env.exits[p.goal.exit_group].tau_e, p.x));
}

Vec2 avoidance_force(const Pedestrian& p, std::span<const Pedestrian> others, const std::vector<int>& neighbors,
                     const Vec2& motion_dir, const CrowdParams& params) {
  if (norm2(motion_dir) == 0.0 || p.pushiness >= 1.0) return {};
  const double f_max = params.avoid_ratio * params.force_scale * p.v_d / p.t_r;
  const double cos_half = std::cos(0.5 * params.perception_cone * std::numbers::pi / 180.0);
  const Vec2 right{motion_dir.y, -motion_dir.x};
  Vec2 total;
  for (int k : neighbors) {
    const Pedestrian& q = others[k];
    if (q.id == p.id) continue;
    const Vec2 d = q.x - p.x;
    const double dist = norm(d);
    if (dist == 0.0 || dist > params.perception_range) continue;
    if (dot(motion_dir, d) < cos_half * dist) continue;
    const Vec2 w = q.v - p.v;
    const double closing = dot(d, w);
    if (closing >= 0.0) continue;
    const double t_star = std::min(-closing / norm2(w), params.lookahead);
    const double reach = p.r + q.r + p.comfort_zone + q.comfort_zone;
    if (norm(d + w * t_star) >= reach) continue;

    const double rho = dist / (p.r + p.comfort_zone);
    const double mag = (1.0 - p.pushiness) * f_max / (1.0 + rho * rho);
    const double lateral = cross(motion_dir, d);  // > 0: neighbour on the left
    const double tie = params.right_bias ? 0.25 * (p.r + q.r) : 0.0;
    const Vec2 side = (std::abs(lateral) <= tie || lateral > 0.0) ? right : -right;
    const Vec2 dir = rho > params.far_range ? side : (side - motion_dir) / std::numbers::sqrt2;
    total += mag * dir;
  }
  return total;
}

Vec2 wall_force(const Pedestrian& p, const CrowdEnvironment& env, const CrowdParams& params) {
  const Grid& g = *env.grid;
  if (!g.contains(p.x)) return {};
  const double d = interpolate(g, env.d_w, p.x);
  if (!std::isfinite(d)) return {};
  const Vec2 away = normalized(sample_gradient(g, env.d_w, p.x));
  const double f_max = params.wall_ratio * params.force_scale * p.v_d / p.t_r;
  const double q = d / p.r;
  return f_max / (1.0 + q * q) * away;
}

Vec2 contact_force(const Pedestrian& a, const Pedestrian& b, const CrowdParams& params) {
  const Vec2 d = a.x - b.x;
  const double dist = norm(d);
  const double rho = dist / (a.r + b.r);
  if (rho >= params.contact_cutoff) return {};
  Vec2 dir;
  if (dist > 0.0) {
    dir = d / dist;
  } else {
    dir = normalized(a.prev_x - b.prev_x);
    if (norm2(dir) == 0.0) dir = a.id < b.id ? Vec2{1.0, 0.0} : Vec2{-1.0, 0.0};
  }
  const double f = params.contact_ratio * params.force_scale * 0.5 * (a.v_d / a.t_r + b.v_d / b.t_r);
  const double mag = (rho < 1.0 ? f : 2.0 * f) / (1.0 + rho * rho);
  return mag * dir;
}

double motion_inhibition(const Pedestrian& p, std::span<const Pedestrian> others, const std::vector<int>& neighbors,
                         const Vec2& dir, const CrowdParams& params) {
  const double nu = params.stride_frequency;
  double free = p.v_d / nu;
  if (norm2(dir) == 0.0) return nu * free;
  for (int k : neighbors) {
    const Pedestrian& q = others[k];
    if (q.id == p.id) continue;
    const Vec2 d = q.x - p.x;
    if (dot(d, dir) <= 0.0) continue;
    const double reach = p.r + q.r;
    if (std::abs(cross(dir, d)) >= reach) continue;
    free = std::min(free, std::max(0.0, norm(d) - reach));
  }
  return nu * free;
}

// ---------------------------------------------------------------------------
// Integration

void rk2_step(std::vector<Vec2>& x, std::vector<Vec2>& v, double dt, const AccelFn& accel) {
  const size_t n = x.size();
  std::vector<Vec2> a(n), xm(n), vm(n);
  accel(x, v, a);
  for (size_t k = 0; k < n; ++k) {
    xm[k] = x[k] + 0.5 * dt * v[k];
    vm[k] = v[k] + 0.5 * dt * a[k];
  }
  accel(xm, vm, a);
  for (size_t k = 0; k < n; ++k) {
    x[k] += dt * vm[k];
    v[k] += dt * a[k];
  }
}

// ---------------------------------------------------------------------------
// Crowd

Crowd::Crowd(const Grid& grid, CrowdEnvironment env, CrowdParams params, TraitParams traits,
             std::vector<Entrance> entrances)
    : grid_(grid),
      env_(std::move(env)),
      params_(params),
      traits_(traits),
      entrances_(std::move(entrances)),
      next_arrival_(entrances_.size(), std::numeric_limits<double>::infinity()),
      pending_(entrances_.size(), 0) {
  params_.validate();
}

Pedestrian& Crowd::add(const Vec2& x, Health health, int entrance, double t, Rng& rng) {
  Pedestrian p;
  p.id = next_id_++;
  p.x = x;
  p.prev_x = x;
  p.r = traits_.radius;
  p.v_d = traits_.desired_speed;
  p.t_r = traits_.relaxation_time;
  p.pushiness = rng.uniform(traits_.pushiness_min, traits_.pushiness_max);
  p.comfort_zone = traits_.comfort_zone;
  p.breathing_rate = traits_.breathing_rate;
  p.health = health;
  p.spawn_t = t;
  p.entrance = entrance;
  if (entrance >= 0) {
    p.goal.route = entrances_[entrance].route;
    p.goal.exit_group = entrances_[entrance].exit_group;
  }
  const Vec2 s = desired_direction(p, env_, t);
  if (norm2(s) > 0.0) p.orientation = s;
  peds_.push_back(std::move(p));
  return peds_.back();
}

void Crowd::initialize_arrivals(Rng& rng) {
  for (size_t e = 0; e < entrances_.size(); ++e) {
    const Entrance& en = entrances_[e];
    if (!(en.flux > 0.0)) continue;
    next_arrival_[e] = en.poisson ? rng.exponential(en.flux) : 1.0 / en.flux;
  }
}

bool Crowd::slot_free(const Vec2& x, double r) const {
  const auto cell = grid_.locate(x);
  if (!cell || grid_.is_wall(*cell)) return false;
  const double d = interpolate(grid_, env_.d_w, x);
  if (std::isfinite(d) && d < r) return false;
  for (const Pedestrian& q : peds_) {
    if (norm(q.x - x) < r + q.r) return false;
  }
  return true;
}

std::optional<Vec2> Crowd::find_slot(const Rect& region, int attempts, Rng& rng) const {
  const double r = traits_.radius;
  const double x0 = std::min(region.x0 + r, region.center().x);
  const double x1 = std::max(region.x1 - r, region.center().x);
  const double y0 = std::min(region.y0 + r, region.center().y);
  const double y1 = std::max(region.y1 - r, region.center().y);
  for (int a = 0; a < attempts; ++a) {
    const Vec2 pos{rng.uniform(x0, x1), rng.uniform(y0, y1)};
    if (slot_free(pos, r)) return pos;
  }
  return std::nullopt;
}

Health Crowd::draw_health(const std::array<double, 3>& f, Rng& rng) {
  const double u = rng.uniform();
  return u < f[0] ? Health::kSusceptible : (u < f[0] + f[1] ? Health::kAsymptomatic : Health::kInfectious);
}

std::vector<CrowdEvent> Crowd::populate(const InitialGroup& group, double t, Rng& rng) {
  constexpr int kAttempts = 1000;
  std::vector<CrowdEvent> events;
  for (int n = 0; n < group.count; ++n) {
    const auto pos = find_slot(group.region, kAttempts, rng);
    if (!pos) {
      throw ConfigError("could not place initial pedestrian " + std::to_string(n + 1) + " of " +
                        std::to_string(group.count) + " without overlap");
    }
    const Health h = draw_health(group.health_fractions, rng);
    Pedestrian& p = add(*pos, h, -1, t, rng);
    p.goal.route = group.route;
    p.goal.exit_group = group.exit_group;
    const Vec2 s = desired_direction(p, env_, t);
    if (norm2(s) > 0.0) p.orientation = s;
    events.push_back({CrowdEvent::Kind::kSpawn, t, p.id, -1, p.x, 0.0, p.health});
  }
  return events;
}

std::vector<CrowdEvent> Crowd::spawn_and_despawn(double t, Rng& rng) {
  std::vector<CrowdEvent> events;
  for (size_t e = 0; e < entrances_.size(); ++e) {
    const Entrance& en = entrances_[e];
    while (next_arrival_[e] <= t) {
      ++pending_[e];
      next_arrival_[e] += en.poisson ? rng.exponential(en.flux) : 1.0 / en.flux;
    }
  }
  constexpr int kAttempts = 20;
  for (size_t e = 0; e < entrances_.size(); ++e) {
    const Entrance& en = entrances_[e];
    while (pending_[e] > 0) {
      const auto pos = find_slot(en.region, kAttempts, rng);
      if (!pos) {
        ++deferred_;
        events.push_back({CrowdEvent::Kind::kDeferred, t, -1, static_cast<int>(e), en.region.center()});
        break;
      }
      const Health h = draw_health(en.health_fractions, rng);
      const Pedestrian& p = add(*pos, h, static_cast<int>(e), t, rng);
      events.push_back({CrowdEvent::Kind::kSpawn, t, p.id, static_cast<int>(e), p.x, 0.0, p.health});
      --pending_[e];
    }
  }
  std::vector<Pedestrian> kept;
  kept.reserve(peds_.size());
  for (Pedestrian& p : peds_) {
    if (env_.reached_exit(p)) {
      events.push_back({CrowdEvent::Kind::kDespawn, t, p.id, p.entrance, p.x, p.dose, p.health});
    } else {
      kept.push_back(std::move(p));
    }
  }
  peds_ = std::move(kept);
  return events;
}

void Crowd::update_goals(double t, Rng& rng) {
  for (Pedestrian& p : peds_) {
    Goal& g = p.goal;
    if (g.heading_to_exit()) continue;
    if (std::isfinite(g.loiter_until)) {
      if (t < g.loiter_until) continue;
      g.loiter_until = -std::numeric_limits<double>::infinity();
      ++g.next;
      continue;
    }
    const Waypoint& w = g.route[g.next];
    if (norm(p.x - w.position) > w.radius) continue;
    if (w.loiter_max > 0.0) {
      g.loiter_until = t + rng.uniform(w.loiter_min, w.loiter_max);
    } else {
      ++g.next;
    }
  }
}

ForceBreakdown Crowd::forces_at(std::span<const Pedestrian> snapshot, int index, const NeighborIndex& nbrs,
                                double t) const {
  const Pedestrian& p = snapshot[index];
  ForceBreakdown f;
  const Vec2 s = desired_direction(p, env_, t);
  f.will = will_force(p, s, params_.force_scale);
  const std::vector<int> near = nbrs.query(p.x, params_.perception_range);
  Vec2 motion = norm(p.v) > params_.orientation_speed ? normalized(p.v) : s;
  if (norm2(motion) == 0.0) motion = p.orientation;
  f.avoid = avoidance_force(p, snapshot, near, motion, params_);
  f.wall = wall_force(p, env_, params_);
  for (int k : near) {
    if (k != index) f.contact += contact_force(p, snapshot[k], params_);
  }
  return f;
}

ForceBreakdown Crowd::forces(int index, double t) const {
  NeighborIndex nbrs;
  nbrs.build(peds_);
  return forces_at(peds_, index, nbrs, t);
}

void Crowd::integrate(double t, double dt) {
  const size_t n = peds_.size();
  if (n == 0) return;
  for (Pedestrian& p : peds_) p.prev_x = p.x;
  std::vector<Vec2> x(n), v(n);
  for (size_t k = 0; k < n; ++k) {
    x[k] = peds_[k].x;
    v[k] = peds_[k].v;
  }
  std::vector<Pedestrian> stage = peds_;
  NeighborIndex nbrs;
  AccelFn accel = [&](std::span<const Vec2> xs, std::span<const Vec2> vs, std::span<Vec2> a) {
    for (size_t k = 0; k < n; ++k) {
      stage[k].x = xs[k];
      stage[k].v = vs[k];
    }
    nbrs.build(stage);
    for (size_t k = 0; k < n; ++k) a[k] = forces_at(stage, static_cast<int>(k), nbrs, t).total();
  };
  rk2_step(x, v, dt, accel);

  for (size_t k = 0; k < n; ++k) {
    peds_[k].x = x[k];
    peds_[k].v = v[k];
  }
  nbrs.build(peds_);
  std::vector<double> caps(n);
  for (size_t k = 0; k < n; ++k) {
    const Pedestrian& p = peds_[k];
    const Vec2 dir = normalized(p.v);
    const std::vector<int> near = nbrs.query(p.x, p.v_d / params_.stride_frequency + 2.0 * p.r + 1.0);
    caps[k] = std::min(motion_inhibition(p, peds_, near, dir, params_), params_.max_speed_factor * p.v_d);
  }
  for (size_t k = 0; k < n; ++k) {
    Pedestrian& p = peds_[k];
    const double speed = norm(p.v);
    if (speed > caps[k]) p.v = speed > 0.0 ? p.v * (caps[k] / speed) : Vec2{};
    if (norm(p.v) > params_.orientation_speed) p.orientation = normalized(p.v);
  }
}

}  // namespace aerocrowd
