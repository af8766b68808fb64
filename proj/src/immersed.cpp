#include "aerocrowd/immersed.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "aerocrowd/interpolation.hpp"

namespace aerocrowd {

namespace {

// Cells with centres inside the closed disc, scanning its bounding box.
template <class Fn>
void for_cells_in_disc(const Grid& g, const Vec2& c, double radius, Fn&& fn) {
  const double h = g.h();
  const int i0 = std::max(0, static_cast<int>(std::floor((c.x - radius - g.origin().x) / h)));
  const int i1 = std::min(g.nx() - 1, static_cast<int>(std::floor((c.x + radius - g.origin().x) / h)));
  const int j0 = std::max(0, static_cast<int>(std::floor((c.y - radius - g.origin().y) / h)));
  const int j1 = std::min(g.ny() - 1, static_cast<int>(std::floor((c.y + radius - g.origin().y) / h)));
  const double r2 = radius * radius;
  for (int j = j0; j <= j1; ++j) {
    for (int i = i0; i <= i1; ++i) {
      const double d2 = norm2(g.center(i, j) - c);
      if (d2 <= r2) fn(g.index(i, j), d2);
    }
  }
}

bool resettable(CellKind k) { return k == CellKind::kFluid || k == CellKind::kImmersed; }

}  // namespace

std::vector<ImmersedFootprint> compute_footprints(std::span<const Pedestrian> peds, const Grid& grid,
                                                  std::vector<std::string>* warnings) {
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> best(grid.size(), inf);
  std::vector<int> owner(grid.size(), -1);
  for (size_t k = 0; k < peds.size(); ++k) {
    const Pedestrian& p = peds[k];
    for_cells_in_disc(grid, p.x, p.r, [&](int idx, double d2) {
      if (grid.kind(idx) != CellKind::kFluid && grid.kind(idx) != CellKind::kImmersed) return;
      const bool closer = d2 < best[idx] || (d2 == best[idx] && owner[idx] >= 0 && p.id < peds[owner[idx]].id);
      if (closer) {
        best[idx] = d2;
        owner[idx] = static_cast<int>(k);
      }
    });
  }
  std::vector<ImmersedFootprint> out(peds.size());
  for (size_t k = 0; k < peds.size(); ++k) {
    out[k].ped_id = peds[k].id;
    out[k].velocity = peds[k].v;
  }
  for (int idx = 0; idx < grid.size(); ++idx) {
    if (owner[idx] >= 0) out[owner[idx]].cells.push_back(idx);
  }
  if (warnings) {
    for (const ImmersedFootprint& f : out) {
      if (f.cells.empty()) warnings->push_back("pedestrian " + std::to_string(f.ped_id) + " covers no fluid cell");
    }
  }
  return out;
}

std::vector<ImmersedFootprint> rasterize_pedestrians(std::span<const Pedestrian> peds, Grid& grid,
                                                     std::vector<std::string>* warnings) {
  grid.clear_immersed();
  std::vector<ImmersedFootprint> fps = compute_footprints(peds, grid, warnings);
  for (const ImmersedFootprint& f : fps) {
    for (int idx : f.cells) grid.set_kind(idx, CellKind::kImmersed);
  }
  return fps;
}

void impose_immersed_bcs(FlowState& state, const std::vector<ImmersedFootprint>& footprints) {
  for (const ImmersedFootprint& f : footprints) {
    for (int idx : f.cells) {
      state.v.set(idx, f.velocity);
      state.T[idx] = f.temperature;
    }
  }
}

double sneeze_profile(double local_t, double duration) {
  if (local_t < 0.0 || local_t >= duration) return 0.0;
  const double s = 2.0 * local_t / duration;
  return s <= 1.0 ? s : 2.0 - s;
}

SneezePulse sneeze_pulse(const SneezeEvent& e, double t, const Vec2& walking_velocity) {
  SneezePulse p;
  p.f = sneeze_profile(t - e.t_start, e.duration);
  p.v = e.v_max * p.f * e.direction + walking_velocity;
  p.T = e.T_a + p.f * (e.T_b - e.T_a);
  p.c = e.c_max * p.f;
  return p;
}

Vec2 mouth_point(const Pedestrian& p) { return p.x + p.r * p.orientation; }

std::vector<int> mouth_cells(const Grid& grid, const Vec2& m, double radius) {
  std::vector<int> cells;
  for_cells_in_disc(grid, m, radius, [&](int idx, double) {
    if (resettable(grid.kind(idx))) cells.push_back(idx);
  });
  if (cells.empty()) {
    bool any_in_disc = false;
    for_cells_in_disc(grid, m, radius, [&](int, double) { any_in_disc = true; });
    if (!any_in_disc) {
      if (const auto c = grid.locate(m); c && resettable(grid.kind(*c))) cells.push_back(*c);
    }
  }
  return cells;
}

std::vector<SneezeApplication> apply_sneeze(FlowState& state, Grid& grid, std::span<const SneezeEvent> events,
                                            std::span<const Pedestrian> peds, double t,
                                            std::vector<std::string>* warnings) {
  std::vector<SneezeApplication> out;
  std::vector<char> claimed(grid.size(), 0);
  for (const SneezeEvent& e : events) {
    if (!e.active(t)) continue;
    const auto it = std::find_if(peds.begin(), peds.end(), [&](const Pedestrian& p) { return p.id == e.ped_id; });
    if (it == peds.end()) continue;
    SneezeEvent live = e;
    live.direction = it->orientation;
    const SneezePulse pulse = sneeze_pulse(live, t, it->v);
    SneezeApplication app;
    app.ped_id = e.ped_id;
    const Vec2 m = mouth_point(*it);
    if (grid.contains(m)) app.cells = mouth_cells(grid, m, e.mouth_radius);
    std::erase_if(app.cells, [&](int idx) { return claimed[idx] != 0; });
    if (app.cells.empty()) {
      app.skipped = true;
      if (warnings) {
        std::ostringstream os;
        os << "sneeze of pedestrian " << e.ped_id << " at t=" << t << " skipped: mouth region in walls";
        warnings->push_back(os.str());
      }
    }
    for (int idx : app.cells) {
      claimed[idx] = 1;
      grid.set_kind(idx, CellKind::kImmersed);
      state.v.set(idx, pulse.v);
      state.T[idx] = pulse.T;
      state.c[idx] = pulse.c;
    }
    out.push_back(std::move(app));
  }
  return out;
}

double mouth_concentration(const Pedestrian& p, const Grid& grid, const FlowState& state,
                           std::vector<std::string>* warnings) {
  Vec2 m = mouth_point(p);
  if (!grid.contains(m)) {
    if (warnings) warnings->push_back("pedestrian " + std::to_string(p.id) + " mouth outside domain");
    m = p.x;
    if (!grid.contains(m)) return 0.0;
  }
  return std::max(0.0, interpolate(grid, state.c, m));
}

std::vector<double> sample_inhalation(std::span<Pedestrian> peds, const Grid& grid, const FlowState& state,
                                      double dt, std::vector<std::string>* warnings) {
  std::vector<double> inc(peds.size());
  for (size_t k = 0; k < peds.size(); ++k) {
    inc[k] = mouth_concentration(peds[k], grid, state, warnings) * peds[k].breathing_rate * dt;
    peds[k].dose += inc[k];
  }
  return inc;
}

}  // namespace aerocrowd
