#include "aerocrowd/fast_marching.hpp"

#include <cmath>
#include <queue>

#include "aerocrowd/error.hpp"
#include "aerocrowd/interpolation.hpp"

namespace aerocrowd {

namespace {

enum class State : unsigned char { kFar, kTrial, kAccepted };

struct HeapEntry {
  double value;
  int idx;
};

}  // namespace

ScalarField fast_march(const Grid& grid, std::span<const int> sources, double speed, const MarchOptions& options) {
  if (sources.empty()) throw ConfigError("fast marching: empty source set");
  if (!(speed > 0.0)) throw ConfigError("fast marching: speed must be positive");

  const int n = grid.size();
  const int nx = grid.nx();
  const int ny = grid.ny();
  const double cost = grid.h() / speed;

  ScalarField value(grid, kUnreachable);
  std::vector<State> state(n, State::kFar);
  std::vector<char> is_source(n, 0);
  for (int s : sources) is_source[s] = 1;

  const bool low_first = options.tie_break == TieBreak::kLowestIndex;
  auto lower_priority = [low_first](const HeapEntry& a, const HeapEntry& b) {
    if (a.value != b.value) return a.value > b.value;
    return low_first ? a.idx > b.idx : a.idx < b.idx;
  };
  std::priority_queue<HeapEntry, std::vector<HeapEntry>, decltype(lower_priority)> heap(lower_priority);

  for (int s : sources) {
    if (state[s] == State::kTrial) continue;
    value[s] = 0.0;
    state[s] = State::kTrial;
    heap.push({0.0, s});
  }

  auto passable = [&](int idx) { return is_source[idx] || !grid.is_wall(idx); };
  auto accepted_value = [&](int i, int j) {
    if (!grid.in_range(i, j)) return kUnreachable;
    const int idx = grid.index(i, j);
    return state[idx] == State::kAccepted ? value[idx] : kUnreachable;
  };

  auto update = [&](int i, int j) {
    const int idx = grid.index(i, j);
    if (state[idx] == State::kAccepted || !passable(idx)) return;
    const double a = std::min(accepted_value(i - 1, j), accepted_value(i + 1, j));
    const double b = std::min(accepted_value(i, j - 1), accepted_value(i, j + 1));
    double t;
    if (std::abs(a - b) >= cost || !std::isfinite(a) || !std::isfinite(b)) {
      t = std::min(a, b) + cost;
    } else {
      const double d = a - b;
      t = 0.5 * (a + b + std::sqrt(2.0 * cost * cost - d * d));
    }
    if (t < value[idx]) {
      value[idx] = t;
      state[idx] = State::kTrial;
      heap.push({t, idx});
    }
  };

  while (!heap.empty()) {
    const HeapEntry top = heap.top();
    heap.pop();
    if (state[top.idx] == State::kAccepted || top.value != value[top.idx]) continue;
    state[top.idx] = State::kAccepted;
    if (options.accepted_order) options.accepted_order->push_back(top.idx);
    const int i = grid.col(top.idx);
    const int j = grid.row(top.idx);
    if (i > 0) update(i - 1, j);
    if (i + 1 < nx) update(i + 1, j);
    if (j > 0) update(i, j - 1);
    if (j + 1 < ny) update(i, j + 1);
  }
  return value;
}

ScalarField fast_march_distance(const Grid& grid, std::span<const int> sources, const MarchOptions& options) {
  return fast_march(grid, sources, 1.0, options);
}

ScalarField fast_march_time_to_exit(const Grid& grid, std::span<const int> exits, double speed,
                                    const MarchOptions& options) {
  return fast_march(grid, exits, speed, options);
}

VectorField gradient_field(const Grid& grid, const ScalarField& f) {
  VectorField g(grid);
  for (int j = 0; j < grid.ny(); ++j) {
    for (int i = 0; i < grid.nx(); ++i) {
      const Vec2 d = cell_gradient(grid, f, i, j);
      g.set(grid.index(i, j), d);
    }
  }
  return g;
}

VectorField unit_gradient_field(const Grid& grid, const ScalarField& f) {
  VectorField g = gradient_field(grid, f);
  for (int idx = 0; idx < g.size(); ++idx) g.set(idx, normalized(g.at(idx)));
  return g;
}

void compute_wall_distance(const Grid& grid, DistanceMaps& maps) {
  std::vector<int> walls;
  for (int idx = 0; idx < grid.size(); ++idx) {
    if (grid.is_wall(idx)) walls.push_back(idx);
  }
  maps.d_w = walls.empty() ? ScalarField(grid, kUnreachable) : fast_march_distance(grid, walls);
  maps.grad_d_w = unit_gradient_field(grid, maps.d_w);
}

DistanceMaps build_distance_maps(const Grid& grid, std::span<const int> exit_cells, double walking_speed) {
  DistanceMaps maps;
  compute_wall_distance(grid, maps);
  maps.tau_e = fast_march_time_to_exit(grid, exit_cells, walking_speed);
  maps.grad_tau_e = unit_gradient_field(grid, maps.tau_e);
  return maps;
}

}  // namespace aerocrowd
