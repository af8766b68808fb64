#pragma once

#include <limits>
#include <span>
#include <vector>

#include "aerocrowd/grid.hpp"

namespace aerocrowd {

/// Value assigned to cells the front never reaches.
inline constexpr double kUnreachable = std::numeric_limits<double>::infinity();

/// Order in which equal-valued trial cells leave the heap. Results must not
/// depend on it beyond round-off; exposed so tests can check that.
enum class TieBreak { kLowestIndex, kHighestIndex };

struct MarchOptions {
  TieBreak tie_break = TieBreak::kLowestIndex;
  /// When set, receives cell indices in the order they were accepted.
  std::vector<int>* accepted_order = nullptr;
};

/// First-order fast marching for |grad T| = 1/speed with T = 0 on the
/// sources. Wall cells that are not sources block the front. Cells never
/// reached hold kUnreachable. Throws ConfigError on an empty source set or
/// non-positive speed.
ScalarField fast_march(const Grid& grid, std::span<const int> sources, double speed, const MarchOptions& options = {});

/// Distance field (m) from the source cells.
ScalarField fast_march_distance(const Grid& grid, std::span<const int> sources, const MarchOptions& options = {});

/// Walking time (s) to the nearest exit cell at the given speed.
ScalarField fast_march_time_to_exit(const Grid& grid, std::span<const int> exits, double speed,
                                    const MarchOptions& options = {});

/// Wall distance and time-to-exit fields with their unit gradients.
struct DistanceMaps {
  ScalarField d_w;
  ScalarField tau_e;
  VectorField grad_d_w;
  VectorField grad_tau_e;
};

/// d_w from every wall cell, tau_e from the exit cells at the given speed.
DistanceMaps build_distance_maps(const Grid& grid, std::span<const int> exit_cells, double walking_speed);

/// Wall-distance half of DistanceMaps (d_w and grad_d_w).
void compute_wall_distance(const Grid& grid, DistanceMaps& maps);

/// Central-difference gradient at cell centres, one-sided where a neighbour
/// is outside the grid or non-finite, zero where neither side is usable.
VectorField gradient_field(const Grid& grid, const ScalarField& f);

/// Gradient normalized to unit length where non-zero.
VectorField unit_gradient_field(const Grid& grid, const ScalarField& f);

}  // namespace aerocrowd
