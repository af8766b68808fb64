#pragma once

#include "aerocrowd/grid.hpp"

namespace aerocrowd {

/// Bilinear interpolation from the four surrounding cell centres. Within half
/// a cell of the domain edge the stencil clamps to the nearest cells.
/// Throws std::out_of_range for points outside the domain.
double interpolate(const Grid& grid, const ScalarField& f, const Vec2& p);
Vec2 interpolate(const Grid& grid, const VectorField& f, const Vec2& p);

/// Gradient of f at p: cell-centre central differences (one-sided at the
/// grid edge or next to non-finite values) blended bilinearly.
Vec2 sample_gradient(const Grid& grid, const ScalarField& f, const Vec2& p);

/// Gradient at one cell centre using the same stencil rules.
Vec2 cell_gradient(const Grid& grid, const ScalarField& f, int i, int j);

}  // namespace aerocrowd
