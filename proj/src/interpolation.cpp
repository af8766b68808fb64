#include "aerocrowd/interpolation.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace aerocrowd {

namespace {

struct Stencil {
  int i0, j0;
  double wx, wy;
};

Stencil bilinear_stencil(const Grid& grid, const Vec2& p) {
  if (!grid.contains(p)) {
    std::ostringstream os;
    os << "interpolate: point (" << p.x << ", " << p.y << ") outside domain";
    throw std::out_of_range(os.str());
  }
  const double sx = std::clamp((p.x - grid.origin().x) / grid.h() - 0.5, 0.0, grid.nx() - 1.0);
  const double sy = std::clamp((p.y - grid.origin().y) / grid.h() - 0.5, 0.0, grid.ny() - 1.0);
  const int i0 = std::min(static_cast<int>(sx), grid.nx() - 2);
  const int j0 = std::min(static_cast<int>(sy), grid.ny() - 2);
  return {i0, j0, sx - i0, sy - j0};
}

template <class Get>
auto blend(const Stencil& s, Get&& get) {
  const auto f00 = get(s.i0, s.j0);
  const auto f10 = get(s.i0 + 1, s.j0);
  const auto f01 = get(s.i0, s.j0 + 1);
  const auto f11 = get(s.i0 + 1, s.j0 + 1);
  // Exact zero weights keep unused (possibly non-finite) corners out of the sum.
  auto term = [](double w, auto v) { return w == 0.0 ? decltype(v){} : v * w; };
  return term((1 - s.wx) * (1 - s.wy), f00) + term(s.wx * (1 - s.wy), f10) + term((1 - s.wx) * s.wy, f01) +
         term(s.wx * s.wy, f11);
}

}  // namespace

double interpolate(const Grid& grid, const ScalarField& f, const Vec2& p) {
  const Stencil s = bilinear_stencil(grid, p);
  return blend(s, [&](int i, int j) { return f(i, j); });
}

Vec2 interpolate(const Grid& grid, const VectorField& f, const Vec2& p) {
  const Stencil s = bilinear_stencil(grid, p);
  return blend(s, [&](int i, int j) { return Vec2{f.x(i, j), f.y(i, j)}; });
}

Vec2 cell_gradient(const Grid& grid, const ScalarField& f, int i, int j) {
  const double fc = f(i, j);
  if (!std::isfinite(fc)) return {};
  auto usable = [&](int a, int b) { return grid.in_range(a, b) && std::isfinite(f(a, b)); };
  auto diff = [&](int di, int dj) {
    const bool lo = usable(i - di, j - dj);
    const bool hi = usable(i + di, j + dj);
    if (lo && hi) return (f(i + di, j + dj) - f(i - di, j - dj)) / (2.0 * grid.h());
    if (hi) return (f(i + di, j + dj) - fc) / grid.h();
    if (lo) return (fc - f(i - di, j - dj)) / grid.h();
    return 0.0;
  };
  return {diff(1, 0), diff(0, 1)};
}

Vec2 sample_gradient(const Grid& grid, const ScalarField& f, const Vec2& p) {
  const Stencil s = bilinear_stencil(grid, p);
  return blend(s, [&](int i, int j) { return cell_gradient(grid, f, i, j); });
}

}  // namespace aerocrowd
