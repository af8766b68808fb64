#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "aerocrowd/vec2.hpp"

namespace aerocrowd {

enum class CellKind : std::uint8_t { kFluid, kWall, kInlet, kOutlet, kImmersed };

const char* to_string(CellKind kind);

/// Axis-aligned rectangle [x0, x1] x [y0, y1] in metres.
struct Rect {
  double x0 = 0.0, y0 = 0.0, x1 = 0.0, y1 = 0.0;

  bool contains(const Vec2& p) const { return p.x >= x0 && p.x <= x1 && p.y >= y0 && p.y <= y1; }
  Vec2 center() const { return {0.5 * (x0 + x1), 0.5 * (y0 + y1)}; }
  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
};

struct Segment {
  Vec2 a, b;
};

/// A wall is either a zero-thickness segment or a solid rectangle.
struct WallShape {
  enum class Type { kSegment, kRect } type = Type::kSegment;
  Segment segment;
  Rect rect;
};

/// Geometry needed to classify the background grid. Inlets and outlets are
/// numbered by their position in the respective list.
struct GridGeometry {
  double width = 0.0;
  double height = 0.0;
  double h = 0.1;
  Vec2 origin;
  std::vector<WallShape> walls;
  std::vector<Rect> doors;
  std::vector<Rect> inlets;
  std::vector<Rect> outlets;
};

/// Uniform Cartesian grid of nx x ny square cells with per-cell classification.
/// Cell (i, j) has linear index j * nx + i and center origin + ((i+.5)h, (j+.5)h).
class Grid {
 public:
  Grid(int nx, int ny, double h, Vec2 origin = {});

  int nx() const { return nx_; }
  int ny() const { return ny_; }
  int size() const { return nx_ * ny_; }
  double h() const { return h_; }
  const Vec2& origin() const { return origin_; }
  double width() const { return nx_ * h_; }
  double height() const { return ny_ * h_; }

  int index(int i, int j) const { return j * nx_ + i; }
  int col(int idx) const { return idx % nx_; }
  int row(int idx) const { return idx / nx_; }
  bool in_range(int i, int j) const { return i >= 0 && j >= 0 && i < nx_ && j < ny_; }
  bool on_boundary(int i, int j) const { return i == 0 || j == 0 || i == nx_ - 1 || j == ny_ - 1; }

  Vec2 center(int i, int j) const { return {origin_.x + (i + 0.5) * h_, origin_.y + (j + 0.5) * h_}; }
  Vec2 center(int idx) const { return center(col(idx), row(idx)); }

  /// True when p lies inside the closed domain rectangle.
  bool contains(const Vec2& p) const;
  /// Cell containing p (half-open cells; the far edges map to the last cell).
  std::optional<int> locate(const Vec2& p) const;

  CellKind kind(int idx) const { return kind_[idx]; }
  CellKind kind(int i, int j) const { return kind_[index(i, j)]; }
  /// Inlet or outlet number for such cells, -1 otherwise.
  int region(int idx) const { return region_[idx]; }
  void set_kind(int idx, CellKind kind, int region = -1);

  bool is_wall(int idx) const { return kind_[idx] == CellKind::kWall; }
  bool is_fluid(int idx) const { return kind_[idx] == CellKind::kFluid; }

  /// Immersed cells revert to fluid.
  void clear_immersed();
  int count(CellKind kind) const;

  std::span<const CellKind> kinds() const { return kind_; }

  /// Cells whose area overlaps the rectangle (positive-area overlap; a
  /// degenerate rectangle is treated as a segment).
  std::vector<int> cells_overlapping(const Rect& r) const;
  /// Cells touched by the segment under half-open cell ownership.
  std::vector<int> cells_on_segment(const Segment& s) const;
  /// Cells whose centers lie inside the closed rectangle.
  std::vector<int> cells_centered_in(const Rect& r) const;

 private:
  int nx_;
  int ny_;
  double h_;
  Vec2 origin_;
  std::vector<CellKind> kind_;
  std::vector<int> region_;
};

/// Rasterizes walls, doors, inlets and outlets; the outer ring of cells is
/// wall unless an inlet or outlet claims it. Throws ConfigError on geometry
/// outside the domain or openings narrower than 2h.
Grid build_grid(const GridGeometry& geometry);

/// Cell-centred scalar values attached to a grid's dimensions.
class ScalarField {
 public:
  ScalarField() = default;
  ScalarField(int nx, int ny, double value = 0.0) : nx_(nx), ny_(ny), data_(static_cast<size_t>(nx) * ny, value) {}
  explicit ScalarField(const Grid& g, double value = 0.0) : ScalarField(g.nx(), g.ny(), value) {}

  int nx() const { return nx_; }
  int ny() const { return ny_; }
  int size() const { return static_cast<int>(data_.size()); }

  double& operator[](int idx) { return data_[idx]; }
  double operator[](int idx) const { return data_[idx]; }
  double& operator()(int i, int j) { return data_[j * nx_ + i]; }
  double operator()(int i, int j) const { return data_[j * nx_ + i]; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  void fill(double v);

  bool matches(const Grid& g) const { return nx_ == g.nx() && ny_ == g.ny(); }

 private:
  int nx_ = 0;
  int ny_ = 0;
  std::vector<double> data_;
};

/// Cell-centred 2-vectors stored as two component fields.
struct VectorField {
  ScalarField x;
  ScalarField y;

  VectorField() = default;
  VectorField(int nx, int ny) : x(nx, ny), y(nx, ny) {}
  explicit VectorField(const Grid& g) : x(g), y(g) {}

  Vec2 at(int idx) const { return {x[idx], y[idx]}; }
  void set(int idx, const Vec2& v) {
    x[idx] = v.x;
    y[idx] = v.y;
  }
  int size() const { return x.size(); }
  bool matches(const Grid& g) const { return x.matches(g) && y.matches(g); }
};

}  // namespace aerocrowd
