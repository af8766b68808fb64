#include "aerocrowd/grid.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "aerocrowd/error.hpp"

namespace aerocrowd {

namespace {

// Coordinates within this fraction of h of a grid line are snapped onto it.
constexpr double kSnap = 1e-9;

bool clip_segment(const Segment& s, double x0, double y0, double x1, double y1, double& t0, double& t1) {
  t0 = 0.0;
  t1 = 1.0;
  const double dx = s.b.x - s.a.x;
  const double dy = s.b.y - s.a.y;
  const double p[4] = {-dx, dx, -dy, dy};
  const double q[4] = {s.a.x - x0, x1 - s.a.x, s.a.y - y0, y1 - s.a.y};
  for (int k = 0; k < 4; ++k) {
    if (p[k] == 0.0) {
      if (q[k] < 0.0) return false;
      continue;
    }
    const double r = q[k] / p[k];
    if (p[k] < 0.0) {
      t0 = std::max(t0, r);
    } else {
      t1 = std::min(t1, r);
    }
    if (t0 > t1) return false;
  }
  return true;
}

std::string rect_str(const Rect& r) {
  std::ostringstream os;
  os << "[" << r.x0 << ", " << r.y0 << ", " << r.x1 << ", " << r.y1 << "]";
  return os.str();
}

}  // namespace

const char* to_string(CellKind kind) {
  switch (kind) {
    case CellKind::kFluid:
      return "fluid";
    case CellKind::kWall:
      return "wall";
    case CellKind::kInlet:
      return "inlet";
    case CellKind::kOutlet:
      return "outlet";
    case CellKind::kImmersed:
      return "immersed";
  }
  return "unknown";
}

Grid::Grid(int nx, int ny, double h, Vec2 origin)
    : nx_(nx), ny_(ny), h_(h), origin_(origin), kind_(static_cast<size_t>(nx) * ny, CellKind::kFluid),
      region_(static_cast<size_t>(nx) * ny, -1) {
  if (!(h > 0.0)) throw ConfigError("grid: cell size h must be positive");
  if (nx < 4 || ny < 4) throw ConfigError("grid: at least 4x4 cells required");
}

bool Grid::contains(const Vec2& p) const {
  const double eps = kSnap * h_;
  return p.x >= origin_.x - eps && p.y >= origin_.y - eps && p.x <= origin_.x + width() + eps &&
         p.y <= origin_.y + height() + eps;
}

std::optional<int> Grid::locate(const Vec2& p) const {
  if (!contains(p)) return std::nullopt;
  const double eps = kSnap;
  int i = static_cast<int>(std::floor((p.x - origin_.x) / h_ + eps));
  int j = static_cast<int>(std::floor((p.y - origin_.y) / h_ + eps));
  i = std::clamp(i, 0, nx_ - 1);
  j = std::clamp(j, 0, ny_ - 1);
  return index(i, j);
}

void Grid::set_kind(int idx, CellKind kind, int region) {
  kind_[idx] = kind;
  region_[idx] = region;
}

void Grid::clear_immersed() {
  for (auto& k : kind_) {
    if (k == CellKind::kImmersed) k = CellKind::kFluid;
  }
}

int Grid::count(CellKind kind) const { return static_cast<int>(std::count(kind_.begin(), kind_.end(), kind)); }

std::vector<int> Grid::cells_on_segment(const Segment& s) const {
  std::vector<int> out;
  const double eps = kSnap * h_;
  const double lo_x = std::min(s.a.x, s.b.x), hi_x = std::max(s.a.x, s.b.x);
  const double lo_y = std::min(s.a.y, s.b.y), hi_y = std::max(s.a.y, s.b.y);
  const int i0 = std::max(0, static_cast<int>(std::floor((lo_x - origin_.x) / h_)) - 1);
  const int i1 = std::min(nx_ - 1, static_cast<int>(std::floor((hi_x - origin_.x) / h_)) + 1);
  const int j0 = std::max(0, static_cast<int>(std::floor((lo_y - origin_.y) / h_)) - 1);
  const int j1 = std::min(ny_ - 1, static_cast<int>(std::floor((hi_y - origin_.y) / h_)) + 1);
  for (int j = j0; j <= j1; ++j) {
    for (int i = i0; i <= i1; ++i) {
      const double cx0 = origin_.x + i * h_, cx1 = cx0 + h_;
      const double cy0 = origin_.y + j * h_, cy1 = cy0 + h_;
      double t0 = 0.0, t1 = 0.0;
      if (!clip_segment(s, cx0 - eps, cy0 - eps, cx1 + eps, cy1 + eps, t0, t1)) continue;
      const double tm = 0.5 * (t0 + t1);
      const Vec2 m = s.a + (s.b - s.a) * tm;
      // Half-open ownership; the far domain edges belong to the last cells.
      const bool in_x = m.x >= cx0 - eps && (m.x < cx1 - eps || (i == nx_ - 1 && m.x <= cx1 + eps));
      const bool in_y = m.y >= cy0 - eps && (m.y < cy1 - eps || (j == ny_ - 1 && m.y <= cy1 + eps));
      if (in_x && in_y) out.push_back(index(i, j));
    }
  }
  return out;
}

std::vector<int> Grid::cells_overlapping(const Rect& r) const {
  const double eps = kSnap * h_;
  const bool flat_x = r.x1 - r.x0 <= eps;
  const bool flat_y = r.y1 - r.y0 <= eps;
  if (flat_x || flat_y) {
    if (flat_x && flat_y) {
      auto c = locate({r.x0, r.y0});
      return c ? std::vector<int>{*c} : std::vector<int>{};
    }
    return cells_on_segment({{r.x0, r.y0}, {r.x1, r.y1}});
  }
  std::vector<int> out;
  for (int j = 0; j < ny_; ++j) {
    const double cy0 = origin_.y + j * h_, cy1 = cy0 + h_;
    if (!(r.y0 < cy1 - eps && r.y1 > cy0 + eps)) continue;
    for (int i = 0; i < nx_; ++i) {
      const double cx0 = origin_.x + i * h_, cx1 = cx0 + h_;
      if (r.x0 < cx1 - eps && r.x1 > cx0 + eps) out.push_back(index(i, j));
    }
  }
  return out;
}

std::vector<int> Grid::cells_centered_in(const Rect& r) const {
  std::vector<int> out;
  for (int idx = 0; idx < size(); ++idx) {
    if (r.contains(center(idx))) out.push_back(idx);
  }
  return out;
}

Grid build_grid(const GridGeometry& g) {
  if (!(g.h > 0.0)) throw ConfigError("domain.h: must be positive");
  if (!(g.width > 0.0) || !(g.height > 0.0)) throw ConfigError("domain: width and height must be positive");
  const int nx = static_cast<int>(std::lround(g.width / g.h));
  const int ny = static_cast<int>(std::lround(g.height / g.h));
  if (nx < 4 || ny < 4) throw ConfigError("domain: resolution too coarse, need at least 4x4 cells");

  Grid grid(nx, ny, g.h, g.origin);
  const Rect domain{g.origin.x, g.origin.y, g.origin.x + grid.width(), g.origin.y + grid.height()};
  const double tol = 1e-9 * g.h;
  auto inside = [&](const Vec2& p) {
    return p.x >= domain.x0 - tol && p.x <= domain.x1 + tol && p.y >= domain.y0 - tol && p.y <= domain.y1 + tol;
  };
  auto check_rect = [&](const Rect& r, const std::string& what) {
    if (r.x1 < r.x0 || r.y1 < r.y0) throw ConfigError(what + ": rectangle " + rect_str(r) + " has negative extent");
    if (!inside({r.x0, r.y0}) || !inside({r.x1, r.y1}))
      throw ConfigError(what + ": rectangle " + rect_str(r) + " lies outside the domain");
  };
  auto check_opening = [&](const Rect& r, const std::string& what) {
    check_rect(r, what);
    if (std::max(r.width(), r.height()) < 2.0 * g.h - tol) {
      std::ostringstream os;
      os << what << ": opening under-resolved (" << std::max(r.width(), r.height()) << " m < 2h = " << 2.0 * g.h
         << " m)";
      throw ConfigError(os.str());
    }
  };

  for (size_t w = 0; w < g.walls.size(); ++w) {
    const auto& wall = g.walls[w];
    const std::string what = "walls[" + std::to_string(w) + "]";
    if (wall.type == WallShape::Type::kSegment) {
      if (!inside(wall.segment.a) || !inside(wall.segment.b)) throw ConfigError(what + ": segment lies outside the domain");
    } else {
      check_rect(wall.rect, what);
    }
  }
  for (size_t k = 0; k < g.doors.size(); ++k) check_opening(g.doors[k], "doors[" + std::to_string(k) + "]");
  for (size_t k = 0; k < g.inlets.size(); ++k) check_opening(g.inlets[k], "inlets[" + std::to_string(k) + "]");
  for (size_t k = 0; k < g.outlets.size(); ++k) check_opening(g.outlets[k], "outlets[" + std::to_string(k) + "]");

  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      if (grid.on_boundary(i, j)) grid.set_kind(grid.index(i, j), CellKind::kWall);
    }
  }
  for (const auto& wall : g.walls) {
    const auto cells = wall.type == WallShape::Type::kSegment ? grid.cells_on_segment(wall.segment)
                                                              : grid.cells_overlapping(wall.rect);
    for (int c : cells) grid.set_kind(c, CellKind::kWall);
  }
  for (const auto& door : g.doors) {
    for (int c : grid.cells_overlapping(door)) {
      if (!grid.on_boundary(grid.col(c), grid.row(c))) grid.set_kind(c, CellKind::kFluid);
    }
  }
  for (size_t k = 0; k < g.inlets.size(); ++k) {
    for (int c : grid.cells_overlapping(g.inlets[k])) grid.set_kind(c, CellKind::kInlet, static_cast<int>(k));
  }
  for (size_t k = 0; k < g.outlets.size(); ++k) {
    for (int c : grid.cells_overlapping(g.outlets[k])) grid.set_kind(c, CellKind::kOutlet, static_cast<int>(k));
  }
  return grid;
}

void ScalarField::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

}  // namespace aerocrowd
