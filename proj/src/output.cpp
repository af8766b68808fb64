#include "aerocrowd/output.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "aerocrowd/error.hpp"

namespace aerocrowd {

namespace fs = std::filesystem;

std::string fmt9(double x) {
  if (x == 0.0) return "0";  // folds -0
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", x);
  return buf;
}

namespace {

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw SolverError("cannot write " + path.string());
  return out;
}

void check(const std::ofstream& out, const fs::path& path) {
  if (!out) throw SolverError("write failed: " + path.string());
}

}  // namespace

void write_vtk(const fs::path& path, const Grid& grid, const FlowState& state, const std::string& title) {
  std::ofstream out = open_out(path);
  const int n = grid.size();
  out << "# vtk DataFile Version 3.0\n" << title << "\nASCII\nDATASET STRUCTURED_POINTS\n";
  out << "DIMENSIONS " << grid.nx() << ' ' << grid.ny() << " 1\n";
  out << "ORIGIN " << fmt9(grid.origin().x + 0.5 * grid.h()) << ' ' << fmt9(grid.origin().y + 0.5 * grid.h())
      << " 0\n";
  out << "SPACING " << fmt9(grid.h()) << ' ' << fmt9(grid.h()) << ' ' << fmt9(grid.h()) << '\n';
  out << "POINT_DATA " << n << '\n';
  out << "VECTORS v double\n";
  for (int idx = 0; idx < n; ++idx) out << fmt9(state.v.x[idx]) << ' ' << fmt9(state.v.y[idx]) << " 0\n";
  auto scalar = [&](const char* name, const ScalarField& f) {
    out << "SCALARS " << name << " double 1\nLOOKUP_TABLE default\n";
    for (int idx = 0; idx < n; ++idx) out << fmt9(f[idx]) << '\n';
  };
  scalar("p", state.p);
  scalar("T", state.T);
  scalar("c", state.c);
  scalar("tau", state.tau);
  check(out, path);
}

void write_pedestrians_csv(const fs::path& path, std::span<const Pedestrian> peds, double t) {
  std::ofstream out = open_out(path);
  out << "id,t,x,y,vx,vy,health,dose\n";
  for (const Pedestrian& p : peds) {
    out << p.id << ',' << fmt9(t) << ',' << fmt9(p.x.x) << ',' << fmt9(p.x.y) << ',' << fmt9(p.v.x) << ','
        << fmt9(p.v.y) << ',' << to_string(p.health) << ',' << fmt9(p.dose) << '\n';
  }
  check(out, path);
}

void write_histogram_csv(const fs::path& path, const DoseHistogram& bins, std::span<const double> doses) {
  const std::vector<int> counts = bins.counts(doses);
  const std::vector<int> cum = bins.cumulative_at_least(counts);
  std::ofstream out = open_out(path);
  out << "bin,lower,upper,count,cumulative_at_least\n";
  for (int b = 0; b < bins.bin_count(); ++b) {
    const std::string upper = b + 1 < bins.bin_count() ? fmt9(bins.lower_edge(b + 1)) : "inf";
    out << b << ',' << fmt9(bins.lower_edge(b)) << ',' << upper << ',' << counts[b] << ',' << cum[b] << '\n';
  }
  check(out, path);
}

CsvFile::CsvFile(const fs::path& path, const std::vector<std::string>& header) : out_(open_out(path)) {
  row(header);
}

void CsvFile::row(const std::vector<std::string>& cells) {
  for (size_t k = 0; k < cells.size(); ++k) {
    if (k) out_ << ',';
    out_ << cells[k];
  }
  out_ << '\n';
  out_.flush();
  if (!out_) throw SolverError("CSV write failed");
}

int CsvTable::column(const std::string& name) const {
  for (size_t k = 0; k < header.size(); ++k) {
    if (header[k] == name) return static_cast<int>(k);
  }
  throw ConfigError("missing column '" + name + "'");
}

CsvTable read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path.string());
  CsvTable t;
  std::string line;
  auto split = [](const std::string& s) {
    std::vector<std::string> cells;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    return cells;
  };
  if (!std::getline(in, line)) throw ConfigError(path.string() + ": empty file");
  t.header = split(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split(line);
    if (cells.size() != t.header.size()) throw ConfigError(path.string() + ": ragged row");
    t.rows.push_back(std::move(cells));
  }
  return t;
}

std::vector<fs::path> make_report(const fs::path& run_dir) {
  const CsvTable run = read_csv(run_dir / "run.csv");
  const CsvTable hist = read_csv(run_dir / "histogram.csv");
  const fs::path dir = run_dir / "report";
  std::vector<fs::path> written;

  const int ct = run.column("t");
  const int cs = run.column("sneezing");
  const int cn = run.column("new_infections");
  const int cc = run.column("cumulative_infections");
  const int cp = run.column("population");
  {
    CsvFile f(dir / "sneezing.csv", {"t", "sneezing", "population"});
    for (const auto& r : run.rows) f.row({r[ct], r[cs], r[cp]});
    written.push_back(dir / "sneezing.csv");
  }
  {
    CsvFile f(dir / "infections.csv", {"t", "new_infections", "cumulative_infections"});
    for (const auto& r : run.rows) f.row({r[ct], r[cn], r[cc]});
    written.push_back(dir / "infections.csv");
  }
  {
    const int lo = hist.column("lower");
    const int hi = hist.column("upper");
    const int n = hist.column("count");
    const int cum = hist.column("cumulative_at_least");
    CsvFile f(dir / "viral_load.csv", {"dose_lower", "dose_upper", "pedestrians", "pedestrians_at_least"});
    for (const auto& r : hist.rows) f.row({r[lo], r[hi], r[n], r[cum]});
    written.push_back(dir / "viral_load.csv");
  }
  return written;
}

}  // namespace aerocrowd
