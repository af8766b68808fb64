#pragma once

#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "aerocrowd/epidemiology.hpp"
#include "aerocrowd/flow.hpp"
#include "aerocrowd/grid.hpp"
#include "aerocrowd/pedestrians.hpp"

namespace aerocrowd {

/// Shortest "%.9g" rendering; output files use it for every real number.
std::string fmt9(double x);

/// Legacy VTK structured points, ASCII. Point data in the order v, p, T, c,
/// tau; wall cells are written as stored (zero velocity).
void write_vtk(const std::filesystem::path& path, const Grid& grid, const FlowState& state,
               const std::string& title = "aerocrowd");

/// Header id,t,x,y,vx,vy,health,dose and one row per pedestrian.
void write_pedestrians_csv(const std::filesystem::path& path, std::span<const Pedestrian> peds, double t);

/// Header bin,lower,upper,count,cumulative_at_least; the last bin's upper
/// edge is "inf".
void write_histogram_csv(const std::filesystem::path& path, const DoseHistogram& bins,
                         std::span<const double> doses);

/// Appending CSV file that flushes each row, so a crashed run leaves whole rows.
class CsvFile {
 public:
  CsvFile() = default;
  CsvFile(const std::filesystem::path& path, const std::vector<std::string>& header);
  bool is_open() const { return out_.is_open(); }
  void row(const std::vector<std::string>& cells);

 private:
  std::ofstream out_;
};

/// Minimal CSV table reader for files this program writes (no quoting).
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const;
};
CsvTable read_csv(const std::filesystem::path& path);

/// Writes report/sneezing.csv, report/infections.csv and
/// report/viral_load.csv from a run directory. Returns the files written.
std::vector<std::filesystem::path> make_report(const std::filesystem::path& run_dir);

}  // namespace aerocrowd
