// aerocrowd command-line front end.
//
// Exit codes: 0 success, 1 invalid input (ConfigError), 2 runtime failure.

#include <cstdio>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "aerocrowd/epidemiology.hpp"
#include "aerocrowd/error.hpp"
#include "aerocrowd/output.hpp"
#include "aerocrowd/parallel.hpp"
#include "aerocrowd/scenario.hpp"
#include "aerocrowd/simulation.hpp"

namespace ac = aerocrowd;

namespace {

int cmd_run(const std::string& path, const std::optional<std::uint64_t>& seed, const std::string& out,
            const std::optional<double>& snapshot_every) {
  ac::RunOptions opts;
  opts.out_dir = out;
  opts.seed = seed;
  opts.snapshot_interval = snapshot_every;
  ac::Simulation sim(ac::load_scenario(path), opts);
  const ac::RunSummary s = sim.run();
  std::printf("%s: %lld steps to t = %s s, seed %llu\n", sim.config().name.c_str(), s.steps,
              ac::fmt9(s.t_end).c_str(), static_cast<unsigned long long>(sim.seed()));
  std::printf("spawned %d, sneezes %d, infections %d, deferred arrivals %d, warnings %d\n", s.total_spawned,
              s.sneeze_events, s.cumulative_infections, s.deferred_arrivals, s.warnings);
  std::printf("outputs in %s (%.1f s wall)\n", out.c_str(), s.wall_seconds);
  return 0;
}

int cmd_droplets(const std::vector<double>& diameters) {
  std::printf("diameter_m,distance_m,time_s\n");
  for (double d : diameters) {
    ac::DropletParams p;
    p.d = d;
    const ac::DropletRest r = ac::droplet_rest(p);
    std::printf("%s,%s,%s\n", ac::fmt9(d).c_str(), ac::fmt9(r.distance).c_str(), ac::fmt9(r.time).c_str());
  }
  return 0;
}

int cmd_validate(const std::string& path) {
  const ac::ScenarioConfig c = ac::load_scenario(path);
  const ac::Grid grid = ac::build_grid(c.geometry);
  std::printf("%s: ok (%d x %d cells, %zu entrances, %zu exit groups, %s s)\n", c.name.c_str(), grid.nx(), grid.ny(),
              c.entrances.size(), c.exit_groups.size(), ac::fmt9(c.duration).c_str());
  return 0;
}

int cmd_report(const std::string& dir) {
  for (const auto& f : ac::make_report(dir)) std::printf("%s\n", f.string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Coupled crowd, airflow and pathogen exposure simulator"};
  app.require_subcommand(1);

  std::string scenario, out = "out", rundir;
  std::optional<std::uint64_t> seed;
  std::optional<double> snapshot_every;
  std::vector<double> diameters{1e-4, 1e-5, 1e-6};

  CLI::App* run = app.add_subcommand("run", "Run a scenario and write its outputs");
  run->add_option("scenario", scenario, "Scenario JSON file")->required();
  run->add_option("--seed", seed, "Override the scenario seed");
  run->add_option("--out", out, "Output directory")->capture_default_str();
  run->add_option("--snapshot-every", snapshot_every, "Seconds between field snapshots (0 disables)");

  CLI::App* droplets = app.add_subcommand("droplet-table", "Distance and time for droplets to come to rest");
  droplets->add_option("--diameters", diameters, "Comma-separated diameters in m")->delimiter(',');

  CLI::App* validate = app.add_subcommand("validate", "Check a scenario file without running it");
  validate->add_option("scenario", scenario, "Scenario JSON file")->required();

  CLI::App* report = app.add_subcommand("report", "Write plot-ready CSV series for a finished run");
  report->add_option("rundir", rundir, "Run output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    ac::configure_threads();
    if (*run) return cmd_run(scenario, seed, out, snapshot_every);
    if (*droplets) return cmd_droplets(diameters);
    if (*validate) return cmd_validate(scenario);
    if (*report) return cmd_report(rundir);
  } catch (const ac::ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "runtime error: %s\n", e.what());
    return 2;
  }
  return 1;
}
