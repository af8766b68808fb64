// Python module aerocrowd._core: scenario loading, the coupled run loop and
// a few closed-form helpers. Fields come back as (ny, nx) float64 arrays.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "aerocrowd/epidemiology.hpp"
#include "aerocrowd/error.hpp"
#include "aerocrowd/immersed.hpp"
#include "aerocrowd/output.hpp"
#include "aerocrowd/parallel.hpp"
#include "aerocrowd/scenario.hpp"
#include "aerocrowd/simulation.hpp"

namespace py = pybind11;
using namespace aerocrowd;

namespace {

py::array_t<double> as_array(const Grid& g, const ScalarField& f) {
  py::array_t<double> out({g.ny(), g.nx()});
  auto w = out.mutable_unchecked<2>();
  for (int j = 0; j < g.ny(); ++j) {
    for (int i = 0; i < g.nx(); ++i) w(j, i) = f[g.index(i, j)];
  }
  return out;
}

py::dict record_dict(const StepRecord& r) {
  py::dict d;
  d["step"] = r.step;
  d["t"] = r.t;
  d["dt"] = r.dt;
  d["dt_flow"] = r.dt_flow;
  d["population"] = r.population;
  d["sneezing"] = r.sneezing;
  d["new_infections"] = r.new_infections;
  d["cumulative_infections"] = r.cumulative_infections;
  d["spawned"] = r.spawned;
  d["total_pathogen"] = r.total_pathogen;
  d["max_c"] = r.max_c;
  d["max_speed"] = r.max_speed;
  d["max_divergence"] = r.max_divergence;
  d["pressure_iterations"] = r.pressure_iterations;
  return d;
}

py::dict summary_dict(const RunSummary& s) {
  py::dict d;
  d["steps"] = s.steps;
  d["t_end"] = s.t_end;
  d["total_spawned"] = s.total_spawned;
  d["cumulative_infections"] = s.cumulative_infections;
  d["sneeze_events"] = s.sneeze_events;
  d["deferred_arrivals"] = s.deferred_arrivals;
  d["warnings"] = s.warnings;
  d["max_divergence_ratio"] = s.max_divergence_ratio;
  d["wall_seconds"] = s.wall_seconds;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Coupled crowd, airflow and pathogen exposure simulator";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<SolverError>(m, "SolverError", PyExc_RuntimeError);

  py::class_<ScenarioConfig>(m, "ScenarioConfig")
      .def_readwrite("name", &ScenarioConfig::name)
      .def_readwrite("duration", &ScenarioConfig::duration)
      .def_readwrite("dt_ped", &ScenarioConfig::dt_ped)
      .def_readwrite("seed", &ScenarioConfig::seed)
      .def_readwrite("initial_temperature", &ScenarioConfig::initial_temperature)
      .def_property_readonly("entrance_count", [](const ScenarioConfig& c) { return c.entrances.size(); })
      .def("validate", [](const ScenarioConfig& c) {
        c.validate();
        check_geometry(c);
      });

  m.def("load_scenario", [](const std::filesystem::path& p) { return load_scenario(p); }, py::arg("path"));
  m.def("parse_scenario", &parse_scenario, py::arg("text"), "Parse scenario JSON text (geometry not checked).");

  py::class_<Simulation>(m, "Simulation")
      .def(py::init([](ScenarioConfig c, std::optional<std::filesystem::path> out, std::optional<std::uint64_t> seed,
                       std::optional<double> snapshot_every) {
             RunOptions o;
             if (out) o.out_dir = *out;
             o.seed = seed;
             o.snapshot_interval = snapshot_every;
             return std::make_unique<Simulation>(std::move(c), std::move(o));
           }),
           py::arg("config"), py::arg("out_dir") = py::none(), py::arg("seed") = py::none(),
           py::arg("snapshot_every") = py::none())
      .def("done", &Simulation::done)
      .def("step", [](Simulation& s) { return record_dict(s.step()); })
      .def("run", [](Simulation& s) {
        RunSummary r;
        {
          py::gil_scoped_release release;
          r = s.run();
        }
        return summary_dict(r);
      })
      .def_property_readonly("t", &Simulation::t)
      .def_property_readonly("steps", &Simulation::steps)
      .def_property_readonly("seed", &Simulation::seed)
      .def_property_readonly("records", [](const Simulation& s) {
        py::list out;
        for (const StepRecord& r : s.records()) out.append(record_dict(r));
        return out;
      })
      .def_property_readonly("events", [](const Simulation& s) {
        py::list out;
        for (const EventRecord& e : s.events()) {
          out.append(py::make_tuple(e.seq, e.t, e.kind, e.ped_id, py::make_tuple(e.x.x, e.x.y), e.detail));
        }
        return out;
      })
      .def("field", [](const Simulation& s, const std::string& name) {
        const FlowState& f = s.flow();
        const Grid& g = s.grid();
        if (name == "vx") return as_array(g, f.v.x);
        if (name == "vy") return as_array(g, f.v.y);
        if (name == "p") return as_array(g, f.p);
        if (name == "T") return as_array(g, f.T);
        if (name == "c") return as_array(g, f.c);
        if (name == "tau") return as_array(g, f.tau);
        throw py::key_error("unknown field '" + name + "' (vx, vy, p, T, c, tau)");
      }, py::arg("name"))
      .def("pedestrians", [](const Simulation& s) {
        py::list out;
        for (const Pedestrian& p : s.crowd().peds()) {
          py::dict d;
          d["id"] = p.id;
          d["x"] = p.x.x;
          d["y"] = p.x.y;
          d["vx"] = p.v.x;
          d["vy"] = p.v.y;
          d["health"] = to_string(p.health);
          d["dose"] = p.dose;
          out.append(d);
        }
        return out;
      })
      .def("doses", &Simulation::all_doses)
      .def_property_readonly("summary", [](const Simulation& s) { return summary_dict(s.summary()); });

  m.def("droplet_rest", [](double d, double v_i) {
    DropletParams p;
    p.d = d;
    p.v_i = v_i;
    const DropletRest r = droplet_rest(p);
    return py::make_tuple(r.distance, r.time);
  }, py::arg("diameter"), py::arg("v_i") = 1.0, "Distance (m) and time (s) for a droplet to come to rest.");

  m.def("infection_probability", [](double dose, const std::string& mode, double threshold, double c_dr) {
    InfectionModel im;
    if (mode == "dose_response") {
      im.mode = InfectionMode::kDoseResponse;
    } else if (mode != "deterministic_threshold") {
      throw py::value_error("mode must be 'deterministic_threshold' or 'dose_response'");
    }
    im.dose_threshold = threshold;
    im.c_dr = c_dr;
    im.validate();
    return infection_probability(dose, im);
  }, py::arg("dose"), py::arg("mode") = "dose_response", py::arg("threshold") = 1e-4, py::arg("c_dr") = 1e4);

  m.def("sneeze_profile", &sneeze_profile, py::arg("local_t"), py::arg("duration") = 1.0);
  m.def("make_report", [](const std::filesystem::path& d) { return make_report(d); }, py::arg("run_dir"));
  m.def("configure_threads", &configure_threads);
}
