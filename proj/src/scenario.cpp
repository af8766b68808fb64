#include "aerocrowd/scenario.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

#include "aerocrowd/error.hpp"
#include "aerocrowd/fast_marching.hpp"

namespace aerocrowd {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& what) { throw ConfigError(path + ": " + what); }

double number(const json& j, const std::string& path) {
  if (!j.is_number()) fail(path, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) fail(path, "must be finite");
  return v;
}

int integer(const json& j, const std::string& path) {
  if (!j.is_number_integer()) fail(path, "expected an integer");
  return j.get<int>();
}

bool boolean(const json& j, const std::string& path) {
  if (!j.is_boolean()) fail(path, "expected true or false");
  return j.get<bool>();
}

std::string string(const json& j, const std::string& path) {
  if (!j.is_string()) fail(path, "expected a string");
  return j.get<std::string>();
}

std::vector<double> numbers(const json& j, const std::string& path, size_t n) {
  if (!j.is_array() || j.size() != n) fail(path, "expected an array of " + std::to_string(n) + " numbers");
  std::vector<double> out;
  for (size_t k = 0; k < n; ++k) out.push_back(number(j[k], path + "[" + std::to_string(k) + "]"));
  return out;
}

Vec2 vec2(const json& j, const std::string& path) {
  const auto v = numbers(j, path, 2);
  return {v[0], v[1]};
}

Rect rect(const json& j, const std::string& path) {
  const auto v = numbers(j, path, 4);
  if (!(v[2] > v[0] && v[3] > v[1])) fail(path, "rectangle needs x1 > x0 and y1 > y0");
  return {v[0], v[1], v[2], v[3]};
}

// Object reader that rejects keys nobody asked for.
class Obj {
 public:
  Obj(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_, "expected an object");
  }
  Obj(const Obj&) = delete;
  Obj& operator=(const Obj&) = delete;

  std::string at(const std::string& key) const { return path_ + "." + key; }

  const json* find(const std::string& key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }
  const json& require(const std::string& key) {
    const json* v = find(key);
    if (!v) fail(at(key), "required key missing");
    return *v;
  }

  void num(const std::string& key, double& out) {
    if (const json* v = find(key)) out = number(*v, at(key));
  }
  void integer(const std::string& key, int& out) {
    if (const json* v = find(key)) out = aerocrowd::integer(*v, at(key));
  }
  void flag(const std::string& key, bool& out) {
    if (const json* v = find(key)) out = boolean(*v, at(key));
  }
  void vec(const std::string& key, Vec2& out) {
    if (const json* v = find(key)) out = vec2(*v, at(key));
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) fail(at(it.key()), "unknown key");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <class Fn>
void each(const json* arr, const std::string& path, Fn&& fn) {
  if (!arr) return;
  if (!arr->is_array()) fail(path, "expected an array");
  for (size_t k = 0; k < arr->size(); ++k) fn((*arr)[k], path + "[" + std::to_string(k) + "]");
}

std::array<double, 3> fractions(const json& j, const std::string& path) {
  const auto v = numbers(j, path, 3);
  return {v[0], v[1], v[2]};
}

std::vector<Waypoint> route(const json* arr, const std::string& path) {
  std::vector<Waypoint> out;
  each(arr, path, [&](const json& j, const std::string& p) {
    Obj o(j, p);
    Waypoint w;
    w.position = vec2(o.require("position"), o.at("position"));
    o.num("radius", w.radius);
    if (const json* l = o.find("loiter")) {
      const auto v = numbers(*l, o.at("loiter"), 2);
      w.loiter_min = v[0];
      w.loiter_max = v[1];
    }
    o.finish();
    if (!(w.radius > 0.0)) fail(o.at("radius"), "must be positive");
    if (!(w.loiter_min >= 0.0 && w.loiter_max >= w.loiter_min)) fail(o.at("loiter"), "need 0 <= min <= max");
    out.push_back(w);
  });
  return out;
}

std::string format_sum(double s) {
  std::ostringstream os;
  os.precision(12);
  os << s;
  return os.str();
}

void check_fractions(const std::array<double, 3>& f, const std::string& path) {
  for (double x : f) {
    if (x < 0.0) fail(path, "health fractions must be non-negative");
  }
  const double sum = f[0] + f[1] + f[2];
  if (std::abs(sum - 1.0) > 1e-9) fail(path, "health fractions sum " + format_sum(sum));
}

void parse_domain(Obj& root, ScenarioConfig& c) {
  Obj d(root.require("domain"), root.at("domain"));
  c.geometry.width = number(d.require("width"), d.at("width"));
  c.geometry.height = number(d.require("height"), d.at("height"));
  c.geometry.h = number(d.require("h"), d.at("h"));
  d.vec("origin", c.geometry.origin);
  d.finish();

  each(root.find("walls"), root.at("walls"), [&](const json& j, const std::string& p) {
    Obj w(j, p);
    WallShape s;
    const json* r = w.find("rect");
    const json* seg = w.find("segment");
    if ((r != nullptr) == (seg != nullptr)) fail(p, "a wall needs exactly one of rect or segment");
    if (r) {
      s.type = WallShape::Type::kRect;
      s.rect = rect(*r, w.at("rect"));
    } else {
      if (!seg->is_array() || seg->size() != 2) fail(w.at("segment"), "expected two points");
      s.type = WallShape::Type::kSegment;
      s.segment = {vec2((*seg)[0], w.at("segment") + "[0]"), vec2((*seg)[1], w.at("segment") + "[1]")};
    }
    w.finish();
    c.geometry.walls.push_back(s);
  });
  each(root.find("doors"), root.at("doors"),
       [&](const json& j, const std::string& p) { c.geometry.doors.push_back(rect(j, p)); });
  each(root.find("inlets"), root.at("inlets"), [&](const json& j, const std::string& p) {
    Obj o(j, p);
    c.geometry.inlets.push_back(rect(o.require("region"), o.at("region")));
    InletCondition in;
    in.velocity = vec2(o.require("velocity"), o.at("velocity"));
    o.num("temperature", in.temperature);
    o.finish();
    c.inlet_conditions.push_back(in);
  });
  each(root.find("outlets"), root.at("outlets"), [&](const json& j, const std::string& p) {
    Obj o(j, p);
    c.geometry.outlets.push_back(rect(o.require("region"), o.at("region")));
    o.finish();
  });
  each(root.find("heat_sources"), root.at("heat_sources"), [&](const json& j, const std::string& p) {
    Obj o(j, p);
    HeatSource h;
    h.region = rect(o.require("region"), o.at("region"));
    h.q = number(o.require("q"), o.at("q"));
    o.finish();
    c.heat_sources.push_back(h);
  });
  if (const json* r = root.find("reference_point")) c.reference_point = vec2(*r, root.at("reference_point"));
  root.num("initial_temperature", c.initial_temperature);
}

void parse_crowd(Obj& root, ScenarioConfig& c) {
  each(root.find("exits"), root.at("exits"), [&](const json& j, const std::string& p) {
    Obj o(j, p);
    std::vector<Rect> regions;
    each(&o.require("regions"), o.at("regions"),
         [&](const json& r, const std::string& rp) { regions.push_back(rect(r, rp)); });
    o.finish();
    if (regions.empty()) fail(o.at("regions"), "an exit group needs at least one region");
    c.exit_groups.push_back(std::move(regions));
  });
  each(root.find("entrances"), root.at("entrances"), [&](const json& j, const std::string& p) {
    Obj o(j, p);
    Entrance e;
    e.region = rect(o.require("region"), o.at("region"));
    e.flux = number(o.require("flux"), o.at("flux"));
    if (const json* a = o.find("arrivals")) {
      const std::string kind = string(*a, o.at("arrivals"));
      if (kind == "poisson") {
        e.poisson = true;
      } else if (kind != "uniform") {
        fail(o.at("arrivals"), "expected \"uniform\" or \"poisson\"");
      }
    }
    if (const json* f = o.find("health_fractions")) e.health_fractions = fractions(*f, o.at("health_fractions"));
    o.integer("exit_group", e.exit_group);
    e.route = route(o.find("route"), o.at("route"));
    o.finish();
    c.entrances.push_back(std::move(e));
  });
  each(root.find("initial_population"), root.at("initial_population"), [&](const json& j, const std::string& p) {
    Obj o(j, p);
    InitialGroup g;
    g.count = aerocrowd::integer(o.require("count"), o.at("count"));
    g.region = rect(o.require("region"), o.at("region"));
    if (const json* f = o.find("health_fractions")) g.health_fractions = fractions(*f, o.at("health_fractions"));
    o.integer("exit_group", g.exit_group);
    g.route = route(o.find("route"), o.at("route"));
    o.finish();
    c.initial_population.push_back(std::move(g));
  });
  if (const json* j = root.find("crowd")) {
    Obj o(*j, root.at("crowd"));
    CrowdParams& p = c.crowd;
    o.num("perception_range", p.perception_range);
    o.num("perception_cone", p.perception_cone);
    o.num("lookahead", p.lookahead);
    o.num("avoid_ratio", p.avoid_ratio);
    o.num("wall_ratio", p.wall_ratio);
    o.num("contact_ratio", p.contact_ratio);
    o.num("contact_cutoff", p.contact_cutoff);
    o.num("far_range", p.far_range);
    o.flag("right_bias", p.right_bias);
    o.num("stride_frequency", p.stride_frequency);
    o.num("max_speed_factor", p.max_speed_factor);
    o.num("orientation_speed", p.orientation_speed);
    o.num("force_scale", p.force_scale);
    o.finish();
  }
  if (const json* j = root.find("traits")) {
    Obj o(*j, root.at("traits"));
    TraitParams& t = c.traits;
    o.num("radius", t.radius);
    o.num("desired_speed", t.desired_speed);
    o.num("relaxation_time", t.relaxation_time);
    if (const json* pj = o.find("pushiness")) {
      const auto v = numbers(*pj, o.at("pushiness"), 2);
      t.pushiness_min = v[0];
      t.pushiness_max = v[1];
    }
    o.num("comfort_zone", t.comfort_zone);
    o.num("breathing_rate", t.breathing_rate);
    o.finish();
  }
}

void parse_physics(Obj& root, ScenarioConfig& c) {
  if (const json* j = root.find("fluid")) {
    Obj o(*j, root.at("fluid"));
    FluidProps& f = c.fluid;
    o.num("rho", f.rho);
    o.num("mu", f.mu);
    o.num("beta", f.beta);
    o.num("cp", f.cp);
    o.num("k", f.k);
    o.num("k_c", f.k_c);
    o.vec("gravity", f.g);
    o.num("T0", f.T0);
    o.finish();
  }
  if (const json* j = root.find("scheme")) {
    Obj o(*j, root.at("scheme"));
    SchemeParams& s = c.scheme;
    o.num("theta", s.theta);
    o.integer("stages", s.k_stages);
    o.num("cfl", s.cfl);
    o.num("poisson_tol", s.poisson_tol);
    o.integer("poisson_max_iter", s.poisson_max_iter);
    o.num("v_floor", s.v_floor);
    o.finish();
  }
  if (const json* j = root.find("infection")) {
    Obj o(*j, root.at("infection"));
    if (const json* m = o.find("mode")) {
      const std::string mode = string(*m, o.at("mode"));
      if (mode == "deterministic_threshold") {
        c.infection.mode = InfectionMode::kDeterministicThreshold;
      } else if (mode == "dose_response") {
        c.infection.mode = InfectionMode::kDoseResponse;
      } else {
        fail(o.at("mode"), "expected \"deterministic_threshold\" or \"dose_response\"");
      }
    }
    o.num("dose_threshold", c.infection.dose_threshold);
    o.num("c_dr", c.infection.c_dr);
    o.finish();
  }
  if (const json* j = root.find("exhalation")) {
    Obj o(*j, root.at("exhalation"));
    ExhalationSchedule& e = c.exhalation;
    o.num("mean_interval", e.mean_interval);
    o.num("jitter", e.jitter);
    o.num("duration", e.duration);
    o.num("v_max", e.v_max);
    o.num("temperature", e.exhaled_temperature);
    o.num("c_max", e.c_max);
    o.num("mouth_radius", e.mouth_radius);
    o.finish();
  }
}

void parse_run(Obj& root, ScenarioConfig& c) {
  root.num("duration", c.duration);
  root.num("dt_ped", c.dt_ped);
  if (const json* s = root.find("seed")) {
    if (!s->is_number_unsigned() && !(s->is_number_integer() && s->get<long long>() >= 0)) {
      fail(root.at("seed"), "expected a non-negative integer");
    }
    c.seed = s->get<std::uint64_t>();
  }
  if (const json* j = root.find("output")) {
    Obj o(*j, root.at("output"));
    o.num("row_interval", c.output.row_interval);
    o.num("snapshot_interval", c.output.snapshot_interval);
    if (const json* h = o.find("histogram")) {
      Obj hb(*h, o.at("histogram"));
      hb.integer("min_exp", c.output.histogram.min_exp);
      hb.integer("max_exp", c.output.histogram.max_exp);
      hb.integer("bins_per_decade", c.output.histogram.bins_per_decade);
      hb.finish();
    }
    o.finish();
  }
}

std::string idx(const char* list, size_t k) { return std::string("$.") + list + "[" + std::to_string(k) + "]"; }

// Prefixes a module's own validation message with the scenario section.
template <class Fn>
void scoped(const std::string& path, Fn&& fn) {
  try {
    fn();
  } catch (const ConfigError& e) {
    fail(path, e.what());
  }
}

}  // namespace

void ScenarioConfig::validate() const {
  if (!(duration > 0.0)) fail("$.duration", "must be positive");
  if (!(dt_ped > 0.0 && dt_ped <= 0.05)) fail("$.dt_ped", "must lie in (0, 0.05]");
  scoped("$.fluid", [&] { fluid.validate(); });
  scoped("$.scheme", [&] { scheme.validate(); });
  scoped("$.crowd", [&] { crowd.validate(); });
  scoped("$.infection", [&] { infection.validate(); });
  scoped("$.exhalation", [&] { exhalation.validate(); });
  if (!(traits.radius > 0.0)) fail("$.traits.radius", "must be positive");
  if (!(traits.desired_speed > 0.0)) fail("$.traits.desired_speed", "must be positive");
  if (!(traits.relaxation_time > 0.0)) fail("$.traits.relaxation_time", "must be positive");
  if (!(traits.pushiness_min >= 0.0 && traits.pushiness_max >= traits.pushiness_min && traits.pushiness_max <= 1.0)) {
    fail("$.traits.pushiness", "need 0 <= min <= max <= 1");
  }
  if (!(traits.breathing_rate >= 0.0)) fail("$.traits.breathing_rate", "must be non-negative");
  if (!(traits.comfort_zone >= 0.0)) fail("$.traits.comfort_zone", "must be non-negative");
  const int groups = static_cast<int>(exit_groups.size());
  for (size_t k = 0; k < entrances.size(); ++k) {
    const Entrance& e = entrances[k];
    if (!(e.flux >= 0.0)) fail(idx("entrances", k) + ".flux", "must be non-negative");
    check_fractions(e.health_fractions, idx("entrances", k) + ".health_fractions");
    if (e.exit_group < 0 || e.exit_group >= groups) fail(idx("entrances", k) + ".exit_group", "no such exit group");
  }
  for (size_t k = 0; k < initial_population.size(); ++k) {
    const InitialGroup& g = initial_population[k];
    if (g.count < 0) fail(idx("initial_population", k) + ".count", "must be non-negative");
    check_fractions(g.health_fractions, idx("initial_population", k) + ".health_fractions");
    if (g.count > 0 && (g.exit_group < 0 || g.exit_group >= groups)) {
      fail(idx("initial_population", k) + ".exit_group", "no such exit group");
    }
  }
  for (const HeatSource& h : heat_sources) {
    if (!std::isfinite(h.q)) fail("$.heat_sources", "q must be finite");
  }
  if (output.row_interval < 0.0) fail("$.output.row_interval", "must be non-negative");
  if (output.snapshot_interval < 0.0) fail("$.output.snapshot_interval", "must be non-negative");
  const DoseHistogram& hb = output.histogram;
  if (!(hb.max_exp > hb.min_exp && hb.bins_per_decade > 0)) {
    fail("$.output.histogram", "need max_exp > min_exp and bins_per_decade > 0");
  }
}

ScenarioConfig parse_scenario(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("parse error: ") + e.what());
  }
  ScenarioConfig c;
  Obj root(doc, "$");
  if (const json* n = root.find("name")) c.name = string(*n, root.at("name"));
  parse_domain(root, c);
  parse_crowd(root, c);
  parse_physics(root, c);
  parse_run(root, c);
  root.finish();
  c.validate();
  return c;
}

ScenarioConfig load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scenario file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  ScenarioConfig c = parse_scenario(ss.str());
  check_geometry(c);
  return c;
}

void check_geometry(const ScenarioConfig& config) {
  const Grid grid = build_grid(config.geometry);
  if (config.reference_point) {
    const auto cell = grid.locate(*config.reference_point);
    if (!cell || !grid.is_fluid(*cell)) fail("$.reference_point", "must lie in a fluid cell");
  } else if (grid.count(CellKind::kOutlet) == 0) {
    fail("$.outlets", "no outlet and no reference_point: pressure level undetermined");
  }
  const bool walkers = !config.entrances.empty() || !config.initial_population.empty();
  if (!walkers) return;
  if (config.exit_groups.empty()) fail("$.exits", "pedestrians need at least one exit group");
  CrowdEnvironment env;
  scoped("$.exits", [&] { env = CrowdEnvironment::build(grid, config.exit_groups, config.traits.desired_speed); });

  auto reachable = [&](const Rect& region, int group) {
    for (int c : grid.cells_overlapping(region)) {
      if (!grid.is_wall(c) && std::isfinite(env.exits[group].tau_e[c])) return true;
    }
    return false;
  };
  auto check_route = [&](const std::vector<Waypoint>& r, const std::string& path) {
    for (size_t k = 0; k < r.size(); ++k) {
      const auto cell = grid.locate(r[k].position);
      if (!cell || grid.is_wall(*cell)) fail(path + "[" + std::to_string(k) + "].position", "waypoint inside a wall");
    }
  };
  for (size_t k = 0; k < config.entrances.size(); ++k) {
    const Entrance& e = config.entrances[k];
    if (!reachable(e.region, e.exit_group)) fail(idx("entrances", k), "no reachable exit");
    check_route(e.route, idx("entrances", k) + ".route");
  }
  for (size_t k = 0; k < config.initial_population.size(); ++k) {
    const InitialGroup& g = config.initial_population[k];
    if (g.count == 0) continue;
    if (!reachable(g.region, g.exit_group)) fail(idx("initial_population", k), "no reachable exit");
    check_route(g.route, idx("initial_population", k) + ".route");
  }
}

}  // namespace aerocrowd
