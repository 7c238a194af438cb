// biharm <command> --config <path> [--threads N] [--out DIR]
//
// Exit status: 0 success, 2 validation error (no files written), 3 numerical failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "biharm/analysis.hpp"
#include "biharm/calculus.hpp"
#include "biharm/error.hpp"
#include "biharm/gauge.hpp"
#include "biharm/maps.hpp"
#include "biharm/monotonicity.hpp"
#include "biharm/parallel.hpp"
#include "biharm/solver.hpp"
#include "corpus.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace biharm;

namespace {

const std::vector<std::string> kCommands{"solve",  "monotonicity", "boundary-monotonicity", "singular-set",
                                         "norms",  "gauge",        "green",                 "corpus"};

// A configuration problem detected before any computation.
struct ConfigError : ParameterError {
  using ParameterError::ParameterError;
};

// ---- schema helpers ---------------------------------------------------------

void allow(const json& obj, const std::string& where, std::initializer_list<const char*> keys) {
  if (!obj.is_object()) throw ConfigError(where + " must be an object");
  const std::set<std::string> ok(keys.begin(), keys.end());
  for (const auto& [key, value] : obj.items())
    if (!ok.contains(key)) throw ConfigError("unknown key '" + key + "' in " + where);
}

const json& need(const json& obj, const std::string& key, const std::string& where) {
  if (!obj.contains(key)) throw ConfigError("missing key '" + key + "' in " + where);
  return obj.at(key);
}

double number(const json& v, const std::string& what) {
  if (!v.is_number()) throw ConfigError(what + " must be a number");
  return v.get<double>();
}

int integer(const json& v, const std::string& what) {
  if (!v.is_number_integer()) throw ConfigError(what + " must be an integer");
  return v.get<int>();
}

double number_or(const json& obj, const std::string& key, double fallback, const std::string& where) {
  return obj.contains(key) ? number(obj.at(key), where + "." + key) : fallback;
}

int integer_or(const json& obj, const std::string& key, int fallback, const std::string& where) {
  return obj.contains(key) ? integer(obj.at(key), where + "." + key) : fallback;
}

std::vector<double> numbers(const json& v, const std::string& what) {
  if (!v.is_array()) throw ConfigError(what + " must be an array of numbers");
  std::vector<double> out;
  for (const auto& x : v) out.push_back(number(x, what));
  return out;
}

Point point(const json& v, const std::string& what) {
  const auto xs = numbers(v, what);
  if (xs.size() > kMaxDim) throw ConfigError(what + " has too many coordinates");
  Point p{};
  std::copy(xs.begin(), xs.end(), p.begin());
  return p;
}

// ---- typed configuration ----------------------------------------------------

struct DomainConfig {
  DomainSpec spec;
  double min_cells = 4.0;
};

DomainConfig parse_domain(const json& j) {
  allow(j, "domain", {"shape", "n", "h", "radius", "center", "origin", "extents", "min_cells_per_radius"});
  DomainConfig d;
  const json& shape = need(j, "shape", "domain");
  if (!shape.is_string()) throw ConfigError("domain.shape must be a string");
  const std::string s = shape.get<std::string>();
  const int n = integer(need(j, "n", "domain"), "domain.n");
  const double h = number(need(j, "h", "domain"), "domain.h");
  if (n < 1 || n > kMaxDim) throw ConfigError("domain.n must lie in [1, 8]");
  if (!(h > 0)) throw ConfigError("domain.h must be positive");
  if (s == "box") {
    d.spec = DomainSpec::box(n, j.contains("origin") ? point(j["origin"], "domain.origin") : Point{},
                             point(need(j, "extents", "domain"), "domain.extents"), h);
  } else if (s == "ball" || s == "half-ball") {
    const double r = number_or(j, "radius", 1.0, "domain");
    const Point c = j.contains("center") ? point(j["center"], "domain.center") : Point{};
    d.spec = s == "ball" ? DomainSpec::ball(n, r, h, c) : DomainSpec::half_ball(n, r, h, c);
  } else {
    throw ConfigError("domain.shape must be ball, half-ball or box");
  }
  d.min_cells = number_or(j, "min_cells_per_radius", 4.0, "domain");
  return d;
}

SolveConfig parse_solve(const json& j, const std::string& where) {
  allow(j, where, {"tau", "max_iters", "tol", "lin_tol", "lin_max_iters"});
  SolveConfig c;
  c.tau = number_or(j, "tau", c.tau, where);
  c.max_iters = integer_or(j, "max_iters", c.max_iters, where);
  c.tol = number_or(j, "tol", c.tol, where);
  c.lin_tol = number_or(j, "lin_tol", c.lin_tol, where);
  c.lin_max_iters = integer_or(j, "lin_max_iters", c.lin_max_iters, where);
  return c;
}

struct MapConfig {
  std::string kind;
  std::vector<double> value;  // constant
  double a = 1.0;             // geodesic
  int axis = 0, L = 3;
  Point center{};             // radial-projection
  std::string path;           // from-file
  std::shared_ptr<MapConfig> data, initial;  // solver-output
  SolveConfig solve;
};

MapConfig parse_map(const json& j, const std::string& where, const fs::path& base) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  const json& kind = need(j, "kind", where);
  if (!kind.is_string()) throw ConfigError(where + ".kind must be a string");
  MapConfig m;
  m.kind = kind.get<std::string>();
  if (m.kind == "constant") {
    allow(j, where, {"kind", "value"});
    m.value = numbers(need(j, "value", where), where + ".value");
    if (m.value.empty()) throw ConfigError(where + ".value must not be empty");
  } else if (m.kind == "geodesic") {
    allow(j, where, {"kind", "a", "axis", "L"});
    m.a = number_or(j, "a", 1.0, where);
    m.axis = integer_or(j, "axis", 0, where);
    m.L = integer_or(j, "L", 3, where);
    if (m.L < 2) throw ConfigError(where + ".L must be at least 2");
  } else if (m.kind == "radial-projection") {
    allow(j, where, {"kind", "center"});
    if (j.contains("center")) m.center = point(j["center"], where + ".center");
  } else if (m.kind == "from-file") {
    allow(j, where, {"kind", "path"});
    const json& p = need(j, "path", where);
    if (!p.is_string()) throw ConfigError(where + ".path must be a string");
    fs::path file = p.get<std::string>();
    if (file.is_relative()) file = base / file;
    if (!fs::is_regular_file(file)) throw ConfigError(where + ".path '" + file.string() + "' does not exist");
    m.path = fs::absolute(file).lexically_normal().string();
  } else if (m.kind == "solver-output") {
    allow(j, where, {"kind", "data", "initial", "solve"});
    m.data = std::make_shared<MapConfig>(parse_map(need(j, "data", where), where + ".data", base));
    if (j.contains("initial"))
      m.initial = std::make_shared<MapConfig>(parse_map(j["initial"], where + ".initial", base));
    if (j.contains("solve")) m.solve = parse_solve(j["solve"], where + ".solve");
  } else {
    throw ConfigError(where + ".kind must be constant, geodesic, radial-projection, from-file or solver-output");
  }
  return m;
}

// Rewrites from-file paths in the echoed config to their resolved absolute form.
void echo_paths(json& j, const MapConfig& m) {
  if (m.kind == "from-file") j["path"] = m.path;
  if (m.data) echo_paths(j["data"], *m.data);
  if (m.initial) echo_paths(j["initial"], *m.initial);
}

struct NormConfig {
  std::string kind;
  MorreyParams params;
};

struct RunConfig {
  std::string command;
  json raw;
  std::uint64_t seed = 7;
  std::string output;
  std::optional<DomainConfig> domain;
  std::optional<MapConfig> map, phi;
  std::optional<MapConfig> initial;
  SolveConfig solve;
  std::optional<Point> center;
  std::vector<double> radii;
  std::optional<double> core_radius;
  std::optional<double> core_energy;
  bool core_analytic = false;
  double eps0 = 1.0;
  int stride = 1;
  std::string field = "gradient";
  std::vector<NormConfig> norms;
  GaugeConfig gauge;
  std::optional<std::pair<double, double>> oscillation;  // q, radius
  std::vector<Point> sources;
  std::optional<std::pair<double, double>> decay;  // r_min, r_max
  std::vector<std::string> checks;
  double mutation = 0.0;
};

RunConfig parse_config(const std::string& command, const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot read config '" + file.string() + "'");
  RunConfig c;
  try {
    c.raw = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  const json& j = c.raw;
  c.command = command;
  const fs::path base = fs::absolute(file).parent_path();

  std::vector<const char*> keys{"command", "seed", "output"};
  auto add = [&keys](std::initializer_list<const char*> more) { keys.insert(keys.end(), more); };
  if (command == "solve") add({"domain", "map", "initial", "solve"});
  if (command == "monotonicity") add({"domain", "map", "phi", "center", "radii", "core"});
  if (command == "boundary-monotonicity") add({"domain", "map", "phi", "center", "radii"});
  if (command == "singular-set") add({"domain", "map", "eps0", "radii", "stride"});
  if (command == "norms") add({"domain", "map", "field", "norms"});
  if (command == "gauge") add({"domain", "map", "gauge", "oscillation"});
  if (command == "green") add({"domain", "sources", "solve", "decay"});
  if (command == "corpus") add({"checks", "mutation"});
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  const std::set<std::string> ok(keys.begin(), keys.end());
  for (const auto& [key, value] : j.items())
    if (!ok.contains(key)) throw ConfigError("unknown key '" + key + "' for command " + command);

  if (j.contains("command") && (!j["command"].is_string() || j["command"].get<std::string>() != command))
    throw ConfigError("config command does not match '" + command + "'");
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned()) throw ConfigError("seed must be a non-negative integer");
    c.seed = j["seed"].get<std::uint64_t>();
  }
  if (j.contains("output")) {
    if (!j["output"].is_string()) throw ConfigError("output must be a string");
    fs::path out = j["output"].get<std::string>();
    c.output = (out.is_relative() ? base / out : out).lexically_normal().string();
  }
  if (j.contains("domain")) c.domain = parse_domain(j["domain"]);
  if (j.contains("map")) c.map = parse_map(j["map"], "map", base);
  if (j.contains("phi")) c.phi = parse_map(j["phi"], "phi", base);
  if (j.contains("initial")) c.initial = parse_map(j["initial"], "initial", base);
  if (j.contains("solve")) c.solve = parse_solve(j["solve"], "solve");
  if (j.contains("center")) c.center = point(j["center"], "center");
  if (j.contains("radii")) c.radii = numbers(j["radii"], "radii");
  c.eps0 = number_or(j, "eps0", c.eps0, "config");
  c.stride = integer_or(j, "stride", c.stride, "config");

  const bool needs_map = command != "green" && command != "corpus";
  if (needs_map && !c.map) throw ConfigError("command " + command + " needs a map");
  if (needs_map && !c.domain) {
    const bool from_file = c.map->kind == "from-file" ||
                           (c.map->kind == "solver-output" && c.map->data->kind == "from-file");
    if (!from_file) throw ConfigError("domain is required unless the map is read from a file");
  }
  if (command == "green" && !c.domain) throw ConfigError("command green needs a domain");
  if ((command == "monotonicity" || command == "boundary-monotonicity") && c.radii.empty())
    throw ConfigError("radii must list at least one radius");
  if (command == "boundary-monotonicity" && !c.phi) throw ConfigError("boundary-monotonicity needs phi");

  if (j.contains("core")) {
    allow(j["core"], "core", {"radius", "energy", "analytic"});
    c.core_radius = number(need(j["core"], "radius", "core"), "core.radius");
    if (j["core"].contains("energy")) c.core_energy = number(j["core"]["energy"], "core.energy");
    if (j["core"].contains("analytic")) {
      if (!j["core"]["analytic"].is_boolean()) throw ConfigError("core.analytic must be a boolean");
      c.core_analytic = j["core"]["analytic"].get<bool>();
    }
    if (c.core_analytic && (c.core_energy || c.map->kind != "radial-projection"))
      throw ConfigError("core.analytic needs a radial-projection map and no explicit energy");
  }
  if (j.contains("field")) {
    if (!j["field"].is_string()) throw ConfigError("field must be a string");
    c.field = j["field"].get<std::string>();
    if (c.field != "gradient" && c.field != "hessian" && c.field != "value")
      throw ConfigError("field must be gradient, hessian or value");
  }
  if (command == "norms") {
    const json& list = need(j, "norms", "config");
    if (!list.is_array() || list.empty()) throw ConfigError("norms must be a non-empty array");
    for (std::size_t i = 0; i < list.size(); ++i) {
      const std::string where = "norms[" + std::to_string(i) + "]";
      const json& e = list[i];
      allow(e, where, {"kind", "p", "lambda", "stride", "radii", "clip"});
      NormConfig nc;
      const json& kind = need(e, "kind", where);
      if (!kind.is_string()) throw ConfigError(where + ".kind must be a string");
      nc.kind = kind.get<std::string>();
      if (nc.kind != "morrey" && nc.kind != "weak-morrey" && nc.kind != "bmo" && nc.kind != "interpolation")
        throw ConfigError(where + ".kind must be morrey, weak-morrey, bmo or interpolation");
      nc.params.p = number_or(e, "p", 2.0, where);
      nc.params.lambda = number_or(e, "lambda", 2.0, where);
      nc.params.stride = integer_or(e, "stride", 1, where);
      if (e.contains("radii")) nc.params.radii = numbers(e["radii"], where + ".radii");
      if (e.contains("clip")) {
        if (!e["clip"].is_boolean()) throw ConfigError(where + ".clip must be a boolean");
        nc.params.clip = e["clip"].get<bool>();
      }
      c.norms.push_back(nc);
    }
  }
  if (j.contains("gauge")) {
    allow(j["gauge"], "gauge", {"max_sweeps", "tol", "step"});
    c.gauge.max_sweeps = integer_or(j["gauge"], "max_sweeps", c.gauge.max_sweeps, "gauge");
    c.gauge.tol = number_or(j["gauge"], "tol", c.gauge.tol, "gauge");
    c.gauge.step = number_or(j["gauge"], "step", c.gauge.step, "gauge");
    c.gauge.validate();
  }
  if (j.contains("oscillation")) {
    allow(j["oscillation"], "oscillation", {"q", "radius"});
    c.oscillation = {number(need(j["oscillation"], "q", "oscillation"), "oscillation.q"),
                     number(need(j["oscillation"], "radius", "oscillation"), "oscillation.radius")};
  }
  if (command == "green") {
    const json& list = need(j, "sources", "config");
    if (!list.is_array() || list.empty()) throw ConfigError("sources must be a non-empty array of points");
    for (const auto& s : list) c.sources.push_back(point(s, "sources[]"));
  }
  if (j.contains("decay")) {
    allow(j["decay"], "decay", {"r_min", "r_max"});
    c.decay = {number(need(j["decay"], "r_min", "decay"), "decay.r_min"),
               number(need(j["decay"], "r_max", "decay"), "decay.r_max")};
  }
  if (j.contains("checks")) {
    if (!j["checks"].is_array()) throw ConfigError("checks must be an array of names");
    for (const auto& s : j["checks"]) {
      if (!s.is_string()) throw ConfigError("checks must be an array of names");
      const std::string name = s.get<std::string>();
      if (std::none_of(corpus::checks().begin(), corpus::checks().end(),
                       [&](const corpus::Check& k) { return k.name == name; }))
        throw ConfigError("unknown corpus check '" + name + "'");
      c.checks.push_back(name);
    }
  }
  c.mutation = number_or(j, "mutation", 0.0, "config");

  // Echo resolved paths.
  if (c.map) echo_paths(c.raw["map"], *c.map);
  if (c.phi) echo_paths(c.raw["phi"], *c.phi);
  if (c.initial) echo_paths(c.raw["initial"], *c.initial);
  if (!c.output.empty()) c.raw["output"] = c.output;
  return c;
}

// ---- execution --------------------------------------------------------------

// Artifacts are produced in memory and written only after the command succeeded.
struct Outcome {
  json scalars = json::object();
  std::vector<std::pair<std::string, std::function<void(const fs::path&)>>> files;
  bool failed = false;  // numerical failure with a partial result
};

template <class T>
void add_file(Outcome& out, const std::string& name, T&& writer) {
  out.files.emplace_back(name, std::forward<T>(writer));
}

void text_file(Outcome& out, const std::string& name, std::function<void(std::ostream&)> body) {
  add_file(out, name, [name, body = std::move(body)](const fs::path& dir) {
    std::ofstream f(dir / name);
    if (!f) throw ParameterError("cannot write '" + (dir / name).string() + "'");
    body(f);
  });
}

LatticePtr lattice_for(const RunConfig& c) {
  if (c.domain) return build_domain(c.domain->spec, c.domain->min_cells);
  const MapConfig* m = &*c.map;
  while (m->kind == "solver-output") m = m->data.get();
  return read_binary(m->path).lattice_ptr();
}

GridField build_map(const MapConfig& m, const LatticePtr& lat) {
  if (m.kind == "constant") return maps::constant(lat, m.value);
  if (m.kind == "geodesic") {
    if (m.axis < 0 || m.axis >= lat->dim()) throw ParameterError("geodesic axis outside the domain dimension");
    return maps::geodesic(lat, m.a, m.axis, m.L);
  }
  if (m.kind == "radial-projection") return maps::radial_projection(lat, m.center);
  if (m.kind == "from-file") {
    std::vector<std::uint8_t> flags;
    GridField f = read_binary(m.path, &flags);
    if (!(f.lattice().spec() == lat->spec())) throw DomainError("'" + m.path + "' lives on a different domain");
    GridField g(lat, f.components());
    g.values() = f.values();
    return g;
  }
  const GridField data = build_map(*m.data, lat);
  std::optional<GridField> init;
  if (m.initial) init = build_map(*m.initial, lat);
  return minimize(data, m.solve, init).u;
}

Point center_of(const RunConfig& c, const Lattice& lat) { return c.center ? *c.center : lat.spec().center; }

double finite_max_abs(const std::vector<MonotonicityRow>& rows, double MonotonicityRow::*field) {
  double m = 0;
  for (const auto& r : rows)
    if (std::isfinite(r.*field)) m = std::max(m, std::abs(r.*field));
  return m;
}

Outcome run_solve(const RunConfig& c) {
  auto lat = lattice_for(c);
  const GridField phi = build_map(*c.map, lat);
  std::optional<GridField> init;
  if (c.initial) init = build_map(*c.initial, lat);
  auto res = std::make_shared<FlowResult>(minimize(phi, c.solve, init));
  Outcome out;
  out.scalars = {{"iterations", res->iterations},
                 {"converged", res->converged},
                 {"initial_energy", res->initial_energy},
                 {"final_energy", res->final_energy},
                 {"final_residual", res->final_residual}};
  add_file(out, "solution.bin", [res](const fs::path& dir) { write_binary((dir / "solution.bin").string(), res->u); });
  text_file(out, "convergence.csv", [res](std::ostream& f) { write_csv(f, *res); });
  return out;
}

Outcome run_monotonicity(const RunConfig& c, bool boundary) {
  auto lat = lattice_for(c);
  const GridField u = build_map(*c.map, lat);
  std::optional<GridField> phi;
  if (c.phi) phi = build_map(*c.phi, lat);
  if (boundary && lat->spec().shape != Shape::HalfBall)
    throw DomainError("boundary-monotonicity needs a half-ball domain");
  CoreExcision core;
  if (c.core_radius) {
    core.radius = *c.core_radius;
    if (c.core_energy) core.energy = *c.core_energy;
    if (c.core_analytic) core.energy = maps::radial_projection_core_energy(lat->dim(), core.radius);
  }
  auto rep = std::make_shared<MonotonicityReport>(
      monotonicity_report(u, phi ? &*phi : nullptr, center_of(c, *lat), c.radii, core));
  Outcome out;
  json scaled = json::array();
  for (double e : rep->scaled_energy) scaled.push_back(e);
  out.scalars["scaled_energy"] = scaled;
  out.scalars["max_abs_A1"] = finite_max_abs(rep->rows, &MonotonicityRow::A1);
  out.scalars["max_abs_A2"] = finite_max_abs(rep->rows, &MonotonicityRow::A2);
  if (phi) {
    double min_a = INFINITY;
    for (const auto& r : rep->rows)
      if (std::isfinite(r.Abdry)) min_a = std::min(min_a, r.Abdry);
    if (std::isfinite(min_a)) out.scalars["min_boundary_A"] = min_a;
  }
  if (rep->fit) {
    out.scalars["fit_found"] = rep->fit->found;
    out.scalars["fitted_C"] = rep->fit->C;
  }
  text_file(out, "monotonicity.csv", [rep](std::ostream& f) { write_csv(f, *rep); });
  return out;
}

Outcome run_singular(const RunConfig& c) {
  auto lat = lattice_for(c);
  const GridField u = build_map(*c.map, lat);
  const auto radii = c.radii.empty() ? std::vector<double>{4 * lat->h()} : c.radii;
  auto rep = std::make_shared<SingularSetReport>(singular_set(u, c.eps0, radii, c.stride));
  Outcome out;
  out.scalars = {{"scanned", rep->scanned.size()},
                 {"flagged", rep->flagged.size()},
                 {"excised", rep->excised},
                 {"diameter", rep->diameter},
                 {"threshold", rep->threshold}};
  text_file(out, "singular_set.csv", [rep, lat](std::ostream& f) { write_csv(f, *rep, *lat); });
  return out;
}

Outcome run_norms(const RunConfig& c) {
  auto lat = lattice_for(c);
  const GridField u = build_map(*c.map, lat);
  const GridField f = c.field == "gradient" ? pointwise_norm(gradient(u))
                      : c.field == "hessian" ? pointwise_norm(hessian(u))
                                             : u;
  Outcome out;
  const int n = lat->dim();
  for (std::size_t i = 0; i < c.norms.size(); ++i) {
    const auto& nc = c.norms[i];
    const std::string key = nc.kind + "_" + std::to_string(i);
    if (nc.kind == "interpolation") {
      const auto chk = check_interpolation(u, nc.params);
      out.scalars[key] = {{"grad22", chk.grad22}, {"grad44", chk.grad44}, {"hess24", chk.hess24},
                          {"lhs", chk.lhs},       {"rhs", chk.rhs}};
      if (chk.ratio) out.scalars[key]["ratio"] = *chk.ratio;
      continue;
    }
    auto scan = std::make_shared<NormScan>(nc.kind == "morrey"        ? morrey_scan(f, nc.params)
                                           : nc.kind == "weak-morrey" ? weak_morrey_scan(f, nc.params)
                                                                      : bmo_scan(f, nc.params));
    out.scalars[key] = {{"value", scan->value}, {"best_radius", scan->best.radius}, {"skipped", scan->skipped}};
    text_file(out, "norm_" + std::to_string(i) + ".csv", [scan, n](std::ostream& s) { write_csv(s, *scan, n); });
  }
  return out;
}

Outcome run_gauge(const RunConfig& c) {
  auto lat = lattice_for(c);
  GridField u = build_map(*c.map, lat);
  if (lat->spec().shape == Shape::HalfBall) u = reflect_extend(u);
  const ConnectionField omega = build_omega(u);
  auto fr = std::make_shared<FrameField>(coulomb_gauge(omega, c.gauge));
  Outcome out;
  out.scalars = {{"initial_energy", fr->energy.front()}, {"final_energy", fr->energy.back()},
                 {"divergence", fr->divergence},         {"orthogonality", fr->orthogonality},
                 {"sweeps", fr->sweeps},                 {"converged", fr->converged}};
  if (c.oscillation) {
    const auto rep = oscillation_check(fr->P, fr->l, c.oscillation->first, c.oscillation->second);
    out.scalars["oscillation"] = {{"lq", rep.lq}, {"bmo", rep.bmo}, {"distance", rep.distance}};
  }
  add_file(out, "frame.bin", [fr](const fs::path& dir) { write_frame((dir / "frame.bin").string(), *fr); });
  text_file(out, "gauge.csv", [fr](std::ostream& f) {
    f << "sweep,energy\n" << std::setprecision(17);
    for (std::size_t s = 0; s < fr->energy.size(); ++s) f << s << ',' << fr->energy[s] << '\n';
  });
  return out;
}

Outcome run_green(const RunConfig& c) {
  auto lat = lattice_for(c);
  const double h = lat->h();
  std::vector<Index> sources;
  const Point base = lat->coord(Index{});
  for (const Point& p : c.sources) {
    Index k{};
    for (int d = 0; d < lat->dim(); ++d) {
      const double q = (p[d] - base[d]) / h;
      if (std::abs(q - std::round(q)) > 1e-9) throw ParameterError("green source is not a lattice node");
      k[d] = static_cast<int>(std::lround(q));
    }
    if (lat->find(k) < 0) throw DomainError("green source lies outside the domain");
    sources.push_back(k);
  }
  auto table = std::make_shared<GreenTable>(green_table(lat, sources, c.solve));
  Outcome out;
  double asym = 0;
  for (std::size_t a = 0; a < sources.size(); ++a)
    for (std::size_t b = a + 1; b < sources.size(); ++b) {
      const auto ia = static_cast<std::size_t>(lat->find(sources[a])), ib = static_cast<std::size_t>(lat->find(sources[b]));
      asym = std::max(asym, std::abs(table->values[a](ib, 0) - table->values[b](ia, 0)));
    }
  out.scalars["asymmetry"] = asym;
  if (c.decay) {
    json slopes = json::array();
    for (std::size_t a = 0; a < sources.size(); ++a)
      slopes.push_back(fit_green_decay(table->values[a], sources[a], c.decay->first, c.decay->second).slope);
    out.scalars["decay_slope"] = slopes;
  }
  for (std::size_t a = 0; a < sources.size(); ++a) {
    const std::string name = "green_" + std::to_string(a) + ".bin";
    add_file(out, name, [table, a, name](const fs::path& dir) { write_binary((dir / name).string(), table->values[a]); });
  }
  return out;
}

Outcome run_corpus(const RunConfig& c) {
  corpus::Options opt;
  opt.seed = c.seed;
  opt.mutation = c.mutation;
  auto rows = std::make_shared<std::vector<corpus::Row>>();
  Outcome out;
  auto report = [&](const corpus::Row& r) {
    rows->push_back(r);
    std::cout << (r.pass ? "PASS " : "FAIL ") << r.name << " value=" << r.value << " bound=" << r.bound << " "
              << r.detail << " (" << std::fixed << std::setprecision(1) << r.seconds << " s)" << std::defaultfloat
              << std::setprecision(6) << std::endl;
  };
  try {
    corpus::run(c.checks, opt, report);
  } catch (const std::exception& e) {
    std::cerr << "corpus aborted: " << e.what() << '\n';
    out.failed = true;
  }
  json table = json::object();
  for (const auto& r : *rows)
    table[r.name] = {{"value", r.value}, {"bound", r.bound}, {"pass", r.pass}, {"seconds", r.seconds}};
  out.scalars["rows"] = table;
  const auto passed = std::count_if(rows->begin(), rows->end(), [](const corpus::Row& r) { return r.pass; });
  out.scalars["passed"] = passed;
  out.scalars["total"] = rows->size();
  out.failed = out.failed || passed != static_cast<std::ptrdiff_t>(rows->size());
  text_file(out, "corpus.csv", [rows](std::ostream& f) { corpus::write_csv(f, *rows); });
  return out;
}

Outcome execute(const RunConfig& c) {
  if (c.command == "solve") return run_solve(c);
  if (c.command == "monotonicity") return run_monotonicity(c, false);
  if (c.command == "boundary-monotonicity") return run_monotonicity(c, true);
  if (c.command == "singular-set") return run_singular(c);
  if (c.command == "norms") return run_norms(c);
  if (c.command == "gauge") return run_gauge(c);
  if (c.command == "green") return run_green(c);
  return run_corpus(c);
}

void write_outputs(const RunConfig& c, const Outcome& out, const fs::path& dir, double wall_ms) {
  fs::create_directories(dir);
  for (const auto& [name, writer] : out.files) writer(dir);
  json manifest = {{"command", c.command}, {"config", c.raw}, {"scalars", out.scalars}, {"wall_ms", wall_ms},
                   {"seed", c.seed}};
  std::ofstream f(dir / "manifest.json");
  if (!f) throw ParameterError("cannot write manifest in '" + dir.string() + "'");
  f << manifest.dump(2) << '\n';
}

// Validation problems map to 2, numerical ones to 3.
int exit_code(const std::exception& e) {
  if (dynamic_cast<const ParameterError*>(&e) || dynamic_cast<const DomainError*>(&e) ||
      dynamic_cast<const ResolutionError*>(&e) || dynamic_cast<const BoundaryDataError*>(&e) ||
      dynamic_cast<const ConstraintError*>(&e) || dynamic_cast<const json::exception*>(&e))
    return 2;
  return 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Numerical lab for biharmonic maps into spheres"};
  std::string command, config, out_dir;
  unsigned threads = 0;
  app.add_option("command", command, "Command to run")->required()->check(CLI::IsMember(kCommands));
  app.add_option("--config", config, "JSON run configuration")->required();
  app.add_option("--threads", threads, "Worker thread cap")->check(CLI::PositiveNumber);
  app.add_option("--out", out_dir, "Output directory (default: config output key, else ./biharm_out)");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return e.get_exit_code() == 0 ? app.exit(e) : (app.exit(e), 2);
  }
  if (threads > 0) set_max_threads(threads);

  RunConfig cfg;
  try {
    cfg = parse_config(command, config);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  }
  const fs::path dir = !out_dir.empty() ? fs::path(out_dir) : !cfg.output.empty() ? fs::path(cfg.output) : "biharm_out";

  const auto t0 = std::chrono::steady_clock::now();
  Outcome out;
  try {
    out = execute(cfg);
  } catch (const std::exception& e) {
    const int code = exit_code(e);
    std::cerr << (code == 2 ? "validation error: " : "numerical failure: ") << e.what() << '\n';
    return code;
  }
  const double wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  try {
    write_outputs(cfg, out, dir, wall_ms);
  } catch (const std::exception& e) {
    std::cerr << "cannot write outputs: " << e.what() << '\n';
    return 3;
  }
  return out.failed ? 3 : 0;
}
