#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tdbsde/assumptions.hpp"
#include "tdbsde/ensemble_io.hpp"
#include "tdbsde/errors.hpp"
#include "tdbsde/generators.hpp"
#include "tdbsde/picard_solver.hpp"
#include "tdbsde/stability_lab.hpp"

namespace tdbsde {

using json = nlohmann::json;

inline constexpr const char* kVersion = "1.0.0";

enum class Mode { check_assumptions, solve, stability, helly_bray };

inline const char* to_string(Mode m) noexcept {
  switch (m) {
    case Mode::check_assumptions: return "check-assumptions";
    case Mode::solve: return "solve";
    case Mode::stability: return "stability";
    default: return "helly-bray";
  }
}

inline std::optional<Mode> parse_mode(const std::string& s) {
  if (s == "check-assumptions") return Mode::check_assumptions;
  if (s == "solve") return Mode::solve;
  if (s == "stability") return Mode::stability;
  if (s == "helly-bray") return Mode::helly_bray;
  return std::nullopt;
}

struct EngineConfig {
  std::uint64_t seed = 1;
  std::size_t n_paths = 1000;
  std::size_t n_steps = 50;
  RegressionBasis basis;
  unsigned threads = 1;
  std::string dump_ensemble;  ///< directory; empty means no dump
  std::string load_ensemble;  ///< directory; empty means simulate
};

struct CheckConfig {
  std::size_t probe_samples = 2000;
  IntegrabilityOptions integrability;
};

enum class HellyBrayFamily { brownian_oscillatory, deterministic_oscillatory, counterexample, identical };

struct HellyBrayConfig {
  HellyBrayFamily family = HellyBrayFamily::brownian_oscillatory;
  std::vector<double> n{1, 2, 4, 8, 16, 32};
  double T = 1.0;
  HellyBrayOptions options;
};

/// Fully parsed experiment.
struct ExperimentConfig {
  Mode mode = Mode::solve;
  std::optional<ProblemSpec> problem;
  std::optional<PerturbationFamily> family;
  HellyBrayConfig helly_bray;
  EngineConfig engine;
  SolverOptions solver;
  StabilityOptions stability;
  CheckConfig checks;
  std::string output = "out";
  json canonical;  ///< config after references and overrides are resolved
};

/// One validation finding, addressed by JSON path.
struct Diagnostic {
  std::string path;
  std::string message;
};

/// Command-line or environment overrides of config fields.
struct RunOverrides {
  std::optional<std::string> mode;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> paths;
  std::optional<std::size_t> steps;
  std::optional<unsigned> threads;
  std::optional<std::string> out;
  std::optional<double> tol;
  std::optional<std::size_t> max_iter;
};

/// Fills unset fields from TDBSDE_SEED, TDBSDE_PATHS, TDBSDE_STEPS,
/// TDBSDE_THREADS, TDBSDE_OUT, TDBSDE_TOL and TDBSDE_MAX_ITER.
inline void apply_environment(RunOverrides& ov) {
  auto env = [](const char* name) -> std::optional<std::string> {
    const char* v = std::getenv(name);
    if (!v || !*v) return std::nullopt;
    return std::string(v);
  };
  auto integer = [](const std::string& name, const std::string& v) {
    try {
      std::size_t pos = 0;
      const unsigned long long x = std::stoull(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return x;
    } catch (const std::exception&) {
      throw ConfigError("env:" + name, "expected a nonnegative integer, got '" + v + "'");
    }
  };
  if (!ov.seed) {
    if (auto v = env("TDBSDE_SEED")) ov.seed = integer("TDBSDE_SEED", *v);
  }
  if (!ov.paths) {
    if (auto v = env("TDBSDE_PATHS")) ov.paths = integer("TDBSDE_PATHS", *v);
  }
  if (!ov.steps) {
    if (auto v = env("TDBSDE_STEPS")) ov.steps = integer("TDBSDE_STEPS", *v);
  }
  if (!ov.threads) {
    if (auto v = env("TDBSDE_THREADS")) ov.threads = static_cast<unsigned>(integer("TDBSDE_THREADS", *v));
  }
  if (!ov.max_iter) {
    if (auto v = env("TDBSDE_MAX_ITER")) ov.max_iter = integer("TDBSDE_MAX_ITER", *v);
  }
  if (!ov.out) ov.out = env("TDBSDE_OUT");
  if (!ov.tol) {
    if (auto v = env("TDBSDE_TOL")) {
      try {
        ov.tol = std::stod(*v);
      } catch (const std::exception&) {
        throw ConfigError("env:TDBSDE_TOL", "expected a number, got '" + *v + "'");
      }
    }
  }
}

/// Writes the overrides into the raw config.
inline void apply_overrides(json& cfg, const RunOverrides& ov) {
  if (ov.mode) cfg["mode"] = *ov.mode;
  if (ov.seed) cfg["engine"]["seed"] = *ov.seed;
  if (ov.paths) cfg["engine"]["n_paths"] = *ov.paths;
  if (ov.steps) cfg["engine"]["n_steps"] = *ov.steps;
  if (ov.threads) cfg["engine"]["threads"] = *ov.threads;
  if (ov.out) cfg["output"] = *ov.out;
  if (ov.tol) cfg["solver"]["tol"] = *ov.tol;
  if (ov.max_iter) cfg["solver"]["max_iter"] = *ov.max_iter;
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Hash of the canonical config without fields that must not affect results.
inline std::string config_hash(json cfg) {
  if (cfg.contains("engine")) cfg["engine"].erase("threads");
  cfg.erase("output");
  std::ostringstream os;
  os << "fnv1a64:" << std::hex << std::setw(16) << std::setfill('0') << fnv1a(cfg.dump());
  return os.str();
}

namespace cfg {

inline std::string join(const std::string& base, const std::string& key) { return base + "." + key; }

inline const json* find(const json& j, const std::string& key) {
  if (!j.is_object()) return nullptr;
  const auto it = j.find(key);
  return it == j.end() ? nullptr : &*it;
}

inline void require_object(const json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path, "expected an object");
}

inline void only_keys(const json& j, const std::string& path, std::initializer_list<const char*> keys) {
  for (const auto& [k, v] : j.items()) {
    bool ok = false;
    for (const char* a : keys) ok = ok || k == a;
    if (!ok) throw ConfigError(join(path, k), "unknown field");
  }
}

inline double number(const json& j, const std::string& key, const std::string& path, double fallback) {
  const json* v = find(j, key);
  if (!v) return fallback;
  if (!v->is_number()) throw ConfigError(join(path, key), "expected a number");
  const double x = v->get<double>();
  if (!std::isfinite(x)) throw ConfigError(join(path, key), "must be finite");
  return x;
}

inline double positive(const json& j, const std::string& key, const std::string& path, double fallback) {
  const double x = number(j, key, path, fallback);
  if (!(x > 0.0)) throw ConfigError(join(path, key), "must be positive");
  return x;
}

inline std::uint64_t count(const json& j, const std::string& key, const std::string& path, std::uint64_t fallback) {
  const json* v = find(j, key);
  if (!v) return fallback;
  if (!v->is_number_integer() || v->get<long long>() < 0) {
    throw ConfigError(join(path, key), "expected a nonnegative integer");
  }
  return v->get<std::uint64_t>();
}

inline std::string string(const json& j, const std::string& key, const std::string& path, std::string fallback) {
  const json* v = find(j, key);
  if (!v) return fallback;
  if (!v->is_string()) throw ConfigError(join(path, key), "expected a string");
  return v->get<std::string>();
}

inline bool boolean(const json& j, const std::string& key, const std::string& path, bool fallback) {
  const json* v = find(j, key);
  if (!v) return fallback;
  if (!v->is_boolean()) throw ConfigError(join(path, key), "expected true or false");
  return v->get<bool>();
}

inline std::vector<double> numbers(const json& j, const std::string& key, const std::string& path,
                                   std::vector<double> fallback) {
  const json* v = find(j, key);
  if (!v) return fallback;
  if (!v->is_array() || v->empty()) throw ConfigError(join(path, key), "expected a nonempty array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < v->size(); ++i) {
    if (!(*v)[i].is_number()) throw ConfigError(join(path, key) + "[" + std::to_string(i) + "]", "expected a number");
    out.push_back((*v)[i].get<double>());
  }
  return out;
}

inline Params params(const json& j, const std::string& path) {
  Params p;
  const json* v = find(j, "params");
  if (!v) return p;
  if (!v->is_object()) throw ConfigError(join(path, "params"), "expected an object of numbers");
  for (const auto& [k, x] : v->items()) {
    if (!x.is_number()) throw ConfigError(join(join(path, "params"), k), "expected a number");
    p[k] = x.get<double>();
  }
  return p;
}

inline AtomMeasure measure(const json* j, const std::string& path, double delta) {
  if (!j) return AtomMeasure::dirac(-delta);
  require_object(*j, path);
  only_keys(*j, path, {"dirac", "uniform", "theta", "weight"});
  try {
    if (find(*j, "dirac")) return AtomMeasure::dirac(number(*j, "dirac", path, 0.0));
    if (find(*j, "uniform")) {
      const auto n = count(*j, "uniform", path, 1);
      if (n == 0) throw ConfigError(join(path, "uniform"), "needs at least one atom");
      return AtomMeasure::uniform(delta, n);
    }
    return AtomMeasure(numbers(*j, "theta", path, {}), numbers(*j, "weight", path, {}));
  } catch (const DomainError& e) {
    throw ConfigError(path, e.what());
  }
}

inline BoundedProcess bounded(const json* j, const std::string& path) {
  if (!j) return BoundedProcess::constant(0.0);
  if (j->is_number()) {
    const double v = j->get<double>();
    if (!(v >= 0.0)) throw ConfigError(path, "must be nonnegative");
    return BoundedProcess::constant(v);
  }
  if (!j->is_array() || j->empty()) throw ConfigError(path, "expected a number or a list of [t, value] pairs");
  BoundedProcess k;
  k.table.clear();
  double last = -1.0;
  for (std::size_t i = 0; i < j->size(); ++i) {
    const json& row = (*j)[i];
    const std::string rp = path + "[" + std::to_string(i) + "]";
    if (!row.is_array() || row.size() != 2 || !row[0].is_number() || !row[1].is_number()) {
      throw ConfigError(rp, "expected [t, value]");
    }
    const double t = row[0].get<double>(), v = row[1].get<double>();
    if (!(t > last)) throw ConfigError(rp, "times must be increasing");
    if (!(v >= 0.0)) throw ConfigError(rp, "value must be nonnegative");
    if (i == 0 && t != 0.0) throw ConfigError(rp, "first breakpoint must be at t = 0");
    last = t;
    k.table.emplace_back(t, v);
  }
  return k;
}

inline IncreasingProcessSpec increasing(const json* j, const std::string& path) {
  if (!j) return IncreasingProcessSpec::identity();
  require_object(*j, path);
  const std::string kind = string(*j, "kind", path, "identity");
  if (kind == "identity") {
    only_keys(*j, path, {"kind"});
    return IncreasingProcessSpec::identity();
  }
  if (kind == "zero") {
    only_keys(*j, path, {"kind"});
    return IncreasingProcessSpec::zero();
  }
  if (kind == "power") {
    only_keys(*j, path, {"kind", "power", "scale"});
    const double p = positive(*j, "power", path, 1.0);
    const double s = number(*j, "scale", path, 1.0);
    if (s < 0.0) throw ConfigError(join(path, "scale"), "must be nonnegative");
    return IncreasingProcessSpec::power(p, s);
  }
  if (kind == "running-maximum") {
    only_keys(*j, path, {"kind", "component"});
    return IncreasingProcessSpec::running_maximum(count(*j, "component", path, 0));
  }
  if (kind == "time-integral") {
    only_keys(*j, path, {"kind", "phi", "scale", "component"});
    const std::string phi = string(*j, "phi", path, "abs");
    const double s = number(*j, "scale", path, 1.0);
    if (s < 0.0) throw ConfigError(join(path, "scale"), "must be nonnegative");
    const auto comp = count(*j, "component", path, 0);
    if (phi == "abs") return IncreasingProcessSpec::time_integral([s](double w) { return s * std::abs(w); }, "int|W|", comp);
    if (phi == "square") return IncreasingProcessSpec::time_integral([s](double w) { return s * w * w; }, "intW^2", comp);
    if (phi == "one-plus-square") {
      return IncreasingProcessSpec::time_integral([s](double w) { return s * (1.0 + w * w); }, "int(1+W^2)", comp);
    }
    throw ConfigError(join(path, "phi"), "unknown functional '" + phi + "' (abs, square, one-plus-square)");
  }
  if (kind == "oscillatory") {
    only_keys(*j, path, {"kind", "base", "n"});
    return IncreasingProcessSpec::oscillatory(increasing(find(*j, "base"), join(path, "base")),
                                              positive(*j, "n", path, 1.0));
  }
  throw ConfigError(join(path, "kind"), "unknown increasing process '" + kind + "'");
}

/// Driver entry {"name", "params", "offset"}; offset adds a constant.
inline Driver driver(const json* j, const std::string& path, bool is_F, const GeneratorContext& ctx) {
  if (!j) return Driver{};
  require_object(*j, path);
  only_keys(*j, path, {"name", "params", "offset"});
  const std::string name = string(*j, "name", path, "zero");
  auto& reg = GeneratorRegistry::instance();
  if (is_F ? !reg.has_F(name) : !reg.has_G(name)) {
    throw ConfigError(join(path, "name"), std::string("no ") + (is_F ? "F" : "G") + " generator named '" + name + "'");
  }
  Driver d;
  try {
    d = is_F ? reg.make_F(name, params(*j, path), ctx) : reg.make_G(name, params(*j, path), ctx);
  } catch (const DomainError& e) {
    throw ConfigError(join(path, "params"), e.what());
  }
  const double offset = number(*j, "offset", path, 0.0);
  if (offset != 0.0) {
    Driver inner = d;
    d.name = inner.name + "+offset";
    d.eval = [inner, offset](const GeneratorArgs& a, std::span<double> out) {
      inner(a, out);
      for (double& v : out) v += offset;
    };
  }
  return d;
}

/// Terminal entry {"name", "params", "shift"}; shift adds a constant.
inline Terminal terminal(const json* j, const std::string& path, const GeneratorContext& ctx) {
  if (!j) return Terminal{};
  require_object(*j, path);
  only_keys(*j, path, {"name", "params", "shift"});
  const std::string name = string(*j, "name", path, "zero");
  auto& reg = GeneratorRegistry::instance();
  if (!reg.has_terminal(name)) throw ConfigError(join(path, "name"), "no terminal named '" + name + "'");
  Terminal t;
  try {
    t = reg.make_terminal(name, params(*j, path), ctx);
  } catch (const DomainError& e) {
    throw ConfigError(join(path, "params"), e.what());
  }
  const double shift = number(*j, "shift", path, 0.0);
  if (shift != 0.0) {
    Terminal inner = t;
    t.name = inner.name + "+shift";
    t.eval = [inner, shift](const TerminalArgs& a, std::span<double> out) {
      inner(a, out);
      for (double& v : out) v += shift;
    };
  }
  return t;
}

inline ProblemSpec problem(const json& j, const std::string& path) {
  require_object(j, path);
  only_keys(j, path, {"name", "T", "delta", "m", "d", "xi", "F", "G", "A", "constants", "K", "K_tilde", "rho",
                      "rho_tilde"});
  ProblemSpec pb;
  pb.name = string(j, "name", path, "problem");
  pb.T = positive(j, "T", path, 1.0);
  pb.delta = positive(j, "delta", path, 0.1);
  if (pb.delta > pb.T) throw ConfigError(join(path, "delta"), "must not exceed T");
  pb.m = count(j, "m", path, 1);
  pb.d = count(j, "d", path, 1);
  if (pb.m == 0) throw ConfigError(join(path, "m"), "must be positive");
  if (pb.d == 0) throw ConfigError(join(path, "d"), "must be positive");
  pb.rho = measure(find(j, "rho"), join(path, "rho"), pb.delta);
  pb.rho_tilde = measure(find(j, "rho_tilde"), join(path, "rho_tilde"), pb.delta);
  for (const auto* key : {"rho", "rho_tilde"}) {
    const AtomMeasure& mu = std::string(key) == "rho" ? pb.rho : pb.rho_tilde;
    for (double th : mu.theta()) {
      if (th < -pb.delta * (1.0 + 1e-12)) throw ConfigError(join(path, key), "atom below -delta");
    }
  }
  GeneratorContext ctx{pb.m, pb.d, pb.rho};
  pb.xi = terminal(find(j, "xi"), join(path, "xi"), ctx);
  pb.F = driver(find(j, "F"), join(path, "F"), true, ctx);
  ctx.rho = pb.rho_tilde;
  pb.G = driver(find(j, "G"), join(path, "G"), false, ctx);
  pb.A = increasing(find(j, "A"), join(path, "A"));
  if (const json* c = find(j, "constants")) {
    const std::string cp = join(path, "constants");
    require_object(*c, cp);
    only_keys(*c, cp, {"beta", "L", "L_tilde", "c"});
    pb.constants.beta = positive(*c, "beta", cp, pb.constants.beta);
    pb.constants.L = positive(*c, "L", cp, pb.constants.L);
    pb.constants.L_tilde = positive(*c, "L_tilde", cp, pb.constants.L_tilde);
    pb.constants.c = positive(*c, "c", cp, pb.constants.c);
  }
  pb.K = bounded(find(j, "K"), join(path, "K"));
  pb.K_tilde = bounded(find(j, "K_tilde"), join(path, "K_tilde"));
  return pb;
}

}  // namespace cfg

/// Reads a JSON file, reporting syntax errors as ConfigError.
inline json load_json(const std::filesystem::path& file) {
  std::ifstream is(file);
  if (!is) throw ConfigError(file.string(), "cannot open file");
  try {
    return json::parse(is);
  } catch (const json::parse_error& e) {
    throw ConfigError(file.string(), e.what());
  }
}

/// Replaces string references in "problem" by the referenced file contents.
inline void resolve_references(json& raw, const std::filesystem::path& base_dir) {
  if (raw.is_object() && raw.contains("problem") && raw["problem"].is_string()) {
    raw["problem"] = load_json(base_dir / raw["problem"].get<std::string>());
  }
}

namespace detail {

/// Member problem JSONs of a family section, as merge patches over the base.
inline std::vector<std::pair<double, json>> family_members(const json& fam, const json& base, const std::string& path) {
  std::vector<std::pair<double, json>> out;
  const std::string type = cfg::string(fam, "perturbation", path, "members");
  if (type == "members") {
    const json* ms = cfg::find(fam, "members");
    if (!ms || !ms->is_array() || ms->empty()) throw ConfigError(cfg::join(path, "members"), "expected a nonempty array");
    for (std::size_t i = 0; i < ms->size(); ++i) {
      const std::string mp = cfg::join(path, "members") + "[" + std::to_string(i) + "]";
      const json& m = (*ms)[i];
      cfg::require_object(m, mp);
      cfg::only_keys(m, mp, {"n", "problem"});
      json merged = base;
      if (const json* patch = cfg::find(m, "problem")) merged.merge_patch(*patch);
      out.emplace_back(cfg::number(m, "n", mp, static_cast<double>(i + 1)), merged);
    }
    return out;
  }
  const auto ns = cfg::numbers(fam, "n", path, {1, 2, 4, 8, 16});
  const double scale = cfg::number(fam, "scale", path, 1.0);
  for (std::size_t i = 0; i < ns.size(); ++i) {
    const double n = ns[i];
    if (!(n > 0.0)) throw ConfigError(cfg::join(path, "n") + "[" + std::to_string(i) + "]", "must be positive");
    json merged = base;
    if (type == "oscillatory-A") {
      json a = base.contains("A") ? base["A"] : json{{"kind", "identity"}};
      merged["A"] = {{"kind", "oscillatory"}, {"base", a}, {"n", n}};
    } else if (type == "terminal-shift") {
      json xi = base.contains("xi") ? base["xi"] : json{{"name", "zero"}};
      xi["shift"] = cfg::number(xi, "shift", cfg::join(path, "xi"), 0.0) + scale / n;
      merged["xi"] = xi;
    } else if (type == "driver-offset") {
      json F = base.contains("F") ? base["F"] : json{{"name", "zero"}};
      F["offset"] = cfg::number(F, "offset", cfg::join(path, "F"), 0.0) + scale / n;
      merged["F"] = F;
    } else {
      throw ConfigError(cfg::join(path, "perturbation"),
                        "unknown perturbation '" + type + "' (members, oscillatory-A, terminal-shift, driver-offset)");
    }
    out.emplace_back(n, merged);
  }
  return out;
}

}  // namespace detail

/// Parses a raw config (references already resolved). Throws ConfigError.
inline ExperimentConfig parse_config(const json& raw) {
  cfg::require_object(raw, "$");
  cfg::only_keys(raw, "$",
                 {"mode", "problem", "family", "helly_bray", "engine", "solver", "stability", "checks", "output"});
  ExperimentConfig c;
  c.canonical = raw;
  const std::string mode = cfg::string(raw, "mode", "$", "solve");
  const auto m = parse_mode(mode);
  if (!m) throw ConfigError("$.mode", "unknown mode '" + mode + "'");
  c.mode = *m;
  c.output = cfg::string(raw, "output", "$", "out");

  if (const json* e = cfg::find(raw, "engine")) {
    cfg::require_object(*e, "$.engine");
    cfg::only_keys(*e, "$.engine", {"seed", "n_paths", "n_steps", "degree", "ridge", "threads", "dump_ensemble",
                                    "load_ensemble"});
    c.engine.seed = cfg::count(*e, "seed", "$.engine", c.engine.seed);
    c.engine.n_paths = cfg::count(*e, "n_paths", "$.engine", c.engine.n_paths);
    c.engine.n_steps = cfg::count(*e, "n_steps", "$.engine", c.engine.n_steps);
    c.engine.basis.degree = cfg::count(*e, "degree", "$.engine", c.engine.basis.degree);
    c.engine.basis.ridge = cfg::number(*e, "ridge", "$.engine", c.engine.basis.ridge);
    c.engine.threads = static_cast<unsigned>(cfg::count(*e, "threads", "$.engine", c.engine.threads));
    c.engine.dump_ensemble = cfg::string(*e, "dump_ensemble", "$.engine", "");
    c.engine.load_ensemble = cfg::string(*e, "load_ensemble", "$.engine", "");
    if (c.engine.n_paths < 2) throw ConfigError("$.engine.n_paths", "need at least 2 paths");
    if (c.engine.n_steps < 1) throw ConfigError("$.engine.n_steps", "need at least 1 step");
    if (c.engine.basis.ridge < 0.0) throw ConfigError("$.engine.ridge", "must be nonnegative");
    if (c.engine.threads == 0) throw ConfigError("$.engine.threads", "must be positive");
  }
  c.solver.basis = c.engine.basis;
  c.solver.threads = c.engine.threads;

  if (const json* s = cfg::find(raw, "solver")) {
    cfg::require_object(*s, "$.solver");
    cfg::only_keys(*s, "$.solver", {"tol", "max_iter", "scheme", "override_assumptions", "slack", "bdg_constant"});
    c.solver.tol = cfg::number(*s, "tol", "$.solver", c.solver.tol);
    if (!(c.solver.tol > 0.0)) throw ConfigError("$.solver.tol", "must be positive");
    c.solver.max_iter = cfg::count(*s, "max_iter", "$.solver", c.solver.max_iter);
    if (c.solver.max_iter == 0) throw ConfigError("$.solver.max_iter", "must be positive");
    const std::string scheme = cfg::string(*s, "scheme", "$.solver", "explicit");
    if (scheme == "explicit") {
      c.solver.scheme = Scheme::explicit_euler;
    } else if (scheme == "implicit") {
      c.solver.scheme = Scheme::implicit_euler;
    } else {
      throw ConfigError("$.solver.scheme", "expected 'explicit' or 'implicit'");
    }
    c.solver.override_assumptions = cfg::boolean(*s, "override_assumptions", "$.solver", false);
    c.solver.slack = cfg::number(*s, "slack", "$.solver", c.solver.slack);
    c.solver.bdg_constant = cfg::positive(*s, "bdg_constant", "$.solver", c.solver.bdg_constant);
  }
  c.stability.solver = c.solver;

  if (const json* s = cfg::find(raw, "stability")) {
    cfg::require_object(*s, "$.stability");
    cfg::only_keys(*s, "$.stability", {"threshold", "box", "samples", "nu_grid"});
    c.stability.threshold = cfg::positive(*s, "threshold", "$.stability", c.stability.threshold);
    c.stability.box = cfg::positive(*s, "box", "$.stability", c.stability.box);
    c.stability.sup_samples = cfg::count(*s, "samples", "$.stability", c.stability.sup_samples);
    c.stability.nu_grid = cfg::numbers(*s, "nu_grid", "$.stability", c.stability.nu_grid);
  }

  if (const json* s = cfg::find(raw, "checks")) {
    cfg::require_object(*s, "$.checks");
    cfg::only_keys(*s, "$.checks", {"probe_samples", "p", "r_ladder"});
    c.checks.probe_samples = cfg::count(*s, "probe_samples", "$.checks", c.checks.probe_samples);
    c.checks.integrability.p = cfg::number(*s, "p", "$.checks", c.checks.integrability.p);
    if (!(c.checks.integrability.p > 1.0)) throw ConfigError("$.checks.p", "must exceed 1");
    c.checks.integrability.r_ladder = cfg::numbers(*s, "r_ladder", "$.checks", c.checks.integrability.r_ladder);
  }

  const json* pj = cfg::find(raw, "problem");
  if (pj) c.problem = cfg::problem(*pj, "$.problem");
  if ((c.mode == Mode::solve || c.mode == Mode::check_assumptions || c.mode == Mode::stability) && !pj) {
    throw ConfigError("$.problem", std::string("required in mode ") + to_string(c.mode));
  }

  if (const json* fj = cfg::find(raw, "family")) {
    cfg::require_object(*fj, "$.family");
    cfg::only_keys(*fj, "$.family", {"p", "perturbation", "n", "scale", "members"});
    if (!pj) throw ConfigError("$.problem", "a family needs a base problem");
    PerturbationFamily fam;
    fam.base = *c.problem;
    fam.p = cfg::number(*fj, "p", "$.family", 2.0);
    if (!(fam.p > 1.0)) throw ConfigError("$.family.p", "must exceed 1");
    const auto members = detail::family_members(*fj, *pj, "$.family");
    for (std::size_t i = 0; i < members.size(); ++i) {
      fam.index.push_back(members[i].first);
      fam.members.push_back(cfg::problem(members[i].second, "$.family.members[" + std::to_string(i) + "]"));
    }
    c.family = std::move(fam);
  } else if (c.mode == Mode::stability) {
    throw ConfigError("$.family", "required in mode stability");
  }

  if (const json* hj = cfg::find(raw, "helly_bray")) {
    const std::string hp = "$.helly_bray";
    cfg::require_object(*hj, hp);
    cfg::only_keys(*hj, hp, {"family", "n", "nu", "tol", "mode", "eval", "T", "tail_level"});
    const std::string fam = cfg::string(*hj, "family", hp, "brownian-oscillatory");
    if (fam == "brownian-oscillatory") {
      c.helly_bray.family = HellyBrayFamily::brownian_oscillatory;
    } else if (fam == "deterministic-oscillatory") {
      c.helly_bray.family = HellyBrayFamily::deterministic_oscillatory;
    } else if (fam == "counterexample") {
      c.helly_bray.family = HellyBrayFamily::counterexample;
    } else if (fam == "identical") {
      c.helly_bray.family = HellyBrayFamily::identical;
    } else {
      throw ConfigError(hp + ".family", "unknown family '" + fam + "'");
    }
    c.helly_bray.n = cfg::numbers(*hj, "n", hp, c.helly_bray.n);
    for (double n : c.helly_bray.n) {
      if (!(n > 0.0)) throw ConfigError(hp + ".n", "entries must be positive");
    }
    c.helly_bray.options.nu_ladder = cfg::numbers(*hj, "nu", hp, c.helly_bray.options.nu_ladder);
    c.helly_bray.options.tol = cfg::positive(*hj, "tol", hp, c.helly_bray.options.tol);
    c.helly_bray.options.tail_level = cfg::positive(*hj, "tail_level", hp, c.helly_bray.options.tail_level);
    c.helly_bray.T = cfg::positive(*hj, "T", hp, c.helly_bray.T);
    const std::string bv = cfg::string(*hj, "mode", hp, "linear");
    if (bv != "linear" && bv != "step") throw ConfigError(hp + ".mode", "expected 'linear' or 'step'");
    c.helly_bray.options.mode = bv == "step" ? BVMode::step : BVMode::linear;
    const std::string ev = cfg::string(*hj, "eval", hp, "left");
    if (ev == "left") {
      c.helly_bray.options.stieltjes.eval = EvalPoint::left;
    } else if (ev == "midpoint") {
      c.helly_bray.options.stieltjes.eval = EvalPoint::midpoint;
    } else if (ev == "right") {
      c.helly_bray.options.stieltjes.eval = EvalPoint::right;
    } else {
      throw ConfigError(hp + ".eval", "expected 'left', 'midpoint' or 'right'");
    }
  }
  return c;
}

/// Cross-field rules that need a parsed config.
inline std::vector<Diagnostic> cross_checks(const ExperimentConfig& c) {
  std::vector<Diagnostic> out;
  auto check_problem = [&](const ProblemSpec& pb, const std::string& path) {
    const Constants& k = pb.constants;
    if (!(k.beta > 2.0 * std::numbers::sqrt2 * k.L_tilde)) {
      std::ostringstream os;
      os << "beta <= 2*sqrt(2)*L_tilde (beta=" << k.beta << ", 2*sqrt(2)*L_tilde=" << 2.0 * std::numbers::sqrt2 * k.L_tilde
         << ")";
      out.push_back({path + ".constants.beta", os.str()});
    } else {
      const double thr = c_threshold(k.beta, k.L_tilde);
      if (!(k.c < thr)) {
        std::ostringstream os;
        os << "c=" << k.c << " must be below c_threshold=" << thr;
        out.push_back({path + ".constants.c", os.str()});
      }
    }
    const double ratio = pb.delta * static_cast<double>(c.engine.n_steps) / pb.T;
    if (std::abs(ratio - std::round(ratio)) > TimeGrid::kAlignTol * std::max(1.0, ratio) || std::round(ratio) < 1.0) {
      std::ostringstream os;
      os << "delta=" << pb.delta << " is not a whole number of steps of T/n_steps=" << pb.T / c.engine.n_steps;
      if (auto n = nearest_aligned_steps(pb.T, pb.delta, c.engine.n_steps)) {
        os << "; nearest valid n_steps is " << *n;
      }
      out.push_back({"$.engine.n_steps", os.str()});
    }
  };
  if (c.problem) check_problem(*c.problem, "$.problem");
  if (c.family) {
    for (std::size_t i = 0; i < c.family->members.size(); ++i) {
      const auto& mb = c.family->members[i];
      const auto& b = c.family->base;
      if (mb.constants.beta != b.constants.beta || mb.constants.L != b.constants.L ||
          mb.constants.L_tilde != b.constants.L_tilde || mb.constants.c != b.constants.c) {
        out.push_back({"$.family.members[" + std::to_string(i) + "]", "constants differ from the base problem"});
      }
      if (mb.T != b.T || mb.delta != b.delta || mb.m != b.m || mb.d != b.d) {
        out.push_back({"$.family.members[" + std::to_string(i) + "]", "T, delta or dimensions differ from the base"});
      }
    }
  }
  if (c.problem && c.mode != Mode::helly_bray) {
    const ProblemSpec& pb = *c.problem;
    const std::size_t vars = pb.d * (1 + (pb.F.delayed ? 1 : 0) + (pb.G.delayed ? 1 : 0)) + (pb.A.is_stochastic() ? 1 : 0);
    const std::size_t features = monomial_exponents(vars, c.engine.basis.degree).size();
    if (c.engine.n_paths <= features) {
      std::ostringstream os;
      os << "n_paths=" << c.engine.n_paths << " does not exceed the " << features << " regression features";
      out.push_back({"$.engine.n_paths", os.str()});
    }
  }
  return out;
}

/// Every reason `run` would refuse the config at startup; empty when it is runnable.
inline std::vector<Diagnostic> validate(const json& raw) {
  try {
    return cross_checks(parse_config(raw));
  } catch (const ConfigError& e) {
    return {{e.path(), e.message()}};
  } catch (const Error& e) {
    return {{"$", e.what()}};
  }
}

namespace detail {

inline std::ofstream open_output(const std::filesystem::path& file) {
  std::ofstream os(file, std::ios::binary);
  if (!os) throw DomainError("cannot write " + file.string());
  return os;
}

/// t, path mean per component, then the first few sample paths.
inline void write_solution_csv(const std::filesystem::path& file, const PathArray& X, const TimeGrid& g,
                               std::size_t samples = 4) {
  auto os = open_output(file);
  const std::size_t k = std::min(samples, X.paths());
  os << "t";
  for (std::size_t c = 0; c < X.dim(); ++c) os << ",mean_" << (c + 1);
  for (std::size_t p = 0; p < k; ++p) {
    for (std::size_t c = 0; c < X.dim(); ++c) os << ",path" << p << "_" << (c + 1);
  }
  os << '\n';
  for (std::size_t i = 0; i < g.size(); ++i) {
    os << format_double(g[i]);
    for (std::size_t c = 0; c < X.dim(); ++c) {
      double s = 0.0;
      for (std::size_t p = 0; p < X.paths(); ++p) s += X(i, p, c);
      os << ',' << format_double(s / static_cast<double>(X.paths()));
    }
    for (std::size_t p = 0; p < k; ++p) {
      for (std::size_t c = 0; c < X.dim(); ++c) os << ',' << format_double(X(i, p, c));
    }
    os << '\n';
  }
}

inline void write_diagnostics_csv(const std::filesystem::path& file, const std::vector<IterationRecord>& diag) {
  auto os = open_output(file);
  os << "iteration,norm,ratio,mu_lambda,martingale_residual\n";
  for (const auto& r : diag) {
    os << r.iteration << ',' << format_double(r.norm) << ',' << format_double(r.ratio) << ','
       << format_double(r.mu_lambda) << ',' << format_double(r.martingale_residual) << '\n';
  }
}

inline void write_hellybray_csv(const std::filesystem::path& file, const HellyBrayReport& rep) {
  auto os = open_output(file);
  os << "n,nu,phi_distance,ks,pathwise_sup\n";
  for (const auto& r : rep.rows) {
    for (std::size_t k = 0; k < rep.nu_ladder.size(); ++k) {
      os << format_double(r.n) << ',' << format_double(rep.nu_ladder[k]) << ',' << format_double(r.phi[k]) << ','
         << format_double(r.ks) << ',' << format_double(r.pathwise_sup) << '\n';
    }
  }
}

inline void write_tail_csv(const std::filesystem::path& file, const std::vector<TailPoint>& tail) {
  auto os = open_output(file);
  os << "nu,fraction\n";
  for (const auto& t : tail) os << format_double(t.nu) << ',' << format_double(t.fraction) << '\n';
}

inline PathEnsemble make_ensemble(const ExperimentConfig& c, double T, double delta, std::size_t d) {
  if (!c.engine.load_ensemble.empty()) {
    PathEnsemble e = load_ensemble(c.engine.load_ensemble);
    e.A.reset();
    if (e.dim() != d) throw DomainError("loaded ensemble has the wrong Brownian dimension");
    if (std::abs(e.grid->horizon() - T) > 1e-12) throw DomainError("loaded ensemble has the wrong horizon");
    return e;
  }
  auto grid = make_grid(TimeGrid::uniform(T, c.engine.n_steps, delta));
  return simulate_brownian(grid, c.engine.n_paths, d, c.engine.seed, c.engine.threads);
}

/// Table row for check-assumptions.
struct CheckRow {
  std::string check;
  double value = 0.0;
  double threshold = 0.0;
  std::string status;
};

inline void print_table(std::ostream& log, const std::vector<CheckRow>& rows) {
  log << std::left << std::setw(58) << "check" << std::setw(16) << "value" << std::setw(16) << "threshold"
      << "status\n";
  for (const auto& r : rows) {
    log << std::left << std::setw(58) << r.check << std::setw(16) << r.value << std::setw(16) << r.threshold
        << r.status << '\n';
  }
}

struct Outcome {
  int exit_code = 0;
  std::string verdict = "PASS";
  std::vector<std::string> outputs;
  std::vector<std::string> warnings;
};

inline Outcome run_check_assumptions(const ExperimentConfig& c, const std::filesystem::path& out, std::ostream& log) {
  const ProblemSpec& pb = *c.problem;
  Outcome o;
  std::vector<CheckRow> rows;
  const double thr2 = 2.0 * std::numbers::sqrt2 * pb.constants.L_tilde;
  rows.push_back({"beta > 2*sqrt(2)*L_tilde", pb.constants.beta, thr2, pb.constants.beta > thr2 ? "PASS" : "FAIL"});
  const double cthr = c_threshold(pb.constants.beta, pb.constants.L_tilde);
  rows.push_back({"c < c_threshold", pb.constants.c, cthr, pb.constants.c < cthr ? "PASS" : "FAIL"});

  const PathEnsemble ens =
      realize_increasing_process(pb.A, make_ensemble(c, pb.T, pb.delta, pb.d), c.engine.threads);
  const std::size_t window = delay_window(*ens.grid, pb.delta);
  for (const auto& chk : {check_H1(pb, ens, pb.constants.c), check_H2(pb, ens, pb.constants.c)}) {
    const double worst = *std::max_element(chk.lhs.begin(), chk.lhs.end());
    std::ostringstream name;
    name << chk.name << " (worst path; fail fraction " << chk.fail_fraction << ")";
    rows.push_back({name.str(), worst, chk.c, chk.all_pass() ? "PASS" : "FAIL"});
  }
  try {
    const LambdaChoice lam = select_lambda(pb.constants.c, pb.constants.beta, pb.constants.L_tilde);
    rows.push_back({"mu_lambda < 1 (lambda=" + format_double(lam.lambda).substr(0, 8) + ")", lam.mu, 1.0, "PASS"});
  } catch (const ConstraintViolation&) {
    rows.push_back({"mu_lambda < 1", NAN, 1.0, "FAIL"});
  }

  ProbeSpec probe;
  probe.m = pb.m;
  probe.d = pb.d;
  probe.T = pb.T;
  probe.delta = pb.delta;
  probe.window = window;
  probe.samples = c.checks.probe_samples;
  probe.seed = c.engine.seed;
  double K1 = 0.0, Kt1 = 0.0;
  for (std::size_t p = 0; p < ens.paths(); ++p) {
    K1 = std::max(K1, pb.K.sup(*ens.grid, p, &ens));
    Kt1 = std::max(Kt1, pb.K_tilde.sup(*ens.grid, p, &ens));
  }
  probe.rho = pb.rho;
  const auto pf = probe_lipschitz(pb.F, DriverRole::F, probe, pb.constants.L, K1);
  probe.rho = pb.rho_tilde;
  const auto pg = probe_lipschitz(pb.G, DriverRole::G, probe, pb.constants.L_tilde, Kt1);
  rows.push_back({"F Lipschitz in (y,z) (empirical vs L)", pf.lipschitz, pb.constants.L,
                  pf.lipschitz_violation ? "FAIL" : "PASS"});
  rows.push_back({"F delay constant (empirical vs K_1)", pf.delay, K1, pf.delay_violation ? "FAIL" : "PASS"});
  rows.push_back({"G Lipschitz in y (empirical vs L_tilde)", pg.lipschitz, pb.constants.L_tilde,
                  pg.lipschitz_violation ? "FAIL" : "PASS"});
  rows.push_back({"G delay constant (empirical vs K~_1)", pg.delay, Kt1, pg.delay_violation ? "FAIL" : "PASS"});

  for (const auto& mom : check_integrability(pb, ens, c.checks.integrability)) {
    std::string status = "PASS";
    if (!mom.finite) {
      status = "FAIL";
    } else if (mom.heavy_tail) {
      status = "WARN";
      o.warnings.push_back(mom.name + ": top 1% of samples carry more than half of the estimate");
    }
    rows.push_back({mom.name, mom.value, NAN, status});
  }

  print_table(log, rows);
  auto os = open_output(out / "assumptions.csv");
  os << "check,value,threshold,status\n";
  for (const auto& r : rows) {
    os << '"' << r.check << '"' << ',' << format_double(r.value) << ',' << format_double(r.threshold) << ','
       << r.status << '\n';
  }
  o.outputs.push_back("assumptions.csv");
  const bool fail = std::any_of(rows.begin(), rows.end(), [](const CheckRow& r) { return r.status == "FAIL"; });
  o.exit_code = fail ? 2 : 0;
  o.verdict = fail ? "FAIL" : "PASS";
  return o;
}

inline Outcome run_solve(const ExperimentConfig& c, const std::filesystem::path& out, std::ostream& log) {
  const ProblemSpec& pb = *c.problem;
  Outcome o;
  const PathEnsemble ens = make_ensemble(c, pb.T, pb.delta, pb.d);
  const SolveResult res = solve(pb, ens, c.solver);
  o.warnings = res.warnings;
  if (!c.engine.dump_ensemble.empty()) save_ensemble(c.engine.dump_ensemble, res.ensemble);
  write_solution_csv(out / "solution_Y.csv", res.solution.Y, *ens.grid);
  write_solution_csv(out / "solution_Z.csv", res.solution.Z, *ens.grid);
  write_diagnostics_csv(out / "diagnostics.csv", res.diagnostics);
  o.outputs = {"solution_Y.csv", "solution_Z.csv", "diagnostics.csv"};
  const ContractionReport cr = contraction_report(res.diagnostics, c.solver.slack);
  double y0 = 0.0;
  for (std::size_t p = 0; p < ens.paths(); ++p) y0 += res.solution.Y(0, p);
  log << "problem " << pb.name << ": " << res.diagnostics.size() << " Picard iterations, "
      << (res.converged ? "converged" : "not converged") << "\n"
      << "E[Y(0,1)] = " << format_double(y0 / static_cast<double>(ens.paths())) << "\n"
      << "mu_lambda = " << res.lambda.mu << " (lambda = " << res.lambda.lambda << "), max tail ratio = "
      << cr.max_tail << ", contraction " << to_string(cr.verdict) << "\n"
      << "last increment (squared equivalent norm) = " << res.self_consistency << "\n";
  for (const auto& w : res.warnings) log << "warning: " << w << "\n";
  const bool ok = res.converged && cr.verdict != Verdict::fail;
  o.exit_code = ok ? 0 : 2;
  o.verdict = ok ? "PASS" : "FAIL";
  return o;
}

inline Outcome run_stability_mode(const ExperimentConfig& c, const std::filesystem::path& out, std::ostream& log) {
  const PerturbationFamily& fam = *c.family;
  Outcome o;
  const PathEnsemble ens = make_ensemble(c, fam.base.T, fam.base.delta, fam.base.d);
  StabilityOptions so = c.stability;
  so.keep_paths = true;
  const StabilityReport rep = run_stability(fam, ens, so);
  {
    auto os = open_output(out / "stability.csv");
    os << "n,delta_xi,delta_F,delta_G,sup_A_diff,bv_H,error,exp_q_beta_AT\n";
    for (const auto& r : rep.rows) {
      os << format_double(r.n) << ',' << format_double(r.delta_xi) << ',' << format_double(r.delta_F) << ','
         << format_double(r.delta_G) << ',' << format_double(r.sup_A_diff) << ',' << format_double(r.bv_H) << ','
         << format_double(r.error) << ',' << format_double(r.exp_q_moment) << '\n';
    }
  }
  write_tail_csv(out / "bv_tail.csv", rep.tail);
  // Helly-Bray proxy on the solution: int <Y^n dA^n> against int <Y dA>.
  HellyBrayOptions hb = c.helly_bray.options;
  const HellyBrayReport hbr = helly_bray_stochastic_check(fam.index, rep.member_Y, rep.member_A, rep.base_Y,
                                                          rep.base_A, hb);
  write_hellybray_csv(out / "hellybray.csv", hbr);
  o.outputs = {"stability.csv", "bv_tail.csv", "hellybray.csv"};
  log << "stability over " << rep.rows.size() << " members (sup box |y|,|z| <= " << rep.box << ", "
      << rep.sup_samples << " Halton samples)\n";
  for (const auto& r : rep.rows) log << "  n=" << r.n << "  error=" << r.error << "  bv_H=" << r.bv_H << "\n";
  log << "Spearman(error, n) = " << rep.spearman << ", final error " << rep.rows.back().error << " vs threshold "
      << so.threshold << ": " << to_string(rep.verdict()) << "\n";
  o.exit_code = rep.verdict() == Verdict::pass ? 0 : 2;
  o.verdict = to_string(rep.verdict());
  return o;
}

/// X, X_n, H, H_n for the configured Helly-Bray family.
struct HellyBrayInputs {
  PathArray X, H;
  std::vector<PathArray> X_n, H_n;
};

inline HellyBrayInputs helly_bray_inputs(const ExperimentConfig& c) {
  const HellyBrayConfig& hc = c.helly_bray;
  const auto grid = TimeGrid::uniform(hc.T, c.engine.n_steps);
  const std::size_t N = grid.size();
  const double pi = std::numbers::pi;
  const double T = hc.T;
  auto deterministic = [&](auto&& f) {
    PathArray a(N, 1, 1);
    for (std::size_t i = 0; i < N; ++i) a(i, 0) = f(grid[i]);
    return a;
  };
  auto oscillatory = [&](double n) {
    return deterministic([&](double t) { return t + T * std::sin(2.0 * pi * n * t / T) / (4.0 * pi * n); });
  };
  HellyBrayInputs in;
  switch (hc.family) {
    case HellyBrayFamily::deterministic_oscillatory:
      in.X = deterministic([](double t) { return t; });
      in.H = in.X;
      for (double n : hc.n) {
        in.X_n.push_back(in.X);
        in.H_n.push_back(oscillatory(n));
      }
      break;
    case HellyBrayFamily::counterexample:
      // ||H_n||_BV = n while X_n, H_n -> 0 uniformly.
      in.X = deterministic([](double) { return 0.0; });
      in.H = in.X;
      for (double n : hc.n) {
        in.X_n.push_back(deterministic([&](double t) { return std::cos(2.0 * pi * n * n * t / T) / std::sqrt(n); }));
        in.H_n.push_back(deterministic([&](double t) { return T * std::sin(2.0 * pi * n * n * t / T) / (4.0 * n); }));
      }
      break;
    case HellyBrayFamily::brownian_oscillatory:
    case HellyBrayFamily::identical: {
      const bool identical = hc.family == HellyBrayFamily::identical;
      const auto ens = simulate_brownian(make_grid(grid), c.engine.n_paths, 2, c.engine.seed, c.engine.threads);
      const PathArray& W = *ens.W;
      in.X = PathArray(N, W.paths(), 1);
      for (std::size_t i = 0; i < N; ++i) {
        for (std::size_t p = 0; p < W.paths(); ++p) in.X(i, p) = W(i, p, 0);
      }
      in.H = deterministic([](double t) { return t; });
      for (double n : hc.n) {
        if (identical) {
          in.X_n.push_back(in.X);
          in.H_n.push_back(in.H);
          continue;
        }
        // X_n = W_1 + W_2 / n, driven by an independent second component.
        PathArray xn(N, W.paths(), 1);
        for (std::size_t i = 0; i < N; ++i) {
          for (std::size_t p = 0; p < W.paths(); ++p) xn(i, p) = W(i, p, 0) + W(i, p, 1) / n;
        }
        in.X_n.push_back(std::move(xn));
        in.H_n.push_back(oscillatory(n));
      }
      break;
    }
  }
  return in;
}

inline Outcome run_helly_bray(const ExperimentConfig& c, const std::filesystem::path& out, std::ostream& log) {
  Outcome o;
  const HellyBrayInputs in = helly_bray_inputs(c);
  const HellyBrayReport rep =
      helly_bray_stochastic_check(c.helly_bray.n, in.X_n, in.H_n, in.X, in.H, c.helly_bray.options);
  write_hellybray_csv(out / "hellybray.csv", rep);
  write_tail_csv(out / "bv_tail.csv", rep.tail);
  o.outputs = {"hellybray.csv", "bv_tail.csv"};
  for (const auto& r : rep.rows) {
    const double worst = r.phi.empty() ? 0.0 : *std::max_element(r.phi.begin(), r.phi.end());
    log << "  n=" << r.n << "  max phi distance=" << worst << "  KS=" << r.ks << "  E sup|I_n - I|=" << r.pathwise_sup
        << "\n";
  }
  if (!rep.precondition_ok) {
    o.warnings.push_back("BV tail never drops below the configured level; the tightness precondition fails");
  }
  log << "verdict: " << to_string(rep.verdict) << "\n";
  o.verdict = to_string(rep.verdict);
  o.exit_code = rep.verdict == Verdict::pass ? 0 : 2;
  return o;
}

inline void write_manifest(const std::filesystem::path& out, const ExperimentConfig& c, const Outcome& o) {
  json man;
  man["tool"] = "tdbsde";
  man["version"] = kVersion;
  man["eigen_version"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                         std::to_string(EIGEN_MINOR_VERSION);
  man["mode"] = to_string(c.mode);
  man["config_hash"] = config_hash(c.canonical);
  man["seed"] = c.engine.seed;
  man["n_paths"] = c.engine.n_paths;
  man["n_steps"] = c.engine.n_steps;
  man["outputs"] = o.outputs;
  man["verdict"] = o.verdict;
  man["exit_code"] = o.exit_code;
  man["warnings"] = o.warnings;
  json cfg = c.canonical;
  if (cfg.contains("engine")) cfg["engine"].erase("threads");
  man["config"] = cfg;
  auto os = open_output(out / "manifest.json");
  os << man.dump(2) << '\n';
}

}  // namespace detail

/// Runs a raw config after overrides. Returns 0 on PASS, 2 when a check
/// fails and 1 on errors (messages go to `log`).
inline int run(json raw, const RunOverrides& ov, std::ostream& log,
               const std::filesystem::path& base_dir = std::filesystem::current_path()) {
  ExperimentConfig c;
  try {
    resolve_references(raw, base_dir);
    apply_overrides(raw, ov);
    const auto diags = validate(raw);
    if (!diags.empty()) {
      for (const auto& d : diags) log << "config error at " << d.path << ": " << d.message << "\n";
      return 1;
    }
    c = parse_config(raw);
  } catch (const ConfigError& e) {
    log << "config error at " << e.path() << ": " << e.message() << "\n";
    return 1;
  }
  const std::filesystem::path out = c.output;
  detail::Outcome o;
  try {
    std::filesystem::create_directories(out);
    switch (c.mode) {
      case Mode::check_assumptions: o = detail::run_check_assumptions(c, out, log); break;
      case Mode::solve: o = detail::run_solve(c, out, log); break;
      case Mode::stability: o = detail::run_stability_mode(c, out, log); break;
      case Mode::helly_bray: o = detail::run_helly_bray(c, out, log); break;
    }
  } catch (const AssumptionError& e) {
    log << "check failed: " << e.what() << "\n";
    o.exit_code = 2;
    o.verdict = "FAIL";
  } catch (const NonContractionError& e) {
    log << "check failed: " << e.what() << "\n";
    o.exit_code = 2;
    o.verdict = "FAIL";
  } catch (const FamilyInvalidError& e) {
    log << "check failed: " << e.what() << "\n";
    o.exit_code = 2;
    o.verdict = "FAIL";
  } catch (const std::exception& e) {
    log << "error: " << e.what() << "\n";
    o.exit_code = 1;
    o.verdict = "ERROR";
  }
  try {
    detail::write_manifest(out, c, o);
  } catch (const std::exception& e) {
    log << "error: " << e.what() << "\n";
    return 1;
  }
  return o.exit_code;
}

}  // namespace tdbsde
