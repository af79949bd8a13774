#include "gnes/config.hpp"

#include "gnes/errors.hpp"
#include "gnes/json_io.hpp"

#include <Eigen/Eigenvalues>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <set>
#include <type_traits>

namespace gnes {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, std::initializer_list<const char*> keys, const char* where) {
  if (!j.is_object()) throw ConfigError(fmt::format("{} must be an object", where));
  const std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k)) throw ConfigError(fmt::format("unknown key '{}' in {}", k, where));
}

template <class T>
T get(const json& j, const char* key, T fallback, const char* where) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
    if (!j.at(key).is_number_unsigned())
      throw ConfigError(fmt::format("{}.{} must be a nonnegative integer", where, key));
  }
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(fmt::format("{}.{} has the wrong type", where, key));
  }
}

template <class T>
std::optional<T> get_opt(const json& j, const char* key, const char* where) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return get<T>(j, key, T{}, where);
}

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json problem_to_json(const ProblemSource& p) {
  switch (p.kind) {
    case ProblemSource::Kind::builtin:
      return {{"builtin", p.builtin}, {"noise_sd", p.noise_sd}};
    case ProblemSource::Kind::cournot:
      return {{"cournot", p.cournot.to_json()}};
    case ProblemSource::Kind::inline_instance:
      return {{"instance", p.instance}};
    case ProblemSource::Kind::instance_path:
      return {{"instance_path", p.path}};
  }
  return {};
}

ProblemSource problem_from_json(const json& j) {
  reject_unknown(j, {"builtin", "noise_sd", "cournot", "instance", "instance_path"}, "problem");
  const int sources = static_cast<int>(j.contains("builtin")) + j.contains("cournot") +
                      j.contains("instance") + j.contains("instance_path");
  if (sources != 1)
    throw ConfigError("problem must name exactly one of builtin, cournot, instance, instance_path");
  ProblemSource p;
  if (j.contains("noise_sd") && !j.contains("builtin"))
    throw ConfigError("problem.noise_sd only applies to builtin games");
  if (j.contains("builtin")) {
    p.kind = ProblemSource::Kind::builtin;
    p.builtin = get<std::string>(j, "builtin", "", "problem");
    p.noise_sd = get<double>(j, "noise_sd", 0.0, "problem");
    const auto& names = builtin_names();
    if (std::find(names.begin(), names.end(), p.builtin) == names.end())
      throw ConfigError(fmt::format("unknown builtin game '{}'", p.builtin));
    if (!(p.noise_sd >= 0.0) || !std::isfinite(p.noise_sd))
      throw ConfigError(fmt::format("problem.noise_sd = {} must be >= 0", p.noise_sd));
  } else if (j.contains("cournot")) {
    p.kind = ProblemSource::Kind::cournot;
    p.cournot = CournotConfig::from_json(j.at("cournot"));
  } else if (j.contains("instance")) {
    p.kind = ProblemSource::Kind::inline_instance;
    p.instance = j.at("instance");
  } else {
    p.kind = ProblemSource::Kind::instance_path;
    p.path = get<std::string>(j, "instance_path", "", "problem");
  }
  return p;
}

json steps_to_json(const std::optional<StepSizes>& s) {
  if (!s) return "auto";
  return {{"gamma", s->gamma}, {"sigma", s->sigma}, {"tau", s->tau}};
}

std::optional<StepSizes> steps_from_json(const json& j) {
  if (j.is_string()) {
    if (j.get<std::string>() != "auto")
      throw ConfigError("solver.steps must be \"auto\" or an object");
    return std::nullopt;
  }
  reject_unknown(j, {"gamma", "sigma", "tau"}, "solver.steps");
  StepSizes s;
  s.gamma = get<std::vector<double>>(j, "gamma", {}, "solver.steps");
  s.sigma = get<std::vector<double>>(j, "sigma", {}, "solver.steps");
  s.tau = get<std::vector<double>>(j, "tau", {}, "solver.steps");
  return s;
}

json solver_to_json(const SolverParams& s) {
  return {{"variant", std::string(to_string(s.variant))},
          {"alpha_bar", s.alpha_bar},
          {"nu", s.nu},
          {"steps", steps_to_json(s.steps)},
          {"step_fraction", s.step_fraction},
          {"max_iters", s.max_iters},
          {"tol", s.tol},
          {"res_tol", opt_json(s.res_tol)},
          {"rho_fixed", opt_json(s.rho_fixed)},
          {"rho_scale", s.rho_scale},
          {"batch", {{"s0", s.batch.initial()}, {"p", s.batch.exponent()}}},
          {"diagnostics", s.diagnostics},
          {"trace_every", s.trace_every},
          {"parallel", s.exec == Exec::parallel}};
}

SolverParams solver_from_json(const json& j) {
  const char* w = "solver";
  reject_unknown(j,
                 {"variant", "alpha_bar", "nu", "steps", "step_fraction", "max_iters", "tol",
                  "res_tol", "rho_fixed", "rho_scale", "batch", "diagnostics", "trace_every",
                  "parallel"},
                 w);
  SolverParams s;
  try {
    s.variant = parse_variant(get<std::string>(j, "variant", "risfbf", w));
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  s.alpha_bar = get<double>(j, "alpha_bar", s.alpha_bar, w);
  s.nu = get<double>(j, "nu", s.nu, w);
  if (j.contains("steps")) s.steps = steps_from_json(j.at("steps"));
  s.step_fraction = get<double>(j, "step_fraction", s.step_fraction, w);
  s.max_iters = get<std::size_t>(j, "max_iters", s.max_iters, w);
  s.tol = get<double>(j, "tol", s.tol, w);
  s.res_tol = get_opt<double>(j, "res_tol", w);
  s.rho_fixed = get_opt<double>(j, "rho_fixed", w);
  s.rho_scale = get<double>(j, "rho_scale", s.rho_scale, w);
  if (j.contains("batch")) {
    const auto& b = j.at("batch");
    reject_unknown(b, {"s0", "p"}, "solver.batch");
    s.batch = BatchSchedule(get<double>(b, "s0", 1.0, "solver.batch"),
                            get<double>(b, "p", 1.2, "solver.batch"));
  }
  s.diagnostics = get<bool>(j, "diagnostics", false, w);
  s.trace_every = get<std::size_t>(j, "trace_every", s.trace_every, w);
  s.exec = get<bool>(j, "parallel", true, w) ? Exec::parallel : Exec::serial;
  return s;
}

json compare_to_json(const CompareSpec& c) {
  json variants = json::array();
  for (auto v : c.variants) variants.push_back(std::string(to_string(v)));
  return {{"variants", variants}, {"alpha_sweep", c.alpha_sweep}, {"sweep_rho", c.sweep_rho}};
}

CompareSpec compare_from_json(const json& j) {
  reject_unknown(j, {"variants", "alpha_sweep", "sweep_rho"}, "compare");
  CompareSpec c;
  for (const auto& name : get<std::vector<std::string>>(j, "variants", {}, "compare")) {
    try {
      c.variants.push_back(parse_variant(name));
    } catch (const Error& e) {
      throw ConfigError(e.what());
    }
  }
  c.alpha_sweep = get<std::vector<double>>(j, "alpha_sweep", {}, "compare");
  c.sweep_rho = get<double>(j, "sweep_rho", 1.0, "compare");
  return c;
}

}  // namespace

json RunConfig::to_json() const {
  return {{"problem", problem_to_json(problem)},
          {"solver", solver_to_json(solver)},
          {"seed", seed},
          {"replications", replications},
          {"out_dir", out_dir},
          {"executor", executor == Executor::distributed ? "distributed" : "monolithic"},
          {"message_log", message_log},
          {"allow_nonmonotone", allow_nonmonotone},
          {"monotonicity_trials", monotonicity_trials},
          {"compare", compare_to_json(compare)}};
}

RunConfig RunConfig::from_json(const json& j) {
  reject_unknown(j,
                 {"problem", "solver", "seed", "replications", "out_dir", "executor",
                  "message_log", "allow_nonmonotone", "monotonicity_trials", "compare"},
                 "config");
  const char* w = "config";
  RunConfig c;
  if (j.contains("problem")) c.problem = problem_from_json(j.at("problem"));
  if (j.contains("solver")) c.solver = solver_from_json(j.at("solver"));
  c.seed = get<std::uint64_t>(j, "seed", 0, w);
  c.replications = get<std::size_t>(j, "replications", 1, w);
  if (c.replications == 0) throw ConfigError("replications must be at least 1");
  c.out_dir = get<std::string>(j, "out_dir", c.out_dir, w);
  const auto exec = get<std::string>(j, "executor", "monolithic", w);
  if (exec == "monolithic")
    c.executor = Executor::monolithic;
  else if (exec == "distributed")
    c.executor = Executor::distributed;
  else
    throw ConfigError(fmt::format("executor '{}' must be monolithic or distributed", exec));
  c.message_log = get<bool>(j, "message_log", false, w);
  c.allow_nonmonotone = get<bool>(j, "allow_nonmonotone", false, w);
  c.monotonicity_trials = get<std::size_t>(j, "monotonicity_trials", c.monotonicity_trials, w);
  if (j.contains("compare")) c.compare = compare_from_json(j.at("compare"));
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  return RunConfig::from_json(read_json_file(path));
}

Instance load_problem(const ProblemSource& src, const std::filesystem::path& base_dir) {
  switch (src.kind) {
    case ProblemSource::Kind::builtin:
      return builtin_instance(src.builtin, src.noise_sd);
    case ProblemSource::Kind::cournot:
      return from_cournot(generate(src.cournot), fmt::format("cournot-seed-{}", src.cournot.seed));
    case ProblemSource::Kind::inline_instance:
      return instance_from_json(src.instance);
    case ProblemSource::Kind::instance_path: {
      std::filesystem::path p(src.path);
      if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
      return instance_from_json(read_json_file(p));
    }
  }
  throw ConfigError("unreachable problem source");
}

double check_monotone(const Instance& inst, std::size_t trials, bool allow, std::uint64_t seed) {
  double min_ratio;
  if (const auto* affine = dynamic_cast<const AffineCost*>(&inst.problem->cost())) {
    const Eigen::MatrixXd sym = 0.5 * (affine->matrix() + affine->matrix().transpose());
    min_ratio = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(sym, Eigen::EigenvaluesOnly)
                    .eigenvalues()
                    .minCoeff();
  } else {
    min_ratio = monotonicity_probe(*inst.problem, trials, seed).min_ratio;
  }
  if (min_ratio < -1e-8) {
    if (!allow)
      throw ConfigError(fmt::format(
          "pseudogradient of '{}' is not monotone (min ratio {:.6g}); pass --allow-nonmonotone "
          "to run anyway",
          inst.name, min_ratio));
    spdlog::warn("running a non-monotone game '{}' (min ratio {:.6g}); no convergence guarantee",
                 inst.name, min_ratio);
  }
  return min_ratio;
}

}  // namespace gnes
