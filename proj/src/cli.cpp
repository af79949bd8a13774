#include "gnes/cli.hpp"

#include "gnes/agentnet.hpp"
#include "gnes/errors.hpp"
#include "gnes/json_io.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <limits>
#include <ostream>

namespace gnes {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

/// A verification check failed; carries the offending iteration and slack.
class CheckFailure : public std::runtime_error {
 public:
  CheckFailure(const std::string& m, std::optional<std::uint64_t> k, double slack)
      : std::runtime_error(m), k_(k), slack_(slack) {}
  std::optional<std::uint64_t> k_;
  double slack_;
};

struct Prepared {
  Instance inst;
  std::shared_ptr<ExtendedOperator> op;
  double min_ratio = 0.0;
};

Prepared prepare(const RunConfig& cfg, const fs::path& base_dir) {
  Prepared p;
  p.inst = load_problem(cfg.problem, base_dir);
  p.min_ratio = check_monotone(p.inst, cfg.monotonicity_trials, cfg.allow_nonmonotone,
                               cfg.seed ^ 0x6d6f6e6f746f6e65ULL);
  p.op = std::make_shared<ExtendedOperator>(p.inst.problem, p.inst.graph);
  return p;
}

/// Attaches the deterministic reference point when diagnostics are requested.
SolverParams finalize_params(const Prepared& p, SolverParams params) {
  if (params.diagnostics && !params.reference) {
    spdlog::info("computing reference point by deterministic FBF");
    params.reference = reference_solution(*p.op, 1e-12).point;
  }
  validate_params(*p.op, params);
  return params;
}

fs::path ensure_dir(const std::string& dir) {
  const fs::path p(dir);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec || !fs::is_directory(p))
    throw IoError(fmt::format("cannot create output directory {}: {}", dir, ec.message()));
  return p;
}

struct Replication {
  RunResult run;
  std::uint64_t seed = 0;
  std::uint64_t messages = 0;
};

Replication run_replication(const RunConfig& cfg, const Prepared& p, const SolverParams& params,
                            std::uint64_t seed, const std::optional<fs::path>& log) {
  const PrimalDualState x0(p.op->partition_ptr());
  if (cfg.executor == Executor::distributed) {
    DistributedOptions opts;
    opts.message_log = log;
    auto d = run_distributed(*p.op, *p.inst.oracle, params, x0, seed, opts);
    return {std::move(d.run), seed, d.messages};
  }
  return {run(*p.op, *p.inst.oracle, params, x0, seed), seed, 0};
}

std::string hex(std::uint64_t h) { return fmt::format("{:016x}", h); }

json replication_json(const Replication& r, std::size_t index, const std::string& csv) {
  json j = {{"replication", index},
            {"seed", r.seed},
            {"iterations", r.run.iterations},
            {"stop", std::string(to_string(r.run.stop))},
            {"final_r_psi", r.run.final_r_psi},
            {"final_res", r.run.final_res},
            {"wall_seconds", r.run.wall_seconds},
            {"trace_hash", hex(r.run.trace.hash())}};
  if (!csv.empty()) j["trace_csv"] = csv;
  if (!r.run.error.empty()) j["error"] = r.run.error;
  if (r.messages) j["messages"] = r.messages;
  if (r.run.trace.has_diagnostics()) {
    const auto rep = diagnostics_check(r.run.trace);
    j["diagnostics"] = {{"passed", rep.passed()},
                        {"checked", rep.checked},
                        {"recursion_violations", rep.recursion_violations},
                        {"residual_bound_violations", rep.residual_bound_violations},
                        {"h_violations", rep.h_violations},
                        {"coupling_violations", rep.coupling_violations},
                        {"worst_slack", rep.worst_slack}};
  }
  return j;
}

json instance_json(const Prepared& p, const SolverParams& params) {
  const auto psi = make_preconditioner(*p.op, params);
  return {{"name", p.inst.name},
          {"agents", p.op->partition().num_agents()},
          {"primal_dim", p.op->partition().primal_dim()},
          {"constraint_dim", p.op->partition().constraint_dim()},
          {"lipschitz_f", p.inst.problem->cost().lipschitz()},
          {"lipschitz_v", p.op->lipschitz()},
          {"step_bound", step_bound(*p.op, params.nu)},
          {"max_step", psi.max_step()},
          {"monotonicity_min_ratio", p.min_ratio},
          {"noise_bound", p.inst.oracle->noise_bound()}};
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string dump(const json& j) { return j.dump(2, ' ', false, json::error_handler_t::strict) + "\n"; }

/// First k at which `excess(record)` exceeds the slack, and the largest excess.
template <class F>
VerifyCheck inequality_check(const std::string& name, const SolverTrace& trace, F excess) {
  constexpr double slack = 1e-9;
  VerifyCheck c{name, true, "", std::nullopt, -std::numeric_limits<double>::infinity()};
  std::size_t bad = 0;
  for (const auto& r : trace.records) {
    const double e = excess(*r.diag);
    c.slack = std::max(c.slack, e);
    if (e > slack) {
      ++bad;
      if (!c.first_bad_k) c.first_bad_k = r.k;
    }
  }
  c.passed = bad == 0 && !trace.records.empty();
  c.detail = fmt::format("{} of {} iterations violate, worst slack {:.3e}", bad,
                         trace.records.size(), c.slack);
  return c;
}

}  // namespace

std::string aggregate_csv(const std::vector<SolverTrace>& traces) {
  std::size_t rows = 0;
  const SolverTrace* longest = nullptr;
  for (const auto& t : traces)
    if (t.records.size() > rows) rows = t.records.size(), longest = &t;
  std::string out = "k,res_mean,res_min,res_max,r_psi_mean,r_psi_min,r_psi_max\n";
  for (std::size_t i = 0; i < rows; ++i) {
    double rs = 0, rmin = std::numeric_limits<double>::infinity(), rmax = -rmin;
    double ps = 0, pmin = rmin, pmax = -rmin;
    std::size_t n = 0;
    for (const auto& t : traces) {
      if (t.records.empty()) continue;
      const auto& rec = t.records[std::min(i, t.records.size() - 1)];
      rs += rec.res, ps += rec.r_psi, ++n;
      rmin = std::min(rmin, rec.res), rmax = std::max(rmax, rec.res);
      pmin = std::min(pmin, rec.r_psi), pmax = std::max(pmax, rec.r_psi);
    }
    out += fmt::format("{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}\n",
                       longest->records[i].k, rs / n, rmin, rmax, ps / n, pmin, pmax);
  }
  return out;
}

std::string error_document(const std::string& kind, const std::string& message) {
  return json{{"error", {{"kind", kind}, {"message", message}}}}.dump();
}

int cmd_run(const RunConfig& cfg, const fs::path& base_dir, std::ostream& out) {
  const auto t0 = std::chrono::steady_clock::now();
  const Prepared p = prepare(cfg, base_dir);
  const SolverParams params = finalize_params(p, cfg.solver);
  const fs::path dir = ensure_dir(cfg.out_dir);

  json reps = json::array();
  std::vector<SolverTrace> traces;
  bool diverged = false;
  for (std::size_t r = 0; r < cfg.replications; ++r) {
    const std::uint64_t seed = cfg.seed + r;
    std::optional<fs::path> log;
    if (cfg.message_log) log = dir / fmt::format("messages_rep{}.jsonl", r);
    auto rep = run_replication(cfg, p, params, seed, log);
    const std::string csv = fmt::format("trace_rep{}.csv", r);
    write_text_atomic(dir / csv, rep.run.trace.to_csv());
    spdlog::info("replication {} (seed {}): {} iterations, r_psi {:.3e}, res {:.3e}", r, seed,
                 rep.run.iterations, rep.run.final_r_psi, rep.run.final_res);
    if (rep.run.stop == StopReason::diverged) {
      diverged = true;
      spdlog::error("replication {} diverged: {}", r, rep.run.error);
    }
    reps.push_back(replication_json(rep, r, csv));
    traces.push_back(std::move(rep.run.trace));
  }
  write_text_atomic(dir / "aggregate.csv", aggregate_csv(traces));

  double res_mean = 0, r_max = 0;
  for (const auto& r : reps) {
    res_mean += r["final_res"].get<double>() / static_cast<double>(reps.size());
    r_max = std::max(r_max, r["final_r_psi"].get<double>());
  }
  const json summary = {{"command", "run"},
                        {"variant", std::string(to_string(params.variant))},
                        {"executor", cfg.executor == Executor::distributed ? "distributed"
                                                                           : "monolithic"},
                        {"instance", instance_json(p, params)},
                        {"replications", reps},
                        {"final_res_mean", res_mean},
                        {"final_r_psi_max", r_max},
                        {"aggregate_csv", "aggregate.csv"},
                        {"wall_seconds", seconds_since(t0)},
                        {"config", cfg.to_json()}};
  write_text_atomic(dir / "summary.json", dump(summary));
  out << fmt::format("{} on {}: {} replication(s), mean final res {:.3e}, max final r_psi {:.3e}\n",
                     to_string(params.variant), p.inst.name, cfg.replications, res_mean, r_max);
  out << fmt::format("outputs in {}\n", dir.string());
  return diverged ? exit_failure : exit_ok;
}

int cmd_compare(const RunConfig& cfg, const fs::path& base_dir, std::ostream& out) {
  const auto t0 = std::chrono::steady_clock::now();
  struct Family {
    std::string label;
    SolverParams params;
  };
  std::vector<Family> families;
  auto variants = cfg.compare.variants;
  if (variants.empty() && cfg.compare.alpha_sweep.empty())
    variants = {Variant::risfbf, Variant::sfbf, Variant::sfb};
  for (std::size_t i = 0; i < variants.size(); ++i) {
    SolverParams s = cfg.solver;
    s.variant = variants[i];
    std::string label(to_string(variants[i]));
    const auto repeats = std::count(variants.begin(), variants.begin() + i, variants[i]);
    if (repeats) label += fmt::format("#{}", repeats + 1);
    families.push_back({label, s});
  }
  for (double a : cfg.compare.alpha_sweep) {
    SolverParams s = cfg.solver;
    s.variant = Variant::risfbf;
    s.alpha_bar = a;
    s.rho_fixed = cfg.compare.sweep_rho;
    families.push_back({fmt::format("risfbf(alpha_bar={})", a), s});
  }
  if (families.size() < 2)
    throw ConfigError("compare needs at least two variants or an alpha_bar sweep");

  const Prepared p = prepare(cfg, base_dir);
  for (auto& f : families) f.params = finalize_params(p, f.params);
  const fs::path dir = ensure_dir(cfg.out_dir);

  std::string csv = "variant,replication,k,res,r_psi\n";
  json fams = json::array();
  bool diverged = false;
  for (const auto& f : families) {
    json reps = json::array();
    double res_mean = 0;
    for (std::size_t r = 0; r < cfg.replications; ++r) {
      auto rep = run_replication(cfg, p, f.params, cfg.seed + r, std::nullopt);
      for (const auto& rec : rep.run.trace.records)
        csv += fmt::format("{},{},{},{:.17g},{:.17g}\n", f.label, r, rec.k, rec.res, rec.r_psi);
      diverged = diverged || rep.run.stop == StopReason::diverged;
      res_mean += rep.run.final_res / static_cast<double>(cfg.replications);
      reps.push_back(replication_json(rep, r, ""));
    }
    spdlog::info("{}: mean final res {:.3e}", f.label, res_mean);
    out << fmt::format("{:<28} mean final res {:.6e}\n", f.label, res_mean);
    fams.push_back({{"label", f.label},
                    {"variant", std::string(to_string(f.params.variant))},
                    {"alpha_bar", f.params.alpha_bar},
                    {"rho_fixed", f.params.rho_fixed ? json(*f.params.rho_fixed) : json(nullptr)},
                    {"final_res_mean", res_mean},
                    {"replications", reps}});
  }
  write_text_atomic(dir / "compare.csv", csv);
  const json summary = {{"command", "compare"},
                        {"instance", instance_json(p, families.front().params)},
                        {"families", fams},
                        {"compare_csv", "compare.csv"},
                        {"wall_seconds", seconds_since(t0)},
                        {"config", cfg.to_json()}};
  write_text_atomic(dir / "compare_summary.json", dump(summary));
  out << fmt::format("outputs in {}\n", dir.string());
  return diverged ? exit_failure : exit_ok;
}

int cmd_verify(const RunConfig& cfg, const fs::path& base_dir, std::ostream& out,
               std::vector<VerifyCheck>* checks_out) {
  if (cfg.problem.kind != ProblemSource::Kind::builtin)
    throw ConfigError("verify needs a builtin game (its ground truth is computable)");
  const Prepared p = prepare(cfg, base_dir);
  const fs::path dir = ensure_dir(cfg.out_dir);

  const auto ref = reference_solution(*p.op, 1e-12);
  SolverParams params = cfg.solver;
  params.diagnostics = true;
  params.reference = ref.point;
  validate_params(*p.op, params);
  auto rep = run_replication(cfg, p, params, cfg.seed, std::nullopt);
  const auto& trace = rep.run.trace;
  write_text_atomic(dir / "trace_verify.csv", trace.to_csv());

  std::vector<VerifyCheck> checks;
  const auto& problem = *p.inst.problem;
  const auto kkt = kkt_check(problem, ref.point.primal(), mean_multiplier(ref.point), 1e-8);
  checks.push_back({"reference_kkt", kkt.passed(),
                    fmt::format("stationarity {:.2e}, feasibility {:.2e}, complementarity {:.2e}",
                                kkt.stationarity_gap, kkt.feasibility_gap,
                                kkt.complementarity_gap),
                    std::nullopt, 0.0});
  const double ref_res = residual_res(problem, ref.point.primal());
  checks.push_back({"reference_res", ref_res < 1e-8, fmt::format("res {:.2e}", ref_res),
                    std::nullopt, 0.0});
  checks.push_back({"finite_iterates", rep.run.stop != StopReason::diverged,
                    rep.run.error.empty() ? fmt::format("{} iterations", rep.run.iterations)
                                          : rep.run.error,
                    std::nullopt, 0.0});
  if (params.variant == Variant::sfb) {
    checks.push_back({"diagnostics_recorded", false,
                      "the recursion inequalities are stated for the FBF variants only",
                      std::nullopt, 0.0});
  } else {
    checks.push_back(inequality_check("fundamental_recursion", trace, [](const IterDiagnostics& d) {
      return d.fr_lhs - d.fr_rhs;
    }));
    checks.push_back(inequality_check("residual_bound", trace, [](const IterDiagnostics& d) {
      return d.yzg_lhs - d.yzg_rhs;
    }));
    checks.push_back(
        inequality_check("h_nonnegative", trace, [](const IterDiagnostics& d) { return -d.H; }));
    checks.push_back(inequality_check("relaxation_coupling", trace,
                                      [](const IterDiagnostics& d) { return d.coupling; }));
  }
  const double lam_min = ref.point.lambda().minCoeff();
  const double cons = consensus_gap(ref.point);
  checks.push_back({"reference_multipliers", lam_min >= -1e-12 && cons < 1e-8,
                    fmt::format("min lambda {:.3e}, consensus gap {:.3e}", lam_min, cons),
                    std::nullopt, 0.0});
  const double r0 = residual_r_psi(*p.op, PrimalDualState(p.op->partition_ptr()),
                                   make_preconditioner(*p.op, params));
  checks.push_back({"residual_decrease", rep.run.final_r_psi < r0,
                    fmt::format("r_psi {:.3e} -> {:.3e}", r0, rep.run.final_r_psi), std::nullopt,
                    0.0});

  bool ok = true;
  json rows = json::array();
  out << fmt::format("{:<26} {:<6} {}\n", "check", "status", "detail");
  for (const auto& c : checks) {
    ok = ok && c.passed;
    out << fmt::format("{:<26} {:<6} {}", c.name, c.passed ? "PASS" : "FAIL", c.detail);
    if (c.first_bad_k) out << fmt::format(" (first at k = {})", *c.first_bad_k);
    out << '\n';
    json row = {{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}};
    if (c.first_bad_k) row["first_bad_k"] = *c.first_bad_k, row["slack"] = c.slack;
    rows.push_back(row);
  }
  const json summary = {{"command", "verify"},
                        {"passed", ok},
                        {"checks", rows},
                        {"reference_iterations", ref.iterations},
                        {"reference_r_psi", ref.r_psi},
                        {"run", replication_json(rep, 0, "trace_verify.csv")},
                        {"instance", instance_json(p, params)},
                        {"config", cfg.to_json()}};
  write_text_atomic(dir / "verify.json", dump(summary));
  if (checks_out) *checks_out = checks;
  if (!ok) {
    for (const auto& c : checks)
      if (!c.passed) {
        std::string msg = fmt::format("check {} failed: {}", c.name, c.detail);
        if (c.first_bad_k)
          msg += fmt::format("; offending k = {}, slack = {:.6e}", *c.first_bad_k, c.slack);
        throw CheckFailure(msg, c.first_bad_k, c.slack);
      }
  }
  return exit_ok;
}

int cmd_gen_cournot(const CournotConfig& cfg, bool allow_nonmonotone, const fs::path& path,
                    std::ostream& out) {
  const auto inst = from_cournot(generate(cfg), fmt::format("cournot-seed-{}", cfg.seed));
  check_monotone(inst, 1000, allow_nonmonotone, cfg.seed ^ 0x6d6f6e6f746f6e65ULL);
  if (path.has_parent_path()) ensure_dir(path.parent_path().string());
  write_text_atomic(path, dump(instance_to_json(inst)));
  out << fmt::format("wrote {} ({} firms, {} markets)\n", path.string(), cfg.num_firms,
                     cfg.num_markets);
  return exit_ok;
}

namespace {

void init_logging() {
  static const bool once = [] {
    auto logger = spdlog::stderr_color_mt("gnes");
    spdlog::set_default_logger(logger);
    return true;
  }();
  (void)once;
  auto level = spdlog::level::warn;
  if (const char* env = std::getenv("GNES_LOG"); env && *env) {
    const auto parsed = spdlog::level::from_str(env);
    if (parsed == spdlog::level::off && std::string(env) != "off")
      spdlog::warn("GNES_LOG='{}' is not a log level; using warn", env);
    else
      level = parsed;
  }
  spdlog::set_level(level);
}

struct Overrides {
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> variant;
  std::optional<std::size_t> reps;
  bool diagnostics = false;
  bool allow_nonmonotone = false;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "JSON run configuration");
  cmd->add_option("--seed", o.seed, "base seed (replication r uses seed + r)");
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_option("--variant", o.variant, "risfbf | sfbf | sfb");
  cmd->add_option("--reps", o.reps, "number of replications");
  cmd->add_flag("--diagnostics", o.diagnostics, "record the analysis quantities");
  cmd->add_flag("--allow-nonmonotone", o.allow_nonmonotone,
                "run games whose pseudogradient fails the monotonicity check");
}

std::pair<RunConfig, fs::path> resolve(const Overrides& o) {
  RunConfig cfg;
  fs::path base;
  if (o.config) {
    cfg = load_config(*o.config);
    base = fs::path(*o.config).parent_path();
  }
  if (o.seed) cfg.seed = *o.seed;
  if (o.out) cfg.out_dir = *o.out;
  if (o.variant) {
    try {
      cfg.solver.variant = parse_variant(*o.variant);
    } catch (const Error& e) {
      throw ConfigError(e.what());
    }
  }
  if (o.reps) {
    if (*o.reps == 0) throw ConfigError("--reps must be at least 1");
    cfg.replications = *o.reps;
  }
  if (o.diagnostics) cfg.solver.diagnostics = true;
  if (o.allow_nonmonotone) cfg.allow_nonmonotone = true;
  return {cfg, base};
}

bool is_invalid_input(ErrorKind k) {
  return k == ErrorKind::config || k == ErrorKind::parameter || k == ErrorKind::dimension ||
         k == ErrorKind::validation || k == ErrorKind::io;
}

}  // namespace

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  init_logging();
  CLI::App app{"Stochastic generalized Nash equilibrium solver", "gnes"};
  app.require_subcommand(1);
  Overrides o;
  auto* run_cmd = app.add_subcommand("run", "run one variant for R replications");
  auto* cmp_cmd = app.add_subcommand("compare", "run several variants or an alpha_bar sweep");
  auto* ver_cmd = app.add_subcommand("verify", "check the analysis inequalities on a builtin game");
  auto* gen_cmd = app.add_subcommand("gen", "generate problem instances");
  gen_cmd->require_subcommand(1);
  auto* gen_cournot = gen_cmd->add_subcommand("cournot", "write a networked Cournot instance");
  for (auto* c : {run_cmd, cmp_cmd, ver_cmd}) add_common(c, o);
  std::optional<std::string> gen_config;
  std::optional<std::uint64_t> gen_seed;
  std::string gen_out = "instance.json";
  bool gen_allow = false;
  gen_cournot->add_option("--config", gen_config, "generator settings (JSON)");
  gen_cournot->add_option("--seed", gen_seed, "instance seed");
  gen_cournot->add_option("--out", gen_out, "instance document path");
  gen_cournot->add_flag("--allow-nonmonotone", gen_allow, "skip the monotonicity gate");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return exit_ok;
  } catch (const CLI::ParseError& e) {
    err << error_document("usage", e.what()) << '\n';
    return exit_invalid;
  }

  try {
    if (*gen_cournot) {
      CournotConfig cc;
      if (gen_config) {
        const json doc = read_json_file(*gen_config);
        if (doc.contains("problem")) {
          const auto rc = RunConfig::from_json(doc);
          if (rc.problem.kind != ProblemSource::Kind::cournot)
            throw ConfigError("the config's problem is not a cournot generator");
          cc = rc.problem.cournot;
        } else {
          cc = CournotConfig::from_json(doc);
        }
      }
      if (gen_seed) cc.seed = *gen_seed;
      return cmd_gen_cournot(cc, gen_allow, gen_out, out);
    }
    const auto [cfg, base] = resolve(o);
    if (*run_cmd) return cmd_run(cfg, base, out);
    if (*cmp_cmd) return cmd_compare(cfg, base, out);
    return cmd_verify(cfg, base, out);
  } catch (const CheckFailure& e) {
    json doc = json::parse(error_document("verification", e.what()));
    if (e.k_) doc["error"]["k"] = *e.k_, doc["error"]["slack"] = e.slack_;
    err << doc.dump() << '\n';
    return exit_failure;
  } catch (const Error& e) {
    err << error_document(std::string(to_string(e.kind())), e.what()) << '\n';
    return is_invalid_input(e.kind()) ? exit_invalid : exit_failure;
  } catch (const std::exception& e) {
    err << error_document("internal", e.what()) << '\n';
    return exit_failure;
  }
}

}  // namespace gnes
