#include "gnes/solver.hpp"

#include "gnes/errors.hpp"
#include "gnes/kernels.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cmath>
#include <cstring>
#include <limits>

namespace gnes {

std::string_view to_string(Variant v) noexcept {
  switch (v) {
    case Variant::risfbf: return "risfbf";
    case Variant::sfbf: return "sfbf";
    case Variant::sfb: return "sfb";
  }
  return "?";
}

Variant parse_variant(std::string_view name) {
  if (name == "risfbf") return Variant::risfbf;
  if (name == "sfbf") return Variant::sfbf;
  if (name == "sfb") return Variant::sfb;
  throw ConfigError(fmt::format("unknown variant '{}' (expected risfbf, sfbf or sfb)", name));
}

std::string_view to_string(StopReason r) noexcept {
  switch (r) {
    case StopReason::tolerance: return "tolerance";
    case StopReason::res_tolerance: return "res_tolerance";
    case StopReason::max_iters: return "max_iters";
    case StopReason::diverged: return "diverged";
  }
  return "?";
}

double step_bound(const ExtendedOperator& op, double nu) {
  return (1.0 - nu) / (2.0 * op.lipschitz());
}

Preconditioner make_preconditioner(const ExtendedOperator& op, const SolverParams& params) {
  const auto n = op.partition().num_agents();
  const double bound = step_bound(op, params.nu);
  if (!params.steps) {
    if (!(op.lipschitz() > 0.0) || !std::isfinite(bound))
      throw ConfigError("ell_V is zero; automatic step sizes need a positive Lipschitz constant, "
                        "give explicit steps instead");
    return Preconditioner::uniform(op.partition_ptr(), params.step_fraction * bound);
  }
  const auto& s = *params.steps;
  const auto check = [&](const std::vector<double>& v, const char* name) {
    if (v.size() != n)
      throw ConfigError(fmt::format("steps.{} has {} entries for {} agents", name, v.size(), n));
    for (std::size_t i = 0; i < n; ++i) {
      if (!(v[i] > 0.0) || !std::isfinite(v[i]))
        throw ConfigError(fmt::format("steps.{}[{}] = {} must be positive", name, i, v[i]));
      if (v[i] > bound * (1.0 + 1e-12))
        throw ConfigError(fmt::format(
            "steps.{}[{}] = {} exceeds the admissible bound (1 - nu) / (2 ell_V) = {:.6g} "
            "(ell_V = {:.6g}); use smaller step sizes",
            name, i, v[i], bound, op.lipschitz()));
    }
  };
  check(s.gamma, "gamma");
  check(s.sigma, "sigma");
  check(s.tau, "tau");
  return Preconditioner(op.partition_ptr(), s.gamma, s.sigma, s.tau);
}

double alpha_schedule(const SolverParams& params, std::uint64_t k) {
  if (params.variant != Variant::risfbf) return 0.0;
  return params.alpha_bar * (1.0 - 1.0 / (static_cast<double>(k) + 1.0));
}

Relaxation rho_schedule(const SolverParams& params, double alpha_k, double ell_v_psi) {
  Relaxation out;
  if (params.variant != Variant::risfbf) {
    out.rho = 1.0;
  } else if (params.rho_fixed) {
    out.rho = *params.rho_fixed;
  } else {
    const double ab = 1.0 - params.alpha_bar;
    const double g = 2.0 * alpha_k * alpha_k - alpha_k + 1.0;
    out.rho = (3.0 - params.nu) * ab * ab / (2.0 * g * (1.0 + ell_v_psi));
    if (out.rho > 1.0) {
      out.rho = 1.0;
      out.clamped = true;
    }
  }
  if (params.variant == Variant::risfbf) out.rho *= params.rho_scale;
  return out;
}

double coupling_value(double alpha, double rho, double nu, double ell_v_psi) {
  return 2.0 * alpha * alpha +
         (1.0 - alpha) * (1.0 - (3.0 - nu) * (1.0 - alpha) / (2.0 * rho * (1.0 + ell_v_psi)));
}

void validate_params(const ExtendedOperator& op, const SolverParams& params) {
  const auto finite = [](double v) { return std::isfinite(v); };
  if (!finite(params.alpha_bar) || params.alpha_bar < 0.0 || params.alpha_bar >= 1.0)
    throw ConfigError(fmt::format(
        "alpha_bar = {} is inadmissible: Theorem 1 requires 0 <= alpha_bar < 1", params.alpha_bar));
  if (!finite(params.nu) || !(params.nu > 0.0 && params.nu < 1.0))
    throw ConfigError(fmt::format("nu = {} is inadmissible: Theorem 1 requires 0 < nu < 1",
                                  params.nu));
  if (!finite(params.step_fraction) || !(params.step_fraction > 0.0 && params.step_fraction <= 1.0))
    throw ConfigError(fmt::format("step_fraction = {} must lie in (0, 1]", params.step_fraction));
  if (params.max_iters == 0) throw ConfigError("max_iters must be at least 1");
  if (params.trace_every == 0) throw ConfigError("trace_every must be at least 1");
  if (!finite(params.tol) || params.tol < 0.0)
    throw ConfigError(fmt::format("tol = {} must be finite and nonnegative", params.tol));
  if (params.res_tol && (!finite(*params.res_tol) || !(*params.res_tol > 0.0)))
    throw ConfigError(fmt::format("res_tol = {} must be positive", *params.res_tol));
  if (params.rho_fixed && (!finite(*params.rho_fixed) || !(*params.rho_fixed > 0.0) ||
                           *params.rho_fixed > 1.0))
    throw ConfigError(fmt::format("rho_fixed = {} must lie in (0, 1]", *params.rho_fixed));
  if (!finite(params.rho_scale) || !(params.rho_scale > 0.0))
    throw ConfigError(fmt::format("rho_scale = {} must be positive", params.rho_scale));
  if (params.diagnostics && !params.reference)
    throw ConfigError("diagnostics need a reference point");
  if (params.reference) require_same_layout(op.partition(), params.reference->partition(),
                                            "reference point");
  // Throws on inadmissible explicit steps; batch.p > 1 is enforced by BatchSchedule itself.
  const auto psi = make_preconditioner(op, params);

  if (params.variant != Variant::risfbf) return;
  const double ell = op.lipschitz() * psi.max_step();
  bool clamped = false;
  std::optional<std::uint64_t> bad;
  for (std::uint64_t k = 0; k <= params.max_iters; ++k) {
    const double a = alpha_schedule(params, k);
    const auto r = rho_schedule(params, a, ell);
    clamped = clamped || r.clamped;
    if (!bad && coupling_value(a, r.rho, params.nu, ell) > 1e-12) bad = k;
  }
  if (clamped)
    spdlog::info("relaxation schedule exceeds 1 (ell_V,Psi = {:.4g}); rho_k clamped to 1", ell);
  if (bad) {
    const double a = alpha_schedule(params, *bad);
    const double c = coupling_value(a, rho_schedule(params, a, ell).rho, params.nu, ell);
    if (params.rho_fixed || params.rho_scale != 1.0)
      spdlog::warn("relaxation override breaks the parameter coupling at k = {} (value {:.3e}); "
                   "convergence guarantees do not apply",
                   *bad, c);
    else
      throw ConfigError(fmt::format("parameter coupling violated at k = {} (value {:.3e})", *bad,
                                    c));
  }
}

namespace {

StepOutput blank_output(const PartitionPtr& p) {
  return StepOutput{PrimalDualState(p), PrimalDualState(p), PrimalDualState(p),
                    PrimalDualState(p), PrimalDualState(p)};
}

PrimalDualState sample_phase(const IterationContext& ctx, const PrimalDualState& at,
                             std::uint64_t batch, std::uint64_t k, Phase phase) {
  try {
    return sample_V_hat(ctx.op, ctx.orc, at, batch, ctx.seed, k, phase, ctx.params.exec);
  } catch (const NumericError& e) {
    throw NumericError(fmt::format("iteration {}, phase {}: {}", k,
                                   phase == Phase::xi ? "xi" : "eta", e.what()),
                       e.agent());
  }
}

}  // namespace

StepOutput risfbf_step(const IterationContext& ctx, const PrimalDualState& x,
                       const PrimalDualState& x_prev, std::uint64_t k) {
  const auto& part = ctx.op.partition();
  const auto n = part.num_agents();
  const auto exec = ctx.params.exec;
  auto s = blank_output(ctx.op.partition_ptr());
  s.alpha = alpha_schedule(ctx.params, k);
  s.rho = rho_schedule(ctx.params, s.alpha, ctx.ell_v_psi).rho;
  s.batch = batch_size(ctx.params.batch, k);

  kernels::for_each_agent(exec, n, [&](std::size_t i) {
    kernels::inertia_block(part, i, x, x_prev, s.alpha, s.z);
  });
  s.a = sample_phase(ctx, s.z, s.batch, k, Phase::xi);
  kernels::for_each_agent(exec, n, [&](std::size_t i) {
    kernels::forward_backward_block(ctx.op, ctx.psi, i, s.z, s.a, s.y);
  });
  s.b = sample_phase(ctx, s.y, s.batch, k, Phase::eta);
  kernels::for_each_agent(exec, n, [&](std::size_t i) {
    kernels::correction_block(ctx.psi, i, s.z, s.y, s.a, s.b, s.rho, s.x_next);
    kernels::require_finite_block(s.x_next, i, "relaxed update");
  });
  return s;
}

StepOutput sfb_step(const IterationContext& ctx, const PrimalDualState& x, std::uint64_t k) {
  const auto n = ctx.op.partition().num_agents();
  auto s = blank_output(ctx.op.partition_ptr());
  s.batch = batch_size(ctx.params.batch, k);
  s.z = x;
  s.a = sample_phase(ctx, x, s.batch, k, Phase::xi);
  kernels::for_each_agent(ctx.params.exec, n, [&](std::size_t i) {
    kernels::forward_backward_block(ctx.op, ctx.psi, i, x, s.a, s.x_next);
    kernels::require_finite_block(s.x_next, i, "forward-backward update");
  });
  s.y = s.x_next;
  return s;
}

namespace {

IterDiagnostics diagnose(const IterationContext& ctx, const PrimalDualState& x,
                         const PrimalDualState& x_prev, const StepOutput& s,
                         const PrimalDualState& p) {
  const auto& psi = ctx.psi;
  const auto exec = ctx.params.exec;
  const double nu = ctx.params.nu;
  const double ell = ctx.ell_v_psi;
  const double a = s.alpha;
  const double rho = s.rho;

  const auto vz = apply_V(ctx.op, s.z, exec);
  const auto vy = apply_V(ctx.op, s.y, exec);
  PrimalDualState u(x.partition_ptr(), s.a.data() - vz.data());
  PrimalDualState w(x.partition_ptr(), s.b.data() - vy.data());
  PrimalDualState e(x.partition_ptr(), w.data() - u.data());
  const double nu_sq = inv_psi_norm_sq(u, psi);
  const double ne_sq = inv_psi_norm_sq(e, psi);
  const double r2 = psi_norm_sq(fixed_point_displacement(ctx.op, s.z, psi, exec), psi);

  const double denom = 2.0 * rho * (1.0 + ell);
  const double big_k = (3.0 - nu) / denom - 1.0;
  const double dk = psi_dist_sq(x, x_prev, psi);
  const double dk1 = psi_dist_sq(s.x_next, x, psi);
  const double xp = psi_dist_sq(x, p, psi);
  const double xpp = psi_dist_sq(x_prev, p, psi);

  IterDiagnostics d;
  d.dM = (3.0 - nu) * rho / (1.0 + ell) * ne_sq + nu * rho * nu_sq;
  d.dN = 2.0 * rho * w.data().dot(p.data() - s.y.data());
  d.coupling = coupling_value(a, rho, nu, ell);
  d.fr_lhs = psi_dist_sq(s.x_next, p, psi);
  d.fr_rhs = (1.0 + a) * xp - a * xpp + d.dM + d.dN - 0.5 * nu * rho * r2 +
             a * dk * (2.0 * a + (3.0 - nu) * (1.0 - a) / denom) - (1.0 - a) * big_k * dk1;
  d.yzg_lhs = -psi_dist_sq(s.z, s.y, psi);
  d.yzg_rhs = nu_sq - 0.5 * r2;
  d.H = xp - a * xpp + (1.0 - a) * big_k * dk;
  d.delta = 0.5 * nu * rho * r2 - d.coupling * dk;
  return d;
}

void mix(std::uint64_t& h, std::uint64_t word) {
  for (int b = 0; b < 8; ++b) {
    h ^= (word >> (8 * b)) & 0xffU;
    h *= 0x100000001b3ULL;
  }
}

void mix(std::uint64_t& h, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  mix(h, bits);
}

}  // namespace

bool SolverTrace::has_diagnostics() const noexcept {
  if (records.empty()) return false;
  for (const auto& r : records)
    if (!r.diag) return false;
  return true;
}

std::uint64_t SolverTrace::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& r : records) {
    mix(h, r.k);
    for (double v : {r.r_psi, r.res, r.consensus_gap, r.feas_gap, r.step_norm, r.alpha, r.rho})
      mix(h, v);
    mix(h, r.batch);
    if (r.diag)
      for (double v : {r.diag->dM, r.diag->dN, r.diag->H, r.diag->delta, r.diag->fr_lhs,
                       r.diag->fr_rhs, r.diag->yzg_lhs, r.diag->yzg_rhs, r.diag->coupling})
        mix(h, v);
  }
  return h;
}

std::string SolverTrace::to_csv() const {
  const bool diag = has_diagnostics();
  std::string out = "k,r_psi,res,consensus_gap,feas_gap,step_norm";
  if (diag) out += ",dM,dN,H,delta";
  out += '\n';
  for (const auto& r : records) {
    out += fmt::format("{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}", r.k, r.r_psi, r.res,
                       r.consensus_gap, r.feas_gap, r.step_norm);
    if (diag)
      out += fmt::format(",{:.17g},{:.17g},{:.17g},{:.17g}", r.diag->dM, r.diag->dN, r.diag->H,
                         r.diag->delta);
    out += '\n';
  }
  return out;
}

RunResult drive(const IterationContext& ctx, const PrimalDualState& x0, const StepFunction& step) {
  const auto start = std::chrono::steady_clock::now();
  const auto& params = ctx.params;
  const auto& problem = ctx.op.problem();
  const bool want_diag = params.diagnostics && params.reference.has_value() &&
                         params.variant != Variant::sfb;
  if (params.diagnostics && params.variant == Variant::sfb)
    spdlog::warn("diagnostics are defined for the forward-backward-forward variants only");

  RunResult result(x0);
  result.gamma = ctx.psi.gammas();
  result.sigma = ctx.psi.sigmas();
  result.tau = ctx.psi.taus();
  PrimalDualState x = x0;
  PrimalDualState x_prev = x0;
  double last_r = std::numeric_limits<double>::quiet_NaN();

  for (std::uint64_t k = 0; k < params.max_iters; ++k) {
    try {
      auto s = step(x, x_prev, k);
      const double r = residual_r_psi(ctx.op, s.x_next, ctx.psi, params.exec);
      const bool stop_tol = params.tol > 0.0 && r < params.tol;
      std::optional<double> res;
      bool stop_res = false;
      if (params.res_tol) {
        res = residual_res(problem, s.x_next.primal());
        stop_res = *res < *params.res_tol;
      }
      const bool last = k + 1 == params.max_iters || stop_tol || stop_res;
      if (k % params.trace_every == 0 || last) {
        IterRecord rec;
        rec.k = k;
        rec.r_psi = r;
        rec.res = res ? *res : residual_res(problem, s.x_next.primal());
        rec.consensus_gap = consensus_gap(s.x_next);
        rec.feas_gap = feasibility_gap(problem, s.x_next);
        rec.step_norm = std::sqrt(psi_dist_sq(s.x_next, x, ctx.psi));
        rec.alpha = s.alpha;
        rec.rho = s.rho;
        rec.batch = s.batch;
        if (want_diag) rec.diag = diagnose(ctx, x, x_prev, s, *params.reference);
        result.trace.records.push_back(rec);
      }
      x_prev = std::move(x);
      x = std::move(s.x_next);
      last_r = r;
      result.iterations = k + 1;
      if (stop_tol) {
        result.stop = StopReason::tolerance;
        break;
      }
      if (stop_res) {
        result.stop = StopReason::res_tolerance;
        break;
      }
    } catch (const NumericError& e) {
      result.stop = StopReason::diverged;
      result.error = e.what();
      spdlog::error("run aborted at iteration {}: {}", k, e.what());
      break;
    }
  }

  result.final_state = x;
  result.final_r_psi = last_r;
  if (result.stop != StopReason::diverged) {
    if (result.iterations == 0) result.final_r_psi = residual_r_psi(ctx.op, x, ctx.psi);
    result.final_res = result.trace.records.empty()
                           ? residual_res(problem, x.primal())
                           : result.trace.records.back().res;
  }
  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

RunResult run(const ExtendedOperator& op, const SamplingOracle& orc, const SolverParams& params,
              const PrimalDualState& x0, std::uint64_t seed) {
  validate_params(op, params);
  require_same_layout(op.partition(), x0.partition(), "initial state");
  require_same_layout(op.partition(), orc.mean_model().partition(), "sampling oracle");
  const auto psi = make_preconditioner(op, params);
  const IterationContext ctx{op, orc, psi, params, seed, op.lipschitz() * psi.max_step()};
  if (params.variant == Variant::sfb)
    return drive(ctx, x0, [&](const PrimalDualState& x, const PrimalDualState&, std::uint64_t k) {
      return sfb_step(ctx, x, k);
    });
  return drive(ctx, x0,
               [&](const PrimalDualState& x, const PrimalDualState& xp, std::uint64_t k) {
                 return risfbf_step(ctx, x, xp, k);
               });
}

DiagnosticsReport diagnostics_check(const SolverTrace& trace, double slack) {
  DiagnosticsReport rep;
  if (!trace.has_diagnostics()) return rep;
  rep.recorded = true;
  rep.worst_slack = -std::numeric_limits<double>::infinity();
  for (const auto& r : trace.records) {
    const auto& d = *r.diag;
    ++rep.checked;
    const double fr = d.fr_lhs - d.fr_rhs;
    const double yzg = d.yzg_lhs - d.yzg_rhs;
    const double h = -d.H;
    const double c = d.coupling;
    bool bad = false;
    if (fr > slack) ++rep.recursion_violations, bad = true;
    if (yzg > slack) ++rep.residual_bound_violations, bad = true;
    if (h > slack) ++rep.h_violations, bad = true;
    if (c > slack) ++rep.coupling_violations, bad = true;
    rep.worst_slack = std::max({rep.worst_slack, fr, yzg, h, c});
    if (bad && !rep.first_bad_k) rep.first_bad_k = r.k;
  }
  return rep;
}

ReferenceSolution reference_solution(const ExtendedOperator& op, double tol,
                                     std::size_t max_iters, double step_fraction) {
  const AdditiveGaussianOracle exact(op.problem().cost_ptr(), 0.0);
  SolverParams params;
  params.variant = Variant::sfbf;
  params.step_fraction = step_fraction;
  params.tol = tol;
  params.max_iters = max_iters;
  params.trace_every = max_iters;
  params.exec = Exec::serial;
  const auto res = run(op, exact, params, PrimalDualState(op.partition_ptr()), 0);
  if (res.stop != StopReason::tolerance)
    throw ToleranceError(fmt::format("reference run stopped ({}) with r = {:.3e} > {:.1e} after "
                                     "{} iterations",
                                     to_string(res.stop), res.final_r_psi, tol, res.iterations),
                         res.final_r_psi);
  return ReferenceSolution{res.final_state, res.final_r_psi, res.iterations};
}

}  // namespace gnes
