#pragma once

#include "gnes/blockvec.hpp"
#include "gnes/operators.hpp"
#include "gnes/stochastic.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace gnes {

enum class Variant { risfbf, sfbf, sfb };

std::string_view to_string(Variant v) noexcept;
Variant parse_variant(std::string_view name);

struct StepSizes {
  std::vector<double> gamma, sigma, tau;
};

struct SolverParams {
  Variant variant = Variant::risfbf;
  double alpha_bar = 0.1;
  double nu = 0.01;
  /// Explicit per-agent step sizes; empty means "auto": every step set to
  /// step_fraction * (1 - nu) / (2 ell_V).
  std::optional<StepSizes> steps;
  double step_fraction = 0.5;
  std::size_t max_iters = 5000;
  /// Stop once r_Psi(X_k) < tol (0 disables).
  double tol = 1e-6;
  /// Optional extra stop once res(u_k) < res_tol.
  std::optional<double> res_tol;
  /// Replaces the relaxation schedule by a constant (e.g. rho = 1 sweeps).
  std::optional<double> rho_fixed;
  /// Multiplies rho_k after the schedule; anything but 1 is a deliberately
  /// inadmissible override used as a negative control.
  double rho_scale = 1.0;
  BatchSchedule batch;
  /// Record the analysis quantities (needs `reference`).
  bool diagnostics = false;
  std::optional<PrimalDualState> reference;
  /// Record every trace_every-th iteration (the last one is always recorded).
  std::size_t trace_every = 1;
  Exec exec = Exec::parallel;
};

/// Largest admissible step size (1 - nu) / (2 ell_V).
double step_bound(const ExtendedOperator& op, double nu);

/// Psi from the params (auto or explicit); throws ConfigError when a step
/// exceeds step_bound.
Preconditioner make_preconditioner(const ExtendedOperator& op, const SolverParams& params);

/// Throws ConfigError for any configuration the convergence theory excludes.
void validate_params(const ExtendedOperator& op, const SolverParams& params);

/// alpha_k = alpha_bar (1 - 1/(k+1)); 0 for the SFBF and SFB variants.
double alpha_schedule(const SolverParams& params, std::uint64_t k);

struct Relaxation {
  double rho = 1.0;
  bool clamped = false;
};

/// rho_k = (3 - nu)(1 - alpha_bar)^2 / (2 (2 alpha_k^2 - alpha_k + 1)(1 + ell_{V,Psi})),
/// clamped to 1. SFBF and SFB use rho = 1; rho_fixed and rho_scale apply last.
Relaxation rho_schedule(const SolverParams& params, double alpha_k, double ell_v_psi);

/// 2 alpha^2 + (1 - alpha)(1 - (3 - nu)(1 - alpha) / (2 rho (1 + ell))), must be <= 0.
double coupling_value(double alpha, double rho, double nu, double ell_v_psi);

/// Everything one iteration needs besides the iterates.
struct IterationContext {
  const ExtendedOperator& op;
  const SamplingOracle& orc;
  const Preconditioner& psi;
  const SolverParams& params;
  std::uint64_t seed;
  double ell_v_psi;
};

/// Intermediate points of one iteration. For SFB, z = X_k, y = X_{k+1} and b is unused.
struct StepOutput {
  PrimalDualState x_next, z, y, a, b;
  double alpha = 0.0;
  double rho = 1.0;
  std::uint64_t batch = 1;
};

/// Z = X + alpha (X - X_prev); A = Vhat(Z, xi); Y = J(Z - Psi^-1 A);
/// B = Vhat(Y, eta); X_next = (1 - rho) Z + rho (Y + Psi^-1 (A - B)).
StepOutput risfbf_step(const IterationContext& ctx, const PrimalDualState& x,
                       const PrimalDualState& x_prev, std::uint64_t k);

/// X_next = J(X - Psi^-1 Vhat(X, xi)).
StepOutput sfb_step(const IterationContext& ctx, const PrimalDualState& x, std::uint64_t k);

struct IterDiagnostics {
  double dM = 0.0;       ///< Delta M_k
  double dN = 0.0;       ///< Delta N_k(p)
  double H = 0.0;        ///< H_k(p)
  double delta = 0.0;    ///< delta_k(p)
  double fr_lhs = 0.0;   ///< ||X_{k+1} - p||^2_Psi
  double fr_rhs = 0.0;   ///< right side of the one-step recursion
  double yzg_lhs = 0.0;  ///< -||Z_k - Y_k||^2_Psi
  double yzg_rhs = 0.0;  ///< ||U_k||^2_{Psi^-1} - r^2(Z_k) / 2
  double coupling = 0.0; ///< coupling_value(alpha_k, rho_k)
};

struct IterRecord {
  std::uint64_t k = 0;
  double r_psi = 0.0;          ///< r_Psi(X_{k+1})
  double res = 0.0;            ///< res(u_{k+1})
  double consensus_gap = 0.0;  ///< max_{i,j} ||lambda_i - lambda_j|| at X_{k+1}
  double feas_gap = 0.0;       ///< ||max(D u_{k+1} - b, 0)||
  double step_norm = 0.0;      ///< ||X_{k+1} - X_k||_Psi
  double alpha = 0.0;
  double rho = 0.0;
  std::uint64_t batch = 0;
  std::optional<IterDiagnostics> diag;
};

struct SolverTrace {
  std::vector<IterRecord> records;

  bool has_diagnostics() const noexcept;
  /// FNV-1a over the bit patterns of every recorded value.
  std::uint64_t hash() const;
  /// Columns: k, r_psi, res, consensus_gap, feas_gap, step_norm[, dM, dN, H, delta].
  std::string to_csv() const;
};

enum class StopReason { tolerance, res_tolerance, max_iters, diverged };
std::string_view to_string(StopReason r) noexcept;

struct RunResult {
  explicit RunResult(PrimalDualState x) : final_state(std::move(x)) {}

  PrimalDualState final_state;
  SolverTrace trace;
  std::size_t iterations = 0;
  StopReason stop = StopReason::max_iters;
  std::string error;  ///< set when stop == diverged
  double final_r_psi = 0.0;
  double final_res = 0.0;
  double wall_seconds = 0.0;
  std::vector<double> gamma, sigma, tau;  ///< step sizes actually used
};

/// One iteration as seen by the driver: maps (X_k, X_{k-1}, k) to its outputs.
using StepFunction =
    std::function<StepOutput(const PrimalDualState&, const PrimalDualState&, std::uint64_t)>;

/// The iteration loop shared by all executors: stopping rules, trace records
/// and diagnostics are computed here from the step outputs.
RunResult drive(const IterationContext& ctx, const PrimalDualState& x0, const StepFunction& step);

/// Monolithic executor. X_{-1} := X_0.
RunResult run(const ExtendedOperator& op, const SamplingOracle& orc, const SolverParams& params,
              const PrimalDualState& x0, std::uint64_t seed);

struct DiagnosticsReport {
  bool recorded = false;
  std::size_t checked = 0;
  std::size_t recursion_violations = 0;
  std::size_t residual_bound_violations = 0;
  std::size_t h_violations = 0;
  std::size_t coupling_violations = 0;
  std::optional<std::uint64_t> first_bad_k;
  double worst_slack = 0.0;  ///< largest violation amount seen (<= 0 when clean)

  bool passed() const noexcept {
    return recorded && recursion_violations == 0 && residual_bound_violations == 0 &&
           h_violations == 0 && coupling_violations == 0;
  }
};

/// Evaluates the one-step recursion, the residual bound, H_k >= 0 and the
/// parameter coupling on every recorded iteration with absolute slack.
DiagnosticsReport diagnostics_check(const SolverTrace& trace, double slack = 1e-9);

/// Deterministic FBF (alpha = 0, rho = 1, exact operator) run to r_Psi < tol.
/// Used as the reference point of the diagnostics.
struct ReferenceSolution {
  PrimalDualState point;
  double r_psi = 0.0;
  std::size_t iterations = 0;
};
ReferenceSolution reference_solution(const ExtendedOperator& op, double tol = 1e-12,
                                     std::size_t max_iters = 5'000'000,
                                     double step_fraction = 0.5);

}  // namespace gnes
