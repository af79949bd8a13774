#pragma once

// Per-agent kernels shared by the monolithic solver and the distributed
// executor. Each kernel writes only the blocks owned by `agent`, so a loop over
// agents can run in parallel, and the arithmetic (including its order) is the
// same whichever executor calls it.

#include "gnes/blockvec.hpp"
#include "gnes/operators.hpp"

#include <array>
#include <exception>
#include <span>

namespace gnes::kernels {

/// [start, start + length) of agent i's u, mu and lambda blocks in the state layout.
struct AgentRanges {
  std::array<std::size_t, 3> start;
  std::array<std::size_t, 3> length;
};

AgentRanges agent_ranges(const AgentPartition& p, std::size_t agent);

/// Runs fn(i) for every agent; the OpenMP path rethrows the exception of the
/// lowest failing agent so errors are deterministic too.
template <class Fn>
void for_each_agent(Exec exec, std::size_t n, Fn&& fn) {
  if (exec == Exec::serial || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  const auto count = static_cast<long>(n);
#pragma omp parallel for schedule(static)
  for (long i = 0; i < count; ++i) {
    try {
      fn(static_cast<std::size_t>(i));
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

/// Rows of V for agent i at x, given the agent's pseudogradient block f_i
/// (exact or sampled). Reads lambda_j, mu_j of graph neighbours only.
void operator_rows(const ExtendedOperator& op, std::size_t agent, const PrimalDualState& x,
                   std::span<const double> f_i, PrimalDualState& out);

/// Agent i's block of J_{Psi^-1 T}(w).
void resolvent_block(const ExtendedOperator& op, const Preconditioner& psi, std::size_t agent,
                     const PrimalDualState& w, PrimalDualState& out);

/// Agent i's block of J_{Psi^-1 T}(z - Psi^-1 a).
void forward_backward_block(const ExtendedOperator& op, const Preconditioner& psi,
                            std::size_t agent, const PrimalDualState& z, const PrimalDualState& a,
                            PrimalDualState& y);

/// Agent i's block of z + alpha (x - x_prev).
void inertia_block(const AgentPartition& p, std::size_t agent, const PrimalDualState& x,
                   const PrimalDualState& x_prev, double alpha, PrimalDualState& z);

/// Agent i's block of (1 - rho) z + rho (y + Psi^-1 (a - b)).
void correction_block(const Preconditioner& psi, std::size_t agent, const PrimalDualState& z,
                      const PrimalDualState& y, const PrimalDualState& a,
                      const PrimalDualState& b, double rho, PrimalDualState& x_next);

/// Throws NumericError naming agent and field if any owned entry is not finite.
void require_finite_block(const PrimalDualState& x, std::size_t agent, const char* what);

}  // namespace gnes::kernels
