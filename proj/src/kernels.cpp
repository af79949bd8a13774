#include "gnes/kernels.hpp"

#include "gnes/errors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace gnes::kernels {

AgentRanges agent_ranges(const AgentPartition& p, std::size_t agent) {
  const auto m = p.constraint_dim();
  const auto d = p.primal_dim();
  return AgentRanges{{p.primal_offset(agent), d + agent * m, d + p.dual_dim() + agent * m},
                     {p.dim(agent), m, m}};
}

void operator_rows(const ExtendedOperator& op, std::size_t agent, const PrimalDualState& x,
                   std::span<const double> f_i, PrimalDualState& out) {
  const auto& prob = op.problem();
  const auto& graph = op.graph();
  const auto& p = prob.partition();
  const auto m = p.constraint_dim();
  const auto di = p.dim(agent);
  const auto& d_i = prob.coupling(agent);
  const auto& b_i = prob.offset(agent);

  const auto u_i = x.u_span(agent);
  const auto lam_i = x.lambda_span(agent);
  const auto mu_i = x.mu_span(agent);
  auto out_u = out.u_span(agent);
  auto out_mu = out.mu_span(agent);
  auto out_lam = out.lambda_span(agent);

  // F_i(u) + D_i^T lambda_i
  for (std::size_t c = 0; c < di; ++c) {
    double acc = f_i[c];
    for (std::size_t r = 0; r < m; ++r)
      acc += d_i(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) * lam_i[r];
    out_u[c] = acc;
  }

  // sum_j w_ij (lambda_i - lambda_j)  and  sum_j w_ij ((lambda_i - mu_i) - (lambda_j - mu_j))
  for (std::size_t r = 0; r < m; ++r) {
    out_mu[r] = 0.0;
    out_lam[r] = 0.0;
  }
  for (auto j : graph.neighbors(agent)) {
    const double w = graph.weight(agent, j);
    const auto lam_j = x.lambda_span(j);
    const auto mu_j = x.mu_span(j);
    for (std::size_t r = 0; r < m; ++r) {
      out_mu[r] += w * (lam_i[r] - lam_j[r]);
      out_lam[r] += w * ((lam_i[r] - mu_i[r]) - (lam_j[r] - mu_j[r]));
    }
  }

  // b_i + Lbar(lambda - mu)_i - D_i u_i
  for (std::size_t r = 0; r < m; ++r) {
    double du = 0.0;
    for (std::size_t c = 0; c < di; ++c)
      du += d_i(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) * u_i[c];
    out_lam[r] = b_i[static_cast<Eigen::Index>(r)] + out_lam[r] - du;
  }
}

void resolvent_block(const ExtendedOperator& op, const Preconditioner& psi, std::size_t agent,
                     const PrimalDualState& w, PrimalDualState& out) {
  op.problem().regularizer(agent).prox(w.u_span(agent), psi.gamma(agent), out.u_span(agent));
  const auto mu_w = w.mu_span(agent);
  const auto lam_w = w.lambda_span(agent);
  auto mu_o = out.mu_span(agent);
  auto lam_o = out.lambda_span(agent);
  for (std::size_t r = 0; r < mu_w.size(); ++r) {
    mu_o[r] = mu_w[r];
    lam_o[r] = std::max(lam_w[r], 0.0);
  }
}

void forward_backward_block(const ExtendedOperator& op, const Preconditioner& psi,
                            std::size_t agent, const PrimalDualState& z, const PrimalDualState& a,
                            PrimalDualState& y) {
  const auto& p = z.partition();
  const auto ranges = agent_ranges(p, agent);
  const auto& steps = psi.steps();
  // Stage z - Psi^-1 a in y's own blocks, then apply the resolvent in place.
  for (int part = 0; part < 3; ++part) {
    const auto s = ranges.start[part];
    for (std::size_t j = s; j < s + ranges.length[part]; ++j) {
      const auto ji = static_cast<Eigen::Index>(j);
      y.data()[ji] = z.data()[ji] - steps[ji] * a.data()[ji];
    }
  }
  auto u = y.u_span(agent);
  std::array<double, 64> small{};
  std::vector<double> large;
  std::span<double> staged;
  if (u.size() <= small.size()) {
    staged = std::span<double>(small.data(), u.size());
  } else {
    large.resize(u.size());
    staged = large;
  }
  std::copy(u.begin(), u.end(), staged.begin());
  op.problem().regularizer(agent).prox(staged, psi.gamma(agent), u);
  for (auto& v : y.lambda_span(agent)) v = std::max(v, 0.0);
}

void inertia_block(const AgentPartition& p, std::size_t agent, const PrimalDualState& x,
                   const PrimalDualState& x_prev, double alpha, PrimalDualState& z) {
  const auto ranges = agent_ranges(p, agent);
  for (int part = 0; part < 3; ++part) {
    const auto s = ranges.start[part];
    for (std::size_t j = s; j < s + ranges.length[part]; ++j) {
      const auto ji = static_cast<Eigen::Index>(j);
      z.data()[ji] = x.data()[ji] + alpha * (x.data()[ji] - x_prev.data()[ji]);
    }
  }
}

void correction_block(const Preconditioner& psi, std::size_t agent, const PrimalDualState& z,
                      const PrimalDualState& y, const PrimalDualState& a,
                      const PrimalDualState& b, double rho, PrimalDualState& x_next) {
  const auto ranges = agent_ranges(z.partition(), agent);
  const auto& steps = psi.steps();
  for (int part = 0; part < 3; ++part) {
    const auto s = ranges.start[part];
    for (std::size_t j = s; j < s + ranges.length[part]; ++j) {
      const auto ji = static_cast<Eigen::Index>(j);
      const double r = y.data()[ji] + steps[ji] * (a.data()[ji] - b.data()[ji]);
      x_next.data()[ji] = (1.0 - rho) * z.data()[ji] + rho * r;
    }
  }
}

void require_finite_block(const PrimalDualState& x, std::size_t agent, const char* what) {
  static constexpr const char* names[3] = {"u", "mu", "lambda"};
  const auto ranges = agent_ranges(x.partition(), agent);
  for (int part = 0; part < 3; ++part) {
    const auto s = ranges.start[part];
    for (std::size_t j = s; j < s + ranges.length[part]; ++j)
      if (!std::isfinite(x.data()[static_cast<Eigen::Index>(j)]))
        throw NumericError(fmt::format("{}: non-finite {}[{}] entry {} for agent {}", what,
                                       names[part], agent, j - s, agent),
                           agent);
  }
}

}  // namespace gnes::kernels
