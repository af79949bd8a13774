#include "gnes/operators.hpp"

#include "gnes/errors.hpp"
#include "gnes/kernels.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace gnes {

ExtendedOperator::ExtendedOperator(std::shared_ptr<const GameProblem> problem,
                                   std::shared_ptr<const CommGraph> graph)
    : problem_(std::move(problem)), graph_(std::move(graph)) {
  if (!problem_ || !graph_) throw ParameterError("extended operator needs a problem and a graph");
  if (graph_->num_agents() != problem_->num_agents())
    throw DimensionError(fmt::format("graph has {} nodes but the game has {} agents",
                                     graph_->num_agents(), problem_->num_agents()));
  d_norm_ = spectral_norm(problem_->stacked_coupling());
  ell_v_ = problem_->cost().lipschitz() + 2.0 * graph_->laplacian_norm() + d_norm_;
}

namespace {

void require_finite(std::span<const double> v, std::size_t agent, const char* what) {
  for (std::size_t c = 0; c < v.size(); ++c)
    if (!std::isfinite(v[c]))
      throw NumericError(fmt::format("{}: non-finite gradient entry {} for agent {}", what, c,
                                     agent),
                         agent);
}

}  // namespace

BlockVector apply_F(const GameProblem& p, const BlockVector& u, Exec exec) {
  if (u.kind() != BlockKind::primal) throw DimensionError("apply_F expects a primal vector");
  require_same_layout(p.partition(), u.partition(), "apply_F");
  BlockVector out(p.partition_ptr(), BlockKind::primal);
  const auto& part = p.partition();
  kernels::for_each_agent(exec, part.num_agents(), [&](std::size_t i) {
    auto block = out.span().subspan(part.primal_offset(i), part.dim(i));
    p.cost().gradient(i, u.span(), block);
    require_finite(block, i, "apply_F");
  });
  return out;
}

PrimalDualState apply_V(const ExtendedOperator& op, const PrimalDualState& x, Exec exec) {
  require_same_layout(op.partition(), x.partition(), "apply_V");
  PrimalDualState out(op.partition_ptr());
  const auto& part = op.partition();
  kernels::for_each_agent(exec, part.num_agents(), [&](std::size_t i) {
    // The u-block of `out` holds F_i first; operator_rows then reads it as f_i.
    auto f_i = out.u_span(i);
    op.problem().cost().gradient(i, x.u_all(), f_i);
    require_finite(f_i, i, "apply_V");
    kernels::operator_rows(op, i, x, f_i, out);
  });
  return out;
}

PrimalDualState resolvent_T(const ExtendedOperator& op, const PrimalDualState& x,
                            const Preconditioner& psi, Exec exec) {
  require_same_layout(op.partition(), x.partition(), "resolvent_T");
  require_same_layout(op.partition(), psi.partition(), "resolvent_T");
  PrimalDualState out(op.partition_ptr());
  kernels::for_each_agent(exec, op.partition().num_agents(), [&](std::size_t i) {
    kernels::resolvent_block(op, psi, i, x, out);
    kernels::require_finite_block(out, i, "resolvent_T");
  });
  return out;
}

PrimalDualState fixed_point_displacement(const ExtendedOperator& op, const PrimalDualState& x,
                                         const Preconditioner& psi, Exec exec) {
  const auto v = apply_V(op, x, exec);
  PrimalDualState y(op.partition_ptr());
  kernels::for_each_agent(exec, op.partition().num_agents(), [&](std::size_t i) {
    kernels::forward_backward_block(op, psi, i, x, v, y);
  });
  PrimalDualState out(op.partition_ptr());
  out.data() = x.data() - y.data();
  return out;
}

double residual_r_psi(const ExtendedOperator& op, const PrimalDualState& x,
                      const Preconditioner& psi, Exec exec) {
  return fixed_point_displacement(op, x, psi, exec).data().norm();
}

BlockVector proj_shared_set(const GameProblem& p, const BlockVector& v,
                            const ProjectionOptions& opts) {
  if (v.kind() != BlockKind::primal) throw DimensionError("proj_shared_set expects a primal vector");
  require_same_layout(p.partition(), v.partition(), "proj_shared_set");
  const auto& d = p.stacked_coupling();
  const auto& b = p.total_offset();
  const auto& lo = p.lower();
  const auto& hi = p.upper();

  std::vector<Eigen::Index> rows;
  std::vector<double> row_norm_sq;
  for (Eigen::Index r = 0; r < d.rows(); ++r) {
    const double nsq = d.row(r).squaredNorm();
    if (nsq == 0.0) {
      if (b[r] < 0.0)
        throw ValidationError(fmt::format("coupling row {} is zero with b = {} < 0: C is empty", r,
                                          b[r]));
      continue;
    }
    rows.push_back(r);
    row_norm_sq.push_back(nsq);
  }

  Eigen::VectorXd x = v.data();
  Eigen::VectorXd box_inc = Eigen::VectorXd::Zero(x.size());
  std::vector<Eigen::VectorXd> half_inc(rows.size(), Eigen::VectorXd::Zero(x.size()));
  Eigen::VectorXd y(x.size());
  double change = 0.0;
  for (std::size_t sweep = 0; sweep < opts.max_sweeps; ++sweep) {
    const Eigen::VectorXd start = x;
    y = x + box_inc;
    x = y.cwiseMax(lo).cwiseMin(hi);
    box_inc = y - x;
    for (std::size_t h = 0; h < rows.size(); ++h) {
      y = x + half_inc[h];
      const auto a = d.row(rows[h]);
      const double excess = a.dot(y) - b[rows[h]];
      if (excess > 0.0)
        x = y - (excess / row_norm_sq[h]) * a.transpose();
      else
        x = y;
      half_inc[h] = y - x;
    }
    change = (x - start).norm();
    if (change < opts.tol) return BlockVector(v.partition_ptr(), BlockKind::primal, std::move(x));
  }
  throw ToleranceError(fmt::format("Dykstra projection did not converge in {} sweeps "
                                   "(last change {:.3e})",
                                   opts.max_sweeps, change),
                       change);
}

double residual_res(const GameProblem& p, const BlockVector& u, const ProjectionOptions& opts) {
  const auto f = apply_F(p, u, Exec::serial);
  BlockVector shifted(u.partition_ptr(), BlockKind::primal, u.data() - f.data());
  const auto proj = proj_shared_set(p, shifted, opts);
  return (u.data() - proj.data()).norm();
}

KktReport kkt_check(const GameProblem& p, const BlockVector& u, const Eigen::VectorXd& lambda,
                    double tol) {
  if (!(tol > 0.0)) throw ParameterError("kkt_check tolerance must be positive");
  const auto& part = p.partition();
  if (lambda.size() != static_cast<Eigen::Index>(part.constraint_dim()))
    throw DimensionError(fmt::format("kkt_check: multiplier has length {}, expected m = {}",
                                     lambda.size(), part.constraint_dim()));
  KktReport rep;
  const auto f = apply_F(p, u, Exec::serial);
  double stat = 0.0;
  for (std::size_t i = 0; i < part.num_agents(); ++i) {
    const auto di = static_cast<Eigen::Index>(part.dim(i));
    const Eigen::VectorXd u_i = u.block(i);
    const Eigen::VectorXd g = f.block(i) + p.coupling(i).transpose() * lambda;
    const Eigen::VectorXd w = u_i - g;
    Eigen::VectorXd pr(di);
    p.regularizer(i).prox({w.data(), static_cast<std::size_t>(di)}, 1.0,
                          {pr.data(), static_cast<std::size_t>(di)});
    stat = std::max(stat, (u_i - pr).norm());
  }
  const Eigen::VectorXd slack = p.stacked_coupling() * u.data() - p.total_offset();
  rep.stationarity_gap = stat;
  rep.feasibility_gap = std::max(0.0, slack.maxCoeff());
  rep.complementarity_gap = (lambda.array() * slack.array()).abs().maxCoeff();
  rep.min_multiplier = lambda.minCoeff();
  rep.stationarity = stat <= tol;
  rep.feasibility = (slack.array() <= tol).all();
  rep.complementarity = rep.complementarity_gap <= tol && rep.min_multiplier >= -tol;
  return rep;
}

double consensus_gap(const PrimalDualState& x) {
  const auto n = x.partition().num_agents();
  double gap = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto li = x.lambda_span(i);
    for (std::size_t j = i + 1; j < n; ++j) {
      const auto lj = x.lambda_span(j);
      double acc = 0.0;
      for (std::size_t r = 0; r < li.size(); ++r) acc += (li[r] - lj[r]) * (li[r] - lj[r]);
      gap = std::max(gap, std::sqrt(acc));
    }
  }
  return gap;
}

double feasibility_gap(const GameProblem& p, const PrimalDualState& x) {
  const Eigen::VectorXd slack = p.stacked_coupling() * x.u() - p.total_offset();
  return slack.cwiseMax(0.0).norm();
}

Eigen::VectorXd mean_multiplier(const PrimalDualState& x) {
  const auto& part = x.partition();
  const auto m = static_cast<Eigen::Index>(part.constraint_dim());
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(m);
  for (std::size_t i = 0; i < part.num_agents(); ++i)
    acc += x.lambda().segment(static_cast<Eigen::Index>(i) * m, m);
  return acc / static_cast<double>(part.num_agents());
}

}  // namespace gnes
