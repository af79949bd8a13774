#include "gnes/agentnet.hpp"

#include "gnes/errors.hpp"
#include "gnes/kernels.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <cmath>
#include <fstream>
#include <limits>
#include <set>

namespace gnes {

namespace {

constexpr double kPoison = std::numeric_limits<double>::quiet_NaN();

const char* phase_name(ExchangePhase p) { return p == ExchangePhase::inertial ? "inertial" : "mid"; }

}  // namespace

nlohmann::json Message::summary() const {
  return {{"k", k},
          {"phase", phase_name(phase)},
          {"kind", kind == PayloadKind::strategy ? "strategy" : "dual"},
          {"sender", sender},
          {"receiver", receiver},
          {"u", u.size()},
          {"mu", mu.size()},
          {"lambda", lambda.size()}};
}

namespace {

/// Strategy recipients of every agent: j receives u_i iff i is in N_j^A.
std::vector<std::vector<std::size_t>> strategy_recipients(const CostModel& cost) {
  const auto n = cost.partition().num_agents();
  std::vector<std::vector<std::size_t>> out(n);
  for (std::size_t j = 0; j < n; ++j)
    for (auto i : cost.interaction_neighbors(j)) out.at(i).push_back(j);
  return out;
}

PrimalDualState poisoned(const PartitionPtr& p) {
  return PrimalDualState(p, Eigen::VectorXd::Constant(static_cast<Eigen::Index>(p->state_dim()),
                                                      kPoison));
}

void copy_own(const PrimalDualState& from, std::size_t agent, PrimalDualState& to) {
  const auto r = kernels::agent_ranges(from.partition(), agent);
  for (int part = 0; part < 3; ++part) {
    const auto s = static_cast<Eigen::Index>(r.start[part]);
    const auto len = static_cast<Eigen::Index>(r.length[part]);
    to.data().segment(s, len) = from.data().segment(s, len);
  }
}

/// One agent. It holds its own blocks and whatever its neighbours sent in the
/// current round; every other entry of its views is NaN.
class AgentNode {
 public:
  AgentNode(std::size_t id, const IterationContext& ctx, std::vector<std::size_t> strategy_to,
            const PrimalDualState& x0, bool audit)
      : id_(id),
        ctx_(ctx),
        strategy_from_(ctx.op.problem().cost().interaction_neighbors(id)),
        strategy_to_(std::move(strategy_to)),
        dual_peers_(ctx.op.graph().neighbors(id)),
        audit_(audit),
        x_(poisoned(ctx.op.partition_ptr())),
        x_prev_(poisoned(ctx.op.partition_ptr())),
        z_(poisoned(ctx.op.partition_ptr())),
        a_(poisoned(ctx.op.partition_ptr())),
        y_(poisoned(ctx.op.partition_ptr())),
        b_(poisoned(ctx.op.partition_ptr())),
        x_next_(poisoned(ctx.op.partition_ptr())) {
    copy_own(x0, id_, x_);
    copy_own(x0, id_, x_prev_);
  }

  std::size_t id() const noexcept { return id_; }

  /// Step (1): Z_i = X_i + alpha (X_i - X_prev_i) on the agent's own blocks.
  void inertia(double alpha) {
    reset_views();
    kernels::inertia_block(ctx_.op.partition(), id_, x_, x_prev_, alpha, z_);
  }

  /// Starts a round: the SFB variant exchanges X itself.
  void hold() {
    reset_views();
    copy_own(x_, id_, z_);
  }

  void emit(ExchangePhase phase, std::uint64_t k, std::vector<Message>& outbox) const {
    const auto& src = phase == ExchangePhase::inertial ? z_ : y_;
    for (auto j : strategy_to_) {
      Message m{k, phase, PayloadKind::strategy, id_, j, {}, {}, {}};
      const auto u = src.u_span(id_);
      m.u.assign(u.begin(), u.end());
      outbox.push_back(std::move(m));
    }
    for (auto j : dual_peers_) {
      Message m{k, phase, PayloadKind::dual, id_, j, {}, {}, {}};
      const auto mu = src.mu_span(id_);
      const auto lam = src.lambda_span(id_);
      m.mu.assign(mu.begin(), mu.end());
      m.lambda.assign(lam.begin(), lam.end());
      outbox.push_back(std::move(m));
    }
  }

  void receive(const Message& m, ExchangePhase phase, std::uint64_t k) {
    if (m.receiver != id_ || m.k != k || m.phase != phase)
      throw LocalityError(fmt::format("agent {} got a message for agent {} (k = {}, phase {}) "
                                      "during k = {}, phase {}",
                                      id_, m.receiver, m.k, phase_name(m.phase), k,
                                      phase_name(phase)));
    auto& view = phase == ExchangePhase::inertial ? z_ : y_;
    const auto licensed = [&](const std::vector<std::size_t>& from) {
      return std::find(from.begin(), from.end(), m.sender) != from.end();
    };
    if (m.kind == PayloadKind::strategy) {
      if (!licensed(strategy_from_) || !m.mu.empty() || !m.lambda.empty())
        throw LocalityError(fmt::format("agent {}: unlicensed strategy payload from agent {}",
                                        id_, m.sender));
      auto dst = view.u_span(m.sender);
      if (m.u.size() != dst.size())
        throw DimensionError(fmt::format("agent {}: strategy payload from {} has length {}", id_,
                                         m.sender, m.u.size()));
      std::copy(m.u.begin(), m.u.end(), dst.begin());
      got_strategy_.insert(m.sender);
    } else {
      if (!licensed(dual_peers_) || !m.u.empty())
        throw LocalityError(fmt::format("agent {}: unlicensed dual payload from agent {}", id_,
                                        m.sender));
      auto mu = view.mu_span(m.sender);
      auto lam = view.lambda_span(m.sender);
      if (m.mu.size() != mu.size() || m.lambda.size() != lam.size())
        throw DimensionError(fmt::format("agent {}: dual payload from {} has the wrong size", id_,
                                         m.sender));
      std::copy(m.mu.begin(), m.mu.end(), mu.begin());
      std::copy(m.lambda.begin(), m.lambda.end(), lam.begin());
      got_dual_.insert(m.sender);
    }
  }

  void barrier(ExchangePhase phase, std::uint64_t k) {
    for (auto j : strategy_from_)
      if (!got_strategy_.count(j))
        throw DeadlockError(fmt::format("agent {} is missing the strategy message of agent {} at "
                                        "the {} barrier of iteration {}",
                                        id_, j, phase_name(phase), k));
    for (auto j : dual_peers_)
      if (!got_dual_.count(j))
        throw DeadlockError(fmt::format("agent {} is missing the dual message of agent {} at the "
                                        "{} barrier of iteration {}",
                                        id_, j, phase_name(phase), k));
    got_strategy_.clear();
    got_dual_.clear();
  }

  /// Step (2): A_i = Vhat_i(Z), Y_i = J_i(Z_i - Psi_i^-1 A_i).
  void forward(std::uint64_t k, std::uint64_t batch) {
    rows(z_, a_, k, batch, Phase::xi, ExchangePhase::inertial);
    kernels::forward_backward_block(ctx_.op, ctx_.psi, id_, z_, a_, y_);
  }

  /// Step (3): B_i = Vhat_i(Y), X_next_i = (1 - rho) Z_i + rho (Y_i + Psi_i^-1 (A_i - B_i)).
  void correct(std::uint64_t k, std::uint64_t batch, double rho) {
    rows(y_, b_, k, batch, Phase::eta, ExchangePhase::mid);
    kernels::correction_block(ctx_.psi, id_, z_, y_, a_, b_, rho, x_next_);
    kernels::require_finite_block(x_next_, id_, "relaxed update");
  }

  void finish_sfb() {
    kernels::require_finite_block(y_, id_, "forward-backward update");
    copy_own(y_, id_, x_next_);
  }

  void advance() {
    copy_own(x_, id_, x_prev_);
    copy_own(x_next_, id_, x_);
  }

  void gather(StepOutput& out, bool sfb) const {
    copy_own(z_, id_, out.z);
    copy_own(a_, id_, out.a);
    copy_own(y_, id_, out.y);
    if (!sfb) copy_own(b_, id_, out.b);
    copy_own(x_next_, id_, out.x_next);
  }

  std::uint64_t audited_reads() const noexcept { return audited_reads_; }

 private:
  void reset_views() {
    for (auto* v : {&z_, &a_, &y_, &b_, &x_next_}) v->data().setConstant(kPoison);
  }

  void rows(const PrimalDualState& at, PrimalDualState& out, std::uint64_t k, std::uint64_t batch,
            Phase phase, ExchangePhase round) {
    auto f_i = out.u_span(id_);
    const StreamKey key{ctx_.seed, id_, k, phase};
    bool finite = audit_ ? gradient_or_nan(at.u_all(), key, batch, f_i)
                         : (ctx_.orc.batch_gradient(id_, at.u_all(), batch, key, f_i), true);
    for (double v : f_i) finite = finite && std::isfinite(v);
    if (!finite || audit_) probe_reads(at, key, batch, f_i, k, round);
    if (!finite)
      throw NumericError(fmt::format("iteration {}, phase {}: sampled gradient of agent {} is "
                                     "not finite",
                                     k, phase == Phase::xi ? "xi" : "eta", id_),
                         id_);
    kernels::operator_rows(ctx_.op, id_, at, f_i, out);
    if (audit_) {
      audited_reads_ += strategy_from_.size() + dual_peers_.size();
      spdlog::trace("audit: agent {} k={} {} reads u of {} and (mu, lambda) of {}", id_, k,
                    phase_name(round), fmt::join(strategy_from_, ","),
                    fmt::join(dual_peers_, ","));
    }
    kernels::require_finite_block(out, id_, "operator rows");
  }

  /// The oracle rejects non-finite input; under audit that counts as a poisoned result.
  bool gradient_or_nan(std::span<const double> u, const StreamKey& key, std::uint64_t batch,
                       std::span<double> out) const {
    try {
      ctx_.orc.batch_gradient(id_, u, batch, key, out);
      return true;
    } catch (const NumericError&) {
      std::fill(out.begin(), out.end(), kPoison);
      return false;
    }
  }

  /// Recomputes the gradient with all unreceived blocks set to zero and then
  /// with each of them poisoned alone; any block that changes the result was
  /// read without a message.
  void probe_reads(const PrimalDualState& at, const StreamKey& key, std::uint64_t batch,
                   std::span<const double> got, std::uint64_t k, ExchangePhase round) const {
    const auto& part = at.partition();
    std::vector<double> u(at.u_all().begin(), at.u_all().end());
    std::vector<std::size_t> unreceived;
    for (std::size_t j = 0; j < part.num_agents(); ++j) {
      if (j == id_ || std::find(strategy_from_.begin(), strategy_from_.end(), j) !=
                          strategy_from_.end())
        continue;
      unreceived.push_back(j);
      for (std::size_t c = 0; c < part.dim(j); ++c) u[part.primal_offset(j) + c] = 0.0;
    }
    std::vector<double> clean(got.size());
    gradient_or_nan(u, key, batch, clean);
    bool same = true;
    for (std::size_t c = 0; c < got.size(); ++c)
      same = same && (std::isfinite(got[c]) && got[c] == clean[c]);
    bool clean_finite = true;
    for (double v : clean) clean_finite = clean_finite && std::isfinite(v);
    if (same || !clean_finite) return;
    for (auto j : unreceived) {
      std::vector<double> w = u;
      for (std::size_t c = 0; c < part.dim(j); ++c) w[part.primal_offset(j) + c] = kPoison;
      std::vector<double> g(got.size());
      gradient_or_nan(w, key, batch, g);
      for (double v : g)
        if (!std::isfinite(v))
          throw LocalityError(fmt::format("agent {} read u of agent {} without a message "
                                          "(k = {}, {} round)",
                                          id_, j, k, phase_name(round)));
    }
    throw LocalityError(fmt::format("agent {} read strategy blocks it never received (k = {}, "
                                    "{} round)",
                                    id_, k, phase_name(round)));
  }

  std::size_t id_;
  const IterationContext& ctx_;
  std::vector<std::size_t> strategy_from_;
  std::vector<std::size_t> strategy_to_;
  std::vector<std::size_t> dual_peers_;
  bool audit_;
  PrimalDualState x_, x_prev_, z_, a_, y_, b_, x_next_;
  std::set<std::size_t> got_strategy_, got_dual_;
  std::uint64_t audited_reads_ = 0;
};

}  // namespace

std::uint64_t expected_messages_per_iteration(const ExtendedOperator& op, Variant variant) {
  std::uint64_t per_round = 0;
  for (std::size_t i = 0; i < op.partition().num_agents(); ++i)
    per_round += op.problem().cost().interaction_neighbors(i).size() +
                 op.graph().neighbors(i).size();
  return (variant == Variant::sfb ? 1 : 2) * per_round;
}

DistributedResult run_distributed(const ExtendedOperator& op, const SamplingOracle& orc,
                                  const SolverParams& params, const PrimalDualState& x0,
                                  std::uint64_t seed, const DistributedOptions& options) {
  validate_params(op, params);
  require_same_layout(op.partition(), x0.partition(), "initial state");
  require_same_layout(op.partition(), orc.mean_model().partition(), "sampling oracle");
  const auto psi = make_preconditioner(op, params);
  const IterationContext ctx{op, orc, psi, params, seed, op.lipschitz() * psi.max_step()};
  const auto n = op.partition().num_agents();
  const bool sfb = params.variant == Variant::sfb;

  const auto recipients = strategy_recipients(op.problem().cost());
  std::vector<AgentNode> nodes;
  nodes.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    nodes.emplace_back(i, ctx, recipients[i], x0, options.audit);

  std::ofstream log;
  if (options.message_log) {
    log.open(*options.message_log, std::ios::out | std::ios::trunc);
    if (!log) throw IoError(fmt::format("cannot open message log {}", options.message_log->string()));
  }

  DistributedResult result{RunResult(x0)};
  std::vector<std::vector<Message>> outboxes(n);

  const auto exchange = [&](ExchangePhase phase, std::uint64_t k) {
    kernels::for_each_agent(params.exec, n, [&](std::size_t i) {
      outboxes[i].clear();
      nodes[i].emit(phase, k, outboxes[i]);
    });
    // Delivery is serial and in sender order, so the schedule never matters.
    for (std::size_t i = 0; i < n; ++i)
      for (const auto& m : outboxes[i]) {
        nodes.at(m.receiver).receive(m, phase, k);
        ++result.messages;
        if (log.is_open()) log << m.summary().dump() << '\n';
      }
    for (auto& node : nodes) node.barrier(phase, k);
  };

  const StepFunction step = [&](const PrimalDualState&, const PrimalDualState&,
                                std::uint64_t k) {
    StepOutput out{PrimalDualState(op.partition_ptr()), PrimalDualState(op.partition_ptr()),
                   PrimalDualState(op.partition_ptr()), PrimalDualState(op.partition_ptr()),
                   PrimalDualState(op.partition_ptr())};
    out.batch = batch_size(params.batch, k);
    if (!sfb) {
      out.alpha = alpha_schedule(params, k);
      out.rho = rho_schedule(params, out.alpha, ctx.ell_v_psi).rho;
    }
    kernels::for_each_agent(params.exec, n, [&](std::size_t i) {
      if (sfb)
        nodes[i].hold();
      else
        nodes[i].inertia(out.alpha);
    });
    exchange(ExchangePhase::inertial, k);
    kernels::for_each_agent(params.exec, n,
                            [&](std::size_t i) { nodes[i].forward(k, out.batch); });
    if (sfb) {
      kernels::for_each_agent(params.exec, n, [&](std::size_t i) { nodes[i].finish_sfb(); });
    } else {
      exchange(ExchangePhase::mid, k);
      kernels::for_each_agent(params.exec, n,
                              [&](std::size_t i) { nodes[i].correct(k, out.batch, out.rho); });
    }
    for (std::size_t i = 0; i < n; ++i) {
      nodes[i].gather(out, sfb);
      nodes[i].advance();
    }
    return out;
  };

  result.run = drive(ctx, x0, step);
  result.messages_per_iteration =
      result.run.iterations ? result.messages / result.run.iterations : 0;
  for (const auto& node : nodes) result.audited_reads += node.audited_reads();
  if (log.is_open()) {
    log.close();
    if (!log) throw IoError(fmt::format("failed writing {}", options.message_log->string()));
  }
  return result;
}

}  // namespace gnes
