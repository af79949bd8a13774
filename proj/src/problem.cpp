#include "gnes/problem.hpp"

#include "gnes/errors.hpp"
#include "gnes/graph.hpp"
#include "gnes/json_io.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace gnes {

AffineCost::AffineCost(PartitionPtr partition, Eigen::MatrixXd m, Eigen::VectorXd q)
    : partition_(std::move(partition)), m_(std::move(m)), q_(std::move(q)) {
  const auto d = static_cast<Eigen::Index>(partition_->primal_dim());
  if (m_.rows() != d || m_.cols() != d || q_.size() != d)
    throw DimensionError(fmt::format("affine cost needs a {0}x{0} matrix and length-{0} offset", d));
  const auto n = partition_->num_agents();
  neighbors_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto ri = static_cast<Eigen::Index>(partition_->primal_offset(i));
    const auto di = static_cast<Eigen::Index>(partition_->dim(i));
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const auto cj = static_cast<Eigen::Index>(partition_->primal_offset(j));
      const auto dj = static_cast<Eigen::Index>(partition_->dim(j));
      if ((m_.block(ri, cj, di, dj).array() != 0.0).any()) neighbors_[i].push_back(j);
    }
  }
  rows_ = m_;
  lipschitz_ = spectral_norm(m_);
}

void AffineCost::gradient(std::size_t agent, std::span<const double> u,
                          std::span<double> out) const {
  const auto& p = *partition_;
  const auto row0 = p.primal_offset(agent);
  const auto di = p.dim(agent);
  // Columns are visited agent by agent in ascending order, skipping agents
  // outside the interaction neighbourhood (their blocks may be poisoned).
  const auto& nb = neighbors_[agent];
  for (std::size_t c = 0; c < di; ++c) {
    const auto row = static_cast<Eigen::Index>(row0 + c);
    const double* mrow = rows_.row(row).data();
    double acc = q_[row];
    auto it = nb.begin();
    for (std::size_t j = 0; j < p.num_agents(); ++j) {
      if (j != agent) {
        if (it == nb.end() || *it != j) continue;
        ++it;
      }
      const auto col0 = p.primal_offset(j);
      for (std::size_t cc = 0; cc < p.dim(j); ++cc)
        acc += mrow[col0 + cc] * u[col0 + cc];
    }
    out[c] = acc;
  }
}

nlohmann::json AffineCost::to_json() const {
  return {{"type", "affine"}, {"M", matrix_to_json(m_)}, {"q", vector_to_json(q_)}};
}

BoxRegularizer::BoxRegularizer(Eigen::VectorXd lower, Eigen::VectorXd upper)
    : BoxRegularizer(lower, upper, Eigen::VectorXd::Zero(lower.size()),
                     Eigen::VectorXd::Zero(lower.size())) {}

BoxRegularizer::BoxRegularizer(Eigen::VectorXd lower, Eigen::VectorXd upper, Eigen::VectorXd l1,
                               Eigen::VectorXd linear)
    : lo_(std::move(lower)), hi_(std::move(upper)), l1_(std::move(l1)), lin_(std::move(linear)) {
  if (hi_.size() != lo_.size() || l1_.size() != lo_.size() || lin_.size() != lo_.size())
    throw DimensionError("box regularizer: bounds and weights must share one length");
  for (Eigen::Index c = 0; c < lo_.size(); ++c) {
    if (!(lo_[c] <= hi_[c]) || !std::isfinite(lo_[c]) || !std::isfinite(hi_[c]))
      throw ValidationError(fmt::format("box bound [{}, {}] at coordinate {} is not a compact "
                                        "interval",
                                        lo_[c], hi_[c], c));
    if (l1_[c] < 0.0)
      throw ValidationError(fmt::format("l1 weight {} at coordinate {} must be nonnegative",
                                        l1_[c], c));
  }
}

void BoxRegularizer::prox(std::span<const double> v, double gamma, std::span<double> out) const {
  // Separable 1-d problems: shift, soft-threshold, clamp.
  for (std::size_t c = 0; c < v.size(); ++c) {
    const auto ci = static_cast<Eigen::Index>(c);
    double w = v[c] - gamma * lin_[ci];
    const double t = gamma * l1_[ci];
    if (t > 0.0) w = w > t ? w - t : (w < -t ? w + t : 0.0);
    out[c] = std::clamp(w, lo_[ci], hi_[ci]);
  }
}

nlohmann::json BoxRegularizer::to_json() const {
  nlohmann::json j{{"lo", vector_to_json(lo_)}, {"hi", vector_to_json(hi_)}};
  if ((l1_.array() != 0.0).any()) j["l1"] = vector_to_json(l1_);
  if ((lin_.array() != 0.0).any()) j["linear"] = vector_to_json(lin_);
  return j;
}

GameProblem::GameProblem(PartitionPtr partition, std::shared_ptr<const CostModel> cost,
                         std::vector<AgentData> agents)
    : partition_(std::move(partition)), cost_(std::move(cost)), agents_(std::move(agents)) {
  const auto& p = *partition_;
  if (!cost_) throw ParameterError("game problem needs a cost model");
  require_same_layout(p, cost_->partition(), "game problem cost");
  if (agents_.size() != p.num_agents())
    throw DimensionError(fmt::format("game problem has {} agent records for {} agents",
                                     agents_.size(), p.num_agents()));
  const auto m = static_cast<Eigen::Index>(p.constraint_dim());
  const auto d = static_cast<Eigen::Index>(p.primal_dim());
  stacked_d_ = Eigen::MatrixXd::Zero(m, d);
  total_b_ = Eigen::VectorXd::Zero(m);
  lower_.resize(d);
  upper_.resize(d);
  for (std::size_t i = 0; i < agents_.size(); ++i) {
    const auto& a = agents_[i];
    const auto di = static_cast<Eigen::Index>(p.dim(i));
    const auto off = static_cast<Eigen::Index>(p.primal_offset(i));
    if (!a.regularizer) throw ParameterError(fmt::format("agent {} has no local term", i));
    if (a.regularizer->lower().size() != di)
      throw DimensionError(fmt::format("agent {}: box has length {}, expected d_i = {}", i,
                                       a.regularizer->lower().size(), di));
    if (a.coupling.rows() != m || a.coupling.cols() != di)
      throw DimensionError(fmt::format("agent {}: D_i is {}x{}, expected {}x{}", i,
                                       a.coupling.rows(), a.coupling.cols(), m, di));
    if (a.offset.size() != m)
      throw DimensionError(fmt::format("agent {}: b_i has length {}, expected {}", i,
                                       a.offset.size(), m));
    stacked_d_.block(0, off, m, di) = a.coupling;
    total_b_ += a.offset;
    lower_.segment(off, di) = a.regularizer->lower();
    upper_.segment(off, di) = a.regularizer->upper();
  }
}

}  // namespace gnes
