#include "gnes/blockvec.hpp"

#include "gnes/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <numeric>

namespace gnes {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::dimension: return "dimension";
    case ErrorKind::parameter: return "parameter";
    case ErrorKind::validation: return "validation";
    case ErrorKind::numeric: return "numeric";
    case ErrorKind::tolerance: return "tolerance";
    case ErrorKind::config: return "config";
    case ErrorKind::locality: return "locality";
    case ErrorKind::deadlock: return "deadlock";
    case ErrorKind::io: return "io";
  }
  return "unknown";
}

AgentPartition::AgentPartition(std::vector<std::size_t> dims, std::size_t constraint_dim)
    : dims_(std::move(dims)), m_(constraint_dim), total_(0) {
  if (dims_.empty()) throw ParameterError("partition needs at least one agent");
  if (m_ == 0) throw ParameterError("partition needs constraint dimension m >= 1");
  offsets_.reserve(dims_.size());
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    if (dims_[i] == 0) throw ParameterError(fmt::format("agent {} has zero dimension", i));
    offsets_.push_back(total_);
    total_ += dims_[i];
  }
}

PartitionPtr make_partition(std::vector<std::size_t> dims, std::size_t constraint_dim) {
  return std::make_shared<const AgentPartition>(std::move(dims), constraint_dim);
}

void require_same_layout(const AgentPartition& a, const AgentPartition& b, const char* where) {
  if (a.num_agents() != b.num_agents())
    throw DimensionError(fmt::format("{}: agent count mismatch ({} vs {})", where, a.num_agents(),
                                     b.num_agents()));
  for (std::size_t i = 0; i < a.num_agents(); ++i) {
    if (a.dim(i) != b.dim(i))
      throw DimensionError(fmt::format("{}: block u[{}] has size {} vs {}", where, i, a.dim(i),
                                       b.dim(i)));
  }
  if (a.constraint_dim() != b.constraint_dim())
    throw DimensionError(fmt::format("{}: blocks mu/lambda have size m={} vs m={}", where,
                                     a.constraint_dim(), b.constraint_dim()));
}

namespace {

std::size_t expected_length(const AgentPartition& p, BlockKind kind) {
  return kind == BlockKind::primal ? p.primal_dim() : p.dual_dim();
}

}  // namespace

BlockVector::BlockVector(PartitionPtr partition, BlockKind kind)
    : partition_(std::move(partition)), kind_(kind) {
  data_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(expected_length(*partition_, kind_)));
}

BlockVector::BlockVector(PartitionPtr partition, BlockKind kind, Eigen::VectorXd data)
    : partition_(std::move(partition)), kind_(kind), data_(std::move(data)) {
  const auto want = expected_length(*partition_, kind_);
  if (size() != want)
    throw DimensionError(fmt::format("{} vector has length {}, partition expects {}",
                                     kind_ == BlockKind::primal ? "primal" : "dual-stack", size(),
                                     want));
}

Eigen::VectorBlock<Eigen::VectorXd> BlockVector::block(std::size_t agent) {
  if (kind_ == BlockKind::primal)
    return data_.segment(static_cast<Eigen::Index>(partition_->primal_offset(agent)),
                         static_cast<Eigen::Index>(partition_->dim(agent)));
  const auto m = static_cast<Eigen::Index>(partition_->constraint_dim());
  return data_.segment(static_cast<Eigen::Index>(agent) * m, m);
}

Eigen::VectorBlock<const Eigen::VectorXd> BlockVector::block(std::size_t agent) const {
  if (kind_ == BlockKind::primal)
    return data_.segment(static_cast<Eigen::Index>(partition_->primal_offset(agent)),
                         static_cast<Eigen::Index>(partition_->dim(agent)));
  const auto m = static_cast<Eigen::Index>(partition_->constraint_dim());
  return data_.segment(static_cast<Eigen::Index>(agent) * m, m);
}

PrimalDualState::PrimalDualState(PartitionPtr partition) : partition_(std::move(partition)) {
  data_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(partition_->state_dim()));
}

PrimalDualState::PrimalDualState(PartitionPtr partition, Eigen::VectorXd data)
    : partition_(std::move(partition)), data_(std::move(data)) {
  if (size() != partition_->state_dim())
    throw DimensionError(fmt::format("state has length {}, partition expects d + 2Nm = {}",
                                     size(), partition_->state_dim()));
}

std::span<double> PrimalDualState::u_span(std::size_t agent) {
  return {data_.data() + partition_->primal_offset(agent), partition_->dim(agent)};
}
std::span<const double> PrimalDualState::u_span(std::size_t agent) const {
  return {data_.data() + partition_->primal_offset(agent), partition_->dim(agent)};
}
std::span<double> PrimalDualState::mu_span(std::size_t agent) {
  const auto m = partition_->constraint_dim();
  return {data_.data() + partition_->primal_dim() + agent * m, m};
}
std::span<const double> PrimalDualState::mu_span(std::size_t agent) const {
  const auto m = partition_->constraint_dim();
  return {data_.data() + partition_->primal_dim() + agent * m, m};
}
std::span<double> PrimalDualState::lambda_span(std::size_t agent) {
  const auto m = partition_->constraint_dim();
  return {data_.data() + partition_->primal_dim() + partition_->dual_dim() + agent * m, m};
}
std::span<const double> PrimalDualState::lambda_span(std::size_t agent) const {
  const auto m = partition_->constraint_dim();
  return {data_.data() + partition_->primal_dim() + partition_->dual_dim() + agent * m, m};
}

BlockVector PrimalDualState::primal() const {
  return BlockVector(partition_, BlockKind::primal, u());
}
BlockVector PrimalDualState::duals() const {
  return BlockVector(partition_, BlockKind::dual_stack, lambda());
}
BlockVector PrimalDualState::auxiliaries() const {
  return BlockVector(partition_, BlockKind::dual_stack, mu());
}

Preconditioner::Preconditioner(PartitionPtr partition, std::vector<double> gamma,
                               std::vector<double> sigma, std::vector<double> tau)
    : partition_(std::move(partition)),
      gamma_(std::move(gamma)),
      sigma_(std::move(sigma)),
      tau_(std::move(tau)) {
  const auto n = partition_->num_agents();
  if (gamma_.size() != n || sigma_.size() != n || tau_.size() != n)
    throw DimensionError(fmt::format("preconditioner needs {} step sizes per family", n));
  const auto check = [](const std::vector<double>& v, const char* name) {
    for (std::size_t i = 0; i < v.size(); ++i)
      if (!(v[i] > 0.0) || !std::isfinite(v[i]))
        throw ParameterError(fmt::format("step size {}[{}] = {} must be positive", name, i, v[i]));
  };
  check(gamma_, "gamma");
  check(sigma_, "sigma");
  check(tau_, "tau");

  steps_.resize(static_cast<Eigen::Index>(partition_->state_dim()));
  const auto m = partition_->constraint_dim();
  const auto d = partition_->primal_dim();
  for (std::size_t i = 0; i < n; ++i) {
    const auto off = partition_->primal_offset(i);
    for (std::size_t c = 0; c < partition_->dim(i); ++c)
      steps_[static_cast<Eigen::Index>(off + c)] = gamma_[i];
    for (std::size_t r = 0; r < m; ++r) {
      steps_[static_cast<Eigen::Index>(d + i * m + r)] = sigma_[i];
      steps_[static_cast<Eigen::Index>(d + n * m + i * m + r)] = tau_[i];
    }
  }
  weights_ = steps_.cwiseInverse();
  max_step_ = steps_.maxCoeff();
  min_step_ = steps_.minCoeff();
}

Preconditioner Preconditioner::uniform(PartitionPtr partition, double step) {
  const auto n = partition->num_agents();
  return Preconditioner(std::move(partition), std::vector<double>(n, step),
                        std::vector<double>(n, step), std::vector<double>(n, step));
}

namespace {

void check_three(const PrimalDualState& x, const PrimalDualState& y, const Preconditioner& psi,
                 const char* where) {
  require_same_layout(x.partition(), y.partition(), where);
  require_same_layout(x.partition(), psi.partition(), where);
}

}  // namespace

double psi_inner(const PrimalDualState& x, const PrimalDualState& y, const Preconditioner& psi) {
  check_three(x, y, psi, "psi_inner");
  double acc = 0.0;
  const auto& w = psi.weights();
  for (Eigen::Index j = 0; j < w.size(); ++j) acc += w[j] * x.data()[j] * y.data()[j];
  return acc;
}

double psi_norm_sq(const PrimalDualState& x, const Preconditioner& psi) {
  return psi_inner(x, x, psi);
}

double psi_norm(const PrimalDualState& x, const Preconditioner& psi) {
  return std::sqrt(psi_norm_sq(x, psi));
}

double psi_dist_sq(const PrimalDualState& x, const PrimalDualState& y, const Preconditioner& psi) {
  check_three(x, y, psi, "psi_dist_sq");
  double acc = 0.0;
  const auto& w = psi.weights();
  for (Eigen::Index j = 0; j < w.size(); ++j) {
    const double diff = x.data()[j] - y.data()[j];
    acc += w[j] * diff * diff;
  }
  return acc;
}

double inv_psi_norm_sq(const PrimalDualState& v, const Preconditioner& psi) {
  require_same_layout(v.partition(), psi.partition(), "inv_psi_norm_sq");
  double acc = 0.0;
  const auto& s = psi.steps();
  for (Eigen::Index j = 0; j < s.size(); ++j) acc += s[j] * v.data()[j] * v.data()[j];
  return acc;
}

PrimalDualState relaxed_combine(const PrimalDualState& z, const PrimalDualState& r, double rho) {
  if (!(rho > 0.0 && rho <= 1.0))
    throw ParameterError(fmt::format("relaxation rho = {} must lie in (0, 1]", rho));
  require_same_layout(z.partition(), r.partition(), "relaxed_combine");
  PrimalDualState out(z.partition_ptr());
  for (Eigen::Index j = 0; j < z.data().size(); ++j)
    out.data()[j] = (1.0 - rho) * z.data()[j] + rho * r.data()[j];
  return out;
}

}  // namespace gnes
