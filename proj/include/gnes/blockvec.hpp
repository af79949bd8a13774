#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

namespace gnes {

/// Sizes of the agents' strategy blocks and of the coupling constraints.
class AgentPartition {
 public:
  AgentPartition(std::vector<std::size_t> dims, std::size_t constraint_dim);

  std::size_t num_agents() const noexcept { return dims_.size(); }
  std::size_t dim(std::size_t agent) const { return dims_.at(agent); }
  const std::vector<std::size_t>& dims() const noexcept { return dims_; }
  std::size_t constraint_dim() const noexcept { return m_; }

  /// d = sum of the agent dimensions.
  std::size_t primal_dim() const noexcept { return total_; }
  /// N * m, length of the stacked auxiliary and dual variables.
  std::size_t dual_dim() const noexcept { return dims_.size() * m_; }
  /// d + 2 N m.
  std::size_t state_dim() const noexcept { return total_ + 2 * dual_dim(); }

  std::size_t primal_offset(std::size_t agent) const { return offsets_.at(agent); }

  bool operator==(const AgentPartition& other) const noexcept {
    return dims_ == other.dims_ && m_ == other.m_;
  }

 private:
  std::vector<std::size_t> dims_;
  std::vector<std::size_t> offsets_;
  std::size_t m_;
  std::size_t total_;
};

using PartitionPtr = std::shared_ptr<const AgentPartition>;

PartitionPtr make_partition(std::vector<std::size_t> dims, std::size_t constraint_dim);

enum class BlockKind { primal, dual_stack };

/// A primal vector (length d) or a stack of per-agent m-vectors (length N m).
class BlockVector {
 public:
  BlockVector(PartitionPtr partition, BlockKind kind);
  BlockVector(PartitionPtr partition, BlockKind kind, Eigen::VectorXd data);

  const AgentPartition& partition() const noexcept { return *partition_; }
  const PartitionPtr& partition_ptr() const noexcept { return partition_; }
  BlockKind kind() const noexcept { return kind_; }

  Eigen::VectorXd& data() noexcept { return data_; }
  const Eigen::VectorXd& data() const noexcept { return data_; }
  std::size_t size() const noexcept { return static_cast<std::size_t>(data_.size()); }

  Eigen::VectorBlock<Eigen::VectorXd> block(std::size_t agent);
  Eigen::VectorBlock<const Eigen::VectorXd> block(std::size_t agent) const;

  std::span<const double> span() const noexcept { return {data_.data(), size()}; }
  std::span<double> span() noexcept { return {data_.data(), size()}; }

 private:
  PartitionPtr partition_;
  BlockKind kind_;
  Eigen::VectorXd data_;
};

/// The state x = (u, mu, lambda) stored as one flat array [u | mu | lambda].
/// Blocks are views into that array.
class PrimalDualState {
 public:
  explicit PrimalDualState(PartitionPtr partition);
  PrimalDualState(PartitionPtr partition, Eigen::VectorXd data);

  const AgentPartition& partition() const noexcept { return *partition_; }
  const PartitionPtr& partition_ptr() const noexcept { return partition_; }

  Eigen::VectorXd& data() noexcept { return data_; }
  const Eigen::VectorXd& data() const noexcept { return data_; }
  std::size_t size() const noexcept { return static_cast<std::size_t>(data_.size()); }

  auto u() { return data_.segment(0, d()); }
  auto u() const { return data_.segment(0, d()); }
  auto mu() { return data_.segment(d(), nm()); }
  auto mu() const { return data_.segment(d(), nm()); }
  auto lambda() { return data_.segment(d() + nm(), nm()); }
  auto lambda() const { return data_.segment(d() + nm(), nm()); }

  std::span<double> u_span(std::size_t agent);
  std::span<const double> u_span(std::size_t agent) const;
  std::span<double> mu_span(std::size_t agent);
  std::span<const double> mu_span(std::size_t agent) const;
  std::span<double> lambda_span(std::size_t agent);
  std::span<const double> lambda_span(std::size_t agent) const;

  /// Whole primal block as a span (the pseudogradient oracles take this).
  std::span<const double> u_all() const noexcept { return {data_.data(), static_cast<std::size_t>(d())}; }

  BlockVector primal() const;
  BlockVector duals() const;
  BlockVector auxiliaries() const;

 private:
  Eigen::Index d() const noexcept { return static_cast<Eigen::Index>(partition_->primal_dim()); }
  Eigen::Index nm() const noexcept { return static_cast<Eigen::Index>(partition_->dual_dim()); }

  PartitionPtr partition_;
  Eigen::VectorXd data_;
};

/// Block-diagonal Psi = diag(gamma^-1, sigma^-1, tau^-1), expanded to the state layout.
class Preconditioner {
 public:
  Preconditioner(PartitionPtr partition, std::vector<double> gamma, std::vector<double> sigma,
                 std::vector<double> tau);

  static Preconditioner uniform(PartitionPtr partition, double step);

  const AgentPartition& partition() const noexcept { return *partition_; }
  const PartitionPtr& partition_ptr() const noexcept { return partition_; }

  double gamma(std::size_t agent) const { return gamma_.at(agent); }
  double sigma(std::size_t agent) const { return sigma_.at(agent); }
  double tau(std::size_t agent) const { return tau_.at(agent); }
  const std::vector<double>& gammas() const noexcept { return gamma_; }
  const std::vector<double>& sigmas() const noexcept { return sigma_; }
  const std::vector<double>& taus() const noexcept { return tau_; }

  /// Diagonal of Psi over the state layout.
  const Eigen::VectorXd& weights() const noexcept { return weights_; }
  /// Diagonal of Psi^-1 (the step sizes) over the state layout.
  const Eigen::VectorXd& steps() const noexcept { return steps_; }

  double max_step() const noexcept { return max_step_; }
  double min_step() const noexcept { return min_step_; }
  double lambda_min() const noexcept { return 1.0 / max_step_; }
  double lambda_max() const noexcept { return 1.0 / min_step_; }

 private:
  PartitionPtr partition_;
  std::vector<double> gamma_, sigma_, tau_;
  Eigen::VectorXd weights_;
  Eigen::VectorXd steps_;
  double max_step_ = 0.0;
  double min_step_ = 0.0;
};

/// <x, y>_Psi = sum_j Psi_jj x_j y_j.
double psi_inner(const PrimalDualState& x, const PrimalDualState& y, const Preconditioner& psi);
double psi_norm(const PrimalDualState& x, const Preconditioner& psi);
double psi_norm_sq(const PrimalDualState& x, const Preconditioner& psi);
/// ||x - y||^2_Psi without forming the difference.
double psi_dist_sq(const PrimalDualState& x, const PrimalDualState& y, const Preconditioner& psi);
/// ||v||^2 in the Psi^-1 metric (dual-space norm of an operator value).
double inv_psi_norm_sq(const PrimalDualState& v, const Preconditioner& psi);

/// (1 - rho) z + rho r, componentwise. Requires 0 < rho <= 1.
PrimalDualState relaxed_combine(const PrimalDualState& z, const PrimalDualState& r, double rho);

/// Throws DimensionError naming the first block whose size disagrees.
void require_same_layout(const AgentPartition& a, const AgentPartition& b, const char* where);

}  // namespace gnes
