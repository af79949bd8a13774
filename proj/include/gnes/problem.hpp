#pragma once

#include "gnes/blockvec.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <memory>
#include <span>
#include <vector>

namespace gnes {

/// Smooth part of the agents' costs, seen through its pseudogradient.
///
/// gradient() must be a pure function of u and may be called concurrently. It
/// may only read the blocks of u that belong to the agent itself and to its
/// interaction neighbourhood; the distributed executor poisons every other
/// block with NaN.
class CostModel {
 public:
  virtual ~CostModel() = default;

  virtual const AgentPartition& partition() const = 0;
  /// out = grad_{u_i} f_i(u); out has length d_i.
  virtual void gradient(std::size_t agent, std::span<const double> u,
                        std::span<double> out) const = 0;
  /// N_i^A without i itself, ascending.
  virtual const std::vector<std::size_t>& interaction_neighbors(std::size_t agent) const = 0;
  /// Lipschitz constant of F (an upper estimate when no closed form exists).
  virtual double lipschitz() const = 0;
  virtual nlohmann::json to_json() const = 0;
};

/// F(u) = M u + q.
class AffineCost final : public CostModel {
 public:
  AffineCost(PartitionPtr partition, Eigen::MatrixXd m, Eigen::VectorXd q);

  const AgentPartition& partition() const override { return *partition_; }
  void gradient(std::size_t agent, std::span<const double> u, std::span<double> out) const override;
  const std::vector<std::size_t>& interaction_neighbors(std::size_t agent) const override {
    return neighbors_.at(agent);
  }
  double lipschitz() const override { return lipschitz_; }
  nlohmann::json to_json() const override;

  const Eigen::MatrixXd& matrix() const noexcept { return m_; }
  const Eigen::VectorXd& offset() const noexcept { return q_; }

 private:
  PartitionPtr partition_;
  Eigen::MatrixXd m_;
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rows_;  // m_, row-major for gradient rows
  Eigen::VectorXd q_;
  std::vector<std::vector<std::size_t>> neighbors_;
  double lipschitz_;
};

/// Nonsmooth local term g_i. Its domain U_i is the box [lower, upper].
class Regularizer {
 public:
  virtual ~Regularizer() = default;

  /// out = argmin_w g(w) + ||w - v||^2 / (2 gamma); must land in the box.
  virtual void prox(std::span<const double> v, double gamma, std::span<double> out) const = 0;
  virtual const Eigen::VectorXd& lower() const = 0;
  virtual const Eigen::VectorXd& upper() const = 0;
  virtual nlohmann::json to_json() const = 0;
};

/// g(w) = indicator of [lo, hi] + sum_c (l1_c |w_c| + lin_c w_c).
class BoxRegularizer final : public Regularizer {
 public:
  BoxRegularizer(Eigen::VectorXd lower, Eigen::VectorXd upper);
  BoxRegularizer(Eigen::VectorXd lower, Eigen::VectorXd upper, Eigen::VectorXd l1,
                 Eigen::VectorXd linear);

  void prox(std::span<const double> v, double gamma, std::span<double> out) const override;
  const Eigen::VectorXd& lower() const override { return lo_; }
  const Eigen::VectorXd& upper() const override { return hi_; }
  nlohmann::json to_json() const override;

  const Eigen::VectorXd& l1() const noexcept { return l1_; }
  const Eigen::VectorXd& linear() const noexcept { return lin_; }

 private:
  Eigen::VectorXd lo_, hi_, l1_, lin_;
};

/// Per-agent problem data: cost, local term, coupling block (D_i, b_i).
struct AgentData {
  std::shared_ptr<const Regularizer> regularizer;
  Eigen::MatrixXd coupling;  ///< D_i, m x d_i
  Eigen::VectorXd offset;    ///< b_i, length m
};

/// The deterministic game: sum_i b_i = b, D = [D_1 | ... | D_N].
class GameProblem {
 public:
  GameProblem(PartitionPtr partition, std::shared_ptr<const CostModel> cost,
              std::vector<AgentData> agents);

  const AgentPartition& partition() const noexcept { return *partition_; }
  const PartitionPtr& partition_ptr() const noexcept { return partition_; }
  const CostModel& cost() const noexcept { return *cost_; }
  const std::shared_ptr<const CostModel>& cost_ptr() const noexcept { return cost_; }

  std::size_t num_agents() const noexcept { return agents_.size(); }
  const AgentData& agent(std::size_t i) const { return agents_.at(i); }
  const Regularizer& regularizer(std::size_t i) const { return *agents_.at(i).regularizer; }
  const Eigen::MatrixXd& coupling(std::size_t i) const { return agents_.at(i).coupling; }
  const Eigen::VectorXd& offset(std::size_t i) const { return agents_.at(i).offset; }

  const Eigen::MatrixXd& stacked_coupling() const noexcept { return stacked_d_; }
  const Eigen::VectorXd& total_offset() const noexcept { return total_b_; }
  const Eigen::VectorXd& lower() const noexcept { return lower_; }
  const Eigen::VectorXd& upper() const noexcept { return upper_; }

 private:
  PartitionPtr partition_;
  std::shared_ptr<const CostModel> cost_;
  std::vector<AgentData> agents_;
  Eigen::MatrixXd stacked_d_;
  Eigen::VectorXd total_b_;
  Eigen::VectorXd lower_, upper_;
};

}  // namespace gnes
