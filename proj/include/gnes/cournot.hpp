#pragma once

#include "gnes/graph.hpp"
#include "gnes/problem.hpp"
#include "gnes/stochastic.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace gnes {

/// Generator settings for the networked Cournot game. Markets are 0-based.
struct CournotConfig {
  std::size_t num_firms = 10;
  std::size_t num_markets = 7;
  /// Markets of each firm. Empty: the 10-firm / 7-market reference topology
  /// when the sizes match, otherwise a random map drawn from `seed`.
  std::vector<std::vector<std::size_t>> participation;
  double cost_mean = 2.0;
  double cost_sd = 1.0;
  double cost_floor = 0.6;
  double intercept = 400.0;
  double slope_mean = 0.02;
  double slope_sd = 0.005;  ///< truncated at +-3 sd
  double sigma_d = 1.2;
  double cap_mean = 250.0;
  double cap_sd = 50.0;
  double capacity_lo = 5.0;
  double capacity_hi = 10.0;
  int demand_sign = -1;
  std::string graph = "ring";
  std::uint64_t seed = 0;
  std::size_t lipschitz_pairs = 10000;
  double lipschitz_factor = 1.1;

  nlohmann::json to_json() const;
  static CournotConfig from_json(const nlohmann::json& j);
};

/// The reference participation map (firm -> markets), 0-based.
std::vector<std::vector<std::size_t>> default_participation();

/// Market data shared by the mean model and the sampling oracle.
struct CournotMarkets {
  std::vector<std::vector<std::size_t>> markets_of_firm;  ///< sorted, per firm
  std::vector<std::vector<std::size_t>> firms_of_market;  ///< sorted, per market
  std::vector<Eigen::VectorXd> cost;                      ///< c_i, one entry per market of firm i
  Eigen::VectorXd intercept;                              ///< q_j
  Eigen::VectorXd slope_mean;                             ///< pbar_j
  double slope_sd = 0.0;
  double sigma_d = 1.2;
  int demand_sign = -1;

  /// Position of market j inside firm i's strategy block, or npos.
  std::size_t local_index(std::size_t firm, std::size_t market) const;
};

/// Expected-value pseudogradient of the Cournot game:
///   df_i/du_ij = c_ij - P_j(S) - u_ij P_j'(S),  P_j(S) = q_j + s pbar_j S^sigma,
/// with S_j the supply into market j, extended to S_j < 0 through max(S_j, 0).
class CournotCost final : public CostModel {
 public:
  CournotCost(PartitionPtr partition, std::shared_ptr<const CournotMarkets> markets,
              double lipschitz);

  const AgentPartition& partition() const override { return *partition_; }
  void gradient(std::size_t agent, std::span<const double> u, std::span<double> out) const override;
  const std::vector<std::size_t>& interaction_neighbors(std::size_t agent) const override {
    return neighbors_.at(agent);
  }
  double lipschitz() const override { return lipschitz_; }
  nlohmann::json to_json() const override;

  const CournotMarkets& markets() const noexcept { return *markets_; }
  const std::shared_ptr<const CournotMarkets>& markets_ptr() const noexcept { return markets_; }

  /// Gradient with the slope of market j replaced by slopes[j].
  void gradient_at(std::size_t agent, std::span<const double> u, std::span<const double> slopes,
                   std::span<double> out) const;
  /// f_i(u) = sum_j c_ij u_ij - P_j(S) u_ij with slopes[j] in place of pbar_j.
  double cost_at(std::size_t agent, std::span<const double> u,
                 std::span<const double> slopes) const;

 private:
  double supply(std::size_t market, std::span<const double> u) const;

  PartitionPtr partition_;
  std::shared_ptr<const CournotMarkets> markets_;
  std::vector<std::vector<std::size_t>> neighbors_;
  double lipschitz_;
};

/// Draws per-market slopes p_j(xi) ~ N(pbar_j, sd^2) truncated to pbar_j +- 3 sd.
///
/// The mini-batch mean is linear in the slope average, so batch_gradient draws
/// that average: exactly (explicit draws) up to `explicit_limit`, and from the
/// moment-matched normal clamped to the truncation interval beyond it.
class CournotOracle final : public SamplingOracle {
 public:
  /// `upper` is the primal upper bound of U; it only enters noise_bound().
  CournotOracle(std::shared_ptr<const CournotCost> cost, const Eigen::VectorXd& upper,
                std::uint64_t explicit_limit = 64);

  const CostModel& mean_model() const override { return *cost_; }
  void sample_gradient(std::size_t agent, std::span<const double> u, KeyedStream& rng,
                       std::span<double> out) const override;
  void batch_gradient(std::size_t agent, std::span<const double> u, std::uint64_t batch,
                      const StreamKey& key, std::span<double> out) const override;
  double noise_bound() const override { return noise_bound_; }
  nlohmann::json to_json() const override;

  /// Variance of one truncated slope draw.
  double slope_variance() const noexcept { return slope_var_; }

 private:
  void draw_slopes(std::size_t agent, KeyedStream& rng, std::vector<double>& slopes) const;

  std::shared_ptr<const CournotCost> cost_;
  std::uint64_t explicit_limit_;
  double slope_var_;
  double noise_bound_;
};

/// Fraction of the variance of N(0, 1) kept after truncation at +-3.
double truncated_variance_factor();

struct CournotInstance {
  std::shared_ptr<const GameProblem> problem;
  std::shared_ptr<const CournotOracle> oracle;
  std::shared_ptr<const CommGraph> graph;
};

/// Builds the game, the sampling oracle and the communication graph.
CournotInstance generate(const CournotConfig& config);

/// Builds a game from explicit market data; offsets[i] is firm i's share b_i
/// of the market capacities.
CournotInstance assemble_cournot(const CournotMarkets& markets,
                                 const std::vector<Eigen::VectorXd>& caps,
                                 const std::vector<Eigen::VectorXd>& offsets,
                                 const Eigen::MatrixXd& weights, double lipschitz,
                                 std::uint64_t explicit_limit = 64);

struct MonotonicityReport {
  std::size_t trials = 0;
  double min_ratio = 0.0;  ///< min <F(u) - F(v), u - v> / ||u - v||^2
  bool passed(double tol = -1e-8) const noexcept { return min_ratio >= tol; }
};

/// Samples pairs uniformly from the box U.
MonotonicityReport monotonicity_probe(const GameProblem& problem, std::size_t trials,
                                      std::uint64_t seed);

/// max ||F(u) - F(v)|| / ||u - v|| over `pairs` uniform pairs in U.
double sampled_lipschitz_ratio(const GameProblem& problem, std::size_t pairs, std::uint64_t seed);

}  // namespace gnes
