#pragma once

#include "gnes/graph.hpp"
#include "gnes/instance.hpp"
#include "gnes/operators.hpp"
#include "gnes/problem.hpp"
#include "gnes/stochastic.hpp"

#include <Eigen/Dense>

#include <cstring>
#include <filesystem>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

namespace gnes::test {

/// Affine game F(u) = M u + q with per-agent boxes [lo, hi] and coupling (D_i, b_i).
inline Instance affine_game(const std::vector<std::size_t>& dims, std::size_t m,
                            const Eigen::MatrixXd& M, const Eigen::VectorXd& q, double lo,
                            double hi, const std::vector<Eigen::MatrixXd>& D,
                            const std::vector<Eigen::VectorXd>& b, const Eigen::MatrixXd& W,
                            double noise_sd = 0.0) {
  auto part = make_partition(dims, m);
  auto cost = std::make_shared<AffineCost>(part, M, q);
  std::vector<AgentData> agents;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    const auto di = static_cast<Eigen::Index>(dims[i]);
    agents.push_back({std::make_shared<BoxRegularizer>(Eigen::VectorXd::Constant(di, lo),
                                                       Eigen::VectorXd::Constant(di, hi)),
                      D[i], b[i]});
  }
  Instance inst;
  inst.name = "test-affine";
  inst.problem = std::make_shared<GameProblem>(part, cost, std::move(agents));
  inst.graph = std::make_shared<CommGraph>(build_graph(W));
  inst.oracle = std::make_shared<AdditiveGaussianOracle>(cost, noise_sd);
  return inst;
}

/// One agent, one coordinate: F(u) = a u + c on [lo, hi], with an inactive
/// coupling row 0 * u <= 1.
inline Instance scalar_game(double a, double c, double lo = -100.0, double hi = 100.0,
                            double noise_sd = 0.0) {
  return affine_game({1}, 1, Eigen::MatrixXd::Constant(1, 1, a), Eigen::VectorXd::Constant(1, c),
                     lo, hi, {Eigen::MatrixXd::Zero(1, 1)}, {Eigen::VectorXd::Ones(1)},
                     Eigen::MatrixXd::Zero(1, 1), noise_sd);
}

inline PrimalDualState random_state(const PartitionPtr& part, std::mt19937_64& rng,
                                    double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Eigen::VectorXd v(static_cast<Eigen::Index>(part->state_dim()));
  for (auto& e : v) e = n(rng);
  return PrimalDualState(part, v);
}

inline BlockVector random_primal(const PartitionPtr& part, std::mt19937_64& rng,
                                 double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Eigen::VectorXd v(static_cast<Eigen::Index>(part->primal_dim()));
  for (auto& e : v) e = n(rng);
  return BlockVector(part, BlockKind::primal, v);
}

inline bool bitwise_equal(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size()) return false;
  for (Eigen::Index i = 0; i < a.size(); ++i)
    if (std::memcmp(&a[i], &b[i], sizeof(double)) != 0) return false;
  return true;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& tag) {
  static std::uint64_t counter = 0;
  const auto p = std::filesystem::temp_directory_path() /
                 ("gnes-test-" + tag + "-" + std::to_string(::getpid()) + "-" +
                  std::to_string(counter++));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace gnes::test
