#pragma once

#include "gnes/blockvec.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace gnes {

/// Undirected weighted communication graph of the agents.
///
/// Invariants (checked by build_graph): W is square, nonnegative, symmetric with
/// zero diagonal, and its positive support is connected. The Laplacian
/// L = diag(W 1) - W is stored densely; L (x) I_m is only ever applied blockwise.
class CommGraph {
 public:
  std::size_t num_agents() const noexcept { return static_cast<std::size_t>(weights_.rows()); }
  const Eigen::MatrixXd& weights() const noexcept { return weights_; }
  const Eigen::MatrixXd& laplacian() const noexcept { return laplacian_; }
  double weight(std::size_t i, std::size_t j) const {
    return weights_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }

  /// N_i^lambda = {j : w_ij > 0}, ascending.
  const std::vector<std::size_t>& neighbors(std::size_t agent) const { return neighbors_.at(agent); }
  std::size_t num_edges() const noexcept;

  /// Delta = max_i (W 1)_i.
  double max_degree() const noexcept { return max_degree_; }
  /// kappa = ||L||_2 = s_N, computed by power iteration.
  double laplacian_norm() const noexcept { return kappa_; }

 private:
  friend CommGraph build_graph(const Eigen::MatrixXd& weights);

  Eigen::MatrixXd weights_;
  Eigen::MatrixXd laplacian_;
  std::vector<std::vector<std::size_t>> neighbors_;
  double max_degree_ = 0.0;
  double kappa_ = 0.0;
};

CommGraph build_graph(const Eigen::MatrixXd& weights);

/// Block i of (L (x) I_m) v, i.e. sum_j w_ij (v_i - v_j), accumulated over
/// neighbours in ascending order. `v` is the full stack (length N m).
void laplacian_block(const CommGraph& g, std::size_t agent, std::size_t m,
                     std::span<const double> v, std::span<double> out);

BlockVector apply_laplacian(const CommGraph& g, const BlockVector& v);

/// Generators with unit weights.
Eigen::MatrixXd ring_weights(std::size_t n);
Eigen::MatrixXd star_weights(std::size_t n);
Eigen::MatrixXd complete_weights(std::size_t n);
/// Erdos-Renyi G(n, p), redrawn until connected (at most 10000 attempts).
Eigen::MatrixXd erdos_renyi_weights(std::size_t n, double p, std::uint64_t seed);

/// Parses "ring", "star", "complete" or "erdos-renyi(p, seed)".
Eigen::MatrixXd generator_weights(const std::string& spec, std::size_t n);

/// Largest eigenvalue of a symmetric positive semidefinite matrix by power
/// iteration; stops when the Rayleigh quotient changes by less than rel_tol
/// (relative).
double power_iteration_psd(const Eigen::MatrixXd& a, double rel_tol = 1e-10,
                           std::size_t max_iters = 200000);

/// Spectral norm of a rectangular matrix, via power iteration on A^T A.
double spectral_norm(const Eigen::MatrixXd& a, double rel_tol = 1e-10);

}  // namespace gnes
