#include "gnes/graph.hpp"

#include "gnes/errors.hpp"

#include <fmt/format.h>

#include <cmath>
#include <deque>
#include <random>
#include <regex>

namespace gnes {

std::size_t CommGraph::num_edges() const noexcept {
  std::size_t twice = 0;
  for (const auto& nb : neighbors_) twice += nb.size();
  return twice / 2;
}

namespace {

bool connected(const std::vector<std::vector<std::size_t>>& adj) {
  if (adj.empty()) return true;
  std::vector<bool> seen(adj.size(), false);
  std::deque<std::size_t> queue{0};
  seen[0] = true;
  std::size_t count = 1;
  while (!queue.empty()) {
    const auto i = queue.front();
    queue.pop_front();
    for (auto j : adj[i]) {
      if (!seen[j]) {
        seen[j] = true;
        ++count;
        queue.push_back(j);
      }
    }
  }
  return count == adj.size();
}

std::vector<std::vector<std::size_t>> support(const Eigen::MatrixXd& w) {
  const auto n = static_cast<std::size_t>(w.rows());
  std::vector<std::vector<std::size_t>> adj(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (w(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) > 0.0) adj[i].push_back(j);
  return adj;
}

// splitmix64 finaliser; used for deterministic start vectors.
std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

double power_iteration_psd(const Eigen::MatrixXd& a, double rel_tol, std::size_t max_iters) {
  if (a.rows() != a.cols()) throw DimensionError("power iteration needs a square matrix");
  const auto n = a.rows();
  if (n == 0) return 0.0;
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i)
    v[i] = 0.5 + static_cast<double>(mix64(static_cast<std::uint64_t>(i)) >> 11) * 0x1.0p-53;
  v.normalize();
  double quotient = v.dot(a * v);
  for (std::size_t it = 0; it < max_iters; ++it) {
    Eigen::VectorXd w = a * v;
    const double norm = w.norm();
    if (norm == 0.0) return 0.0;
    v = w / norm;
    const double next = v.dot(a * v);
    if (std::abs(next - quotient) <= rel_tol * std::abs(next)) return next;
    quotient = next;
  }
  return quotient;
}

double spectral_norm(const Eigen::MatrixXd& a, double rel_tol) {
  if (a.size() == 0) return 0.0;
  const Eigen::MatrixXd gram = a.transpose() * a;
  return std::sqrt(std::max(0.0, power_iteration_psd(gram, rel_tol)));
}

CommGraph build_graph(const Eigen::MatrixXd& weights) {
  if (weights.rows() != weights.cols() || weights.rows() == 0)
    throw ValidationError(fmt::format("weight matrix must be square and non-empty (got {}x{})",
                                      weights.rows(), weights.cols()));
  const auto n = weights.rows();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (weights(i, i) != 0.0)
      throw ValidationError(fmt::format("weight matrix has nonzero diagonal at {}", i));
    for (Eigen::Index j = 0; j < n; ++j) {
      const double w = weights(i, j);
      if (!std::isfinite(w) || w < 0.0)
        throw ValidationError(fmt::format("weight w[{}][{}] = {} must be finite and nonnegative",
                                          i, j, w));
      if (w != weights(j, i))
        throw ValidationError(
            fmt::format("weight matrix is not symmetric: w[{}][{}] = {} but w[{}][{}] = {}", i, j,
                        w, j, i, weights(j, i)));
    }
  }
  CommGraph g;
  g.weights_ = weights;
  g.neighbors_ = support(weights);
  if (!connected(g.neighbors_))
    throw ValidationError(
        "communication graph is disconnected; the adjacency matrix must be irreducible "
        "(Standing Assumption 5)");
  const Eigen::VectorXd degree = weights.rowwise().sum();
  g.laplacian_ = Eigen::MatrixXd(degree.asDiagonal()) - weights;
  g.max_degree_ = degree.maxCoeff();
  g.kappa_ = power_iteration_psd(g.laplacian_, 1e-10);
  return g;
}

void laplacian_block(const CommGraph& g, std::size_t agent, std::size_t m,
                     std::span<const double> v, std::span<double> out) {
  const double* vi = v.data() + agent * m;
  for (std::size_t r = 0; r < m; ++r) out[r] = 0.0;
  for (auto j : g.neighbors(agent)) {
    const double w = g.weight(agent, j);
    const double* vj = v.data() + j * m;
    for (std::size_t r = 0; r < m; ++r) out[r] += w * (vi[r] - vj[r]);
  }
}

BlockVector apply_laplacian(const CommGraph& g, const BlockVector& v) {
  if (v.kind() != BlockKind::dual_stack)
    throw DimensionError("apply_laplacian expects a dual-stack vector");
  const auto& p = v.partition();
  if (p.num_agents() != g.num_agents())
    throw DimensionError(fmt::format("apply_laplacian: vector has {} agent blocks, graph has {}",
                                     p.num_agents(), g.num_agents()));
  BlockVector out(v.partition_ptr(), BlockKind::dual_stack);
  const auto m = p.constraint_dim();
  for (std::size_t i = 0; i < p.num_agents(); ++i)
    laplacian_block(g, i, m, v.span(), out.span().subspan(i * m, m));
  return out;
}

Eigen::MatrixXd ring_weights(std::size_t n) {
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  if (n < 2) return w;
  for (std::size_t i = 0; i < n; ++i) {
    const auto j = (i + 1) % n;
    if (i == j) continue;
    w(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = 1.0;
    w(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = 1.0;
  }
  return w;
}

Eigen::MatrixXd star_weights(std::size_t n) {
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 1; i < static_cast<Eigen::Index>(n); ++i) {
    w(0, i) = 1.0;
    w(i, 0) = 1.0;
  }
  return w;
}

Eigen::MatrixXd complete_weights(std::size_t n) {
  Eigen::MatrixXd w = Eigen::MatrixXd::Ones(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  w.diagonal().setZero();
  return w;
}

Eigen::MatrixXd erdos_renyi_weights(std::size_t n, double p, std::uint64_t seed) {
  if (!(p > 0.0 && p <= 1.0))
    throw ConfigError(fmt::format("erdos-renyi edge probability {} must lie in (0, 1]", p));
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution edge(p);
  const auto ni = static_cast<Eigen::Index>(n);
  for (int attempt = 0; attempt < 10000; ++attempt) {
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(ni, ni);
    for (Eigen::Index i = 0; i < ni; ++i)
      for (Eigen::Index j = i + 1; j < ni; ++j)
        if (edge(rng)) w(i, j) = w(j, i) = 1.0;
    if (connected(support(w))) return w;
  }
  throw ConfigError(fmt::format("erdos-renyi({}, {}) produced no connected graph on {} nodes", p,
                                seed, n));
}

Eigen::MatrixXd generator_weights(const std::string& spec, std::size_t n) {
  if (spec == "ring") return ring_weights(n);
  if (spec == "star") return star_weights(n);
  if (spec == "complete") return complete_weights(n);
  static const std::regex er(R"(\s*erdos-renyi\(\s*([0-9.eE+-]+)\s*,\s*([0-9]+)\s*\)\s*)");
  std::smatch match;
  if (std::regex_match(spec, match, er))
    return erdos_renyi_weights(n, std::stod(match[1].str()), std::stoull(match[2].str()));
  throw ConfigError(fmt::format("unknown graph generator '{}'", spec));
}

}  // namespace gnes
