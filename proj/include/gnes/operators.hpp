#pragma once

#include "gnes/blockvec.hpp"
#include "gnes/graph.hpp"
#include "gnes/problem.hpp"

#include <memory>

namespace gnes {

/// Execution policy of the per-agent kernels. Both produce bitwise identical
/// results; `serial` is the reference the OpenMP path is tested against.
enum class Exec { serial, parallel };

/// The extended operator V on X = R^d x R^{Nm} x R^{Nm} and the set-valued T:
///
///   V(x) = ( F(u) + D^T lambda ;  Lbar lambda ;  bbar + Lbar (lambda - mu) - D u )
///   T(x) = G(u) x {0} x N_{R>=0}(lambda)
///
/// where D acts blockwise (D_i u_i, D_i^T lambda_i) and Lbar = L (x) I_m.
class ExtendedOperator {
 public:
  ExtendedOperator(std::shared_ptr<const GameProblem> problem,
                   std::shared_ptr<const CommGraph> graph);

  const GameProblem& problem() const noexcept { return *problem_; }
  const CommGraph& graph() const noexcept { return *graph_; }
  const std::shared_ptr<const GameProblem>& problem_ptr() const noexcept { return problem_; }
  const std::shared_ptr<const CommGraph>& graph_ptr() const noexcept { return graph_; }
  const AgentPartition& partition() const noexcept { return problem_->partition(); }
  const PartitionPtr& partition_ptr() const noexcept { return problem_->partition_ptr(); }

  /// ||D||_2 of the stacked coupling matrix.
  double coupling_norm() const noexcept { return d_norm_; }
  /// ell_V = ell + 2 kappa + ||D||.
  double lipschitz() const noexcept { return ell_v_; }

 private:
  std::shared_ptr<const GameProblem> problem_;
  std::shared_ptr<const CommGraph> graph_;
  double d_norm_;
  double ell_v_;
};

BlockVector apply_F(const GameProblem& p, const BlockVector& u, Exec exec = Exec::parallel);

PrimalDualState apply_V(const ExtendedOperator& op, const PrimalDualState& x,
                        Exec exec = Exec::parallel);

/// J_{Psi^-1 T}(x): prox_{gamma_i g_i} on u_i, identity on mu, max(., 0) on lambda.
PrimalDualState resolvent_T(const ExtendedOperator& op, const PrimalDualState& x,
                            const Preconditioner& psi, Exec exec = Exec::parallel);

/// x - J_{Psi^-1 T}(x - Psi^-1 V(x)).
PrimalDualState fixed_point_displacement(const ExtendedOperator& op, const PrimalDualState& x,
                                         const Preconditioner& psi, Exec exec = Exec::parallel);

/// r_Psi(x): Euclidean norm of the fixed-point displacement.
double residual_r_psi(const ExtendedOperator& op, const PrimalDualState& x,
                      const Preconditioner& psi, Exec exec = Exec::parallel);

struct ProjectionOptions {
  double tol = 1e-10;
  std::size_t max_sweeps = 10000;
};

/// Euclidean projection onto C = {u in U : D u <= b} by Dykstra's algorithm over
/// the box and the halfspaces of the rows of D.
BlockVector proj_shared_set(const GameProblem& p, const BlockVector& v,
                            const ProjectionOptions& opts = {});

/// res(u) = ||u - proj_C(u - F(u))||.
double residual_res(const GameProblem& p, const BlockVector& u, const ProjectionOptions& opts = {});

struct KktReport {
  bool stationarity = false;
  bool feasibility = false;
  bool complementarity = false;
  double stationarity_gap = 0.0;   ///< max_i ||u_i - prox(u_i - (grad f_i + D_i^T lambda))||_inf
  double feasibility_gap = 0.0;    ///< max_j (D u - b)_j, clipped below at 0
  double complementarity_gap = 0.0;///< max_j |lambda_j (D u - b)_j|
  double min_multiplier = 0.0;

  bool passed() const noexcept { return stationarity && feasibility && complementarity; }
};

/// Checks the variational KKT system at (u, lambda) with one shared multiplier.
KktReport kkt_check(const GameProblem& p, const BlockVector& u, const Eigen::VectorXd& lambda,
                    double tol);

/// max_{i,j} ||lambda_i - lambda_j||.
double consensus_gap(const PrimalDualState& x);
/// || max(D u - b, 0) ||.
double feasibility_gap(const GameProblem& p, const PrimalDualState& x);
/// Mean of the agents' dual copies.
Eigen::VectorXd mean_multiplier(const PrimalDualState& x);

}  // namespace gnes
