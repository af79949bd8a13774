#pragma once

#include "gnes/blockvec.hpp"
#include "gnes/operators.hpp"
#include "gnes/problem.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <limits>
#include <memory>
#include <random>
#include <span>

namespace gnes {

/// The two independent samples drawn per iteration: xi before the first
/// operator evaluation, eta before the second.
enum class Phase : std::uint32_t { xi = 0, eta = 1 };

/// Identifies one agent's sample set in one phase of one iteration.
struct StreamKey {
  std::uint64_t seed = 0;
  std::uint64_t agent = 0;
  std::uint64_t iteration = 0;
  Phase phase = Phase::xi;
};

/// Counter-based random stream keyed by (seed, agent, iteration, phase, draw).
/// The state is derived from the key alone, so any worker can reproduce any
/// draw without shared generator state. Satisfies UniformRandomBitGenerator.
class KeyedStream {
 public:
  using result_type = std::uint64_t;

  KeyedStream(const StreamKey& key, std::uint64_t draw);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
  result_type operator()();

  double normal() { return normal_(*this); }
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

 private:
  std::uint64_t state_;
  std::normal_distribution<double> normal_;
};

/// S_k = max(1, ceil(S0 (k+1)^p)); p > 1 keeps sum_k 1/S_k finite.
class BatchSchedule {
 public:
  BatchSchedule() = default;
  BatchSchedule(double s0, double exponent);

  double initial() const noexcept { return s0_; }
  double exponent() const noexcept { return p_; }

 private:
  double s0_ = 1.0;
  double p_ = 1.2;
};

std::uint64_t batch_size(const BatchSchedule& sched, std::uint64_t k);

/// Stochastic first-order oracle for the pseudogradient.
class SamplingOracle {
 public:
  virtual ~SamplingOracle() = default;

  /// The expected-value model; gradient(i, u) = E[sample_gradient(i, u, xi)].
  virtual const CostModel& mean_model() const = 0;

  /// One draw of grad_{u_i} fhat_i(u, xi_i) with xi_i taken from `rng`.
  virtual void sample_gradient(std::size_t agent, std::span<const double> u, KeyedStream& rng,
                               std::span<double> out) const = 0;

  /// Mini-batch mean over `batch` draws; draw t uses KeyedStream(key, t). The
  /// default averages explicit draws; models may replace it with an exact-in-
  /// distribution shortcut.
  virtual void batch_gradient(std::size_t agent, std::span<const double> u, std::uint64_t batch,
                              const StreamKey& key, std::span<double> out) const;

  /// sigma with E||eps||^2 <= sigma^2 / S (reported only, never used by the solver).
  virtual double noise_bound() const = 0;

  virtual nlohmann::json to_json() const = 0;
};

/// grad fhat_i(u, xi) = grad f_i(u) + zeta, zeta ~ N(0, sd^2 I).
///
/// With `aggregate` set, the batch mean draws zeta_bar ~ N(0, sd^2/S I)
/// directly (same law as the average of S draws, one draw per coordinate).
class AdditiveGaussianOracle final : public SamplingOracle {
 public:
  AdditiveGaussianOracle(std::shared_ptr<const CostModel> cost, double sd, bool aggregate = true);

  const CostModel& mean_model() const override { return *cost_; }
  void sample_gradient(std::size_t agent, std::span<const double> u, KeyedStream& rng,
                       std::span<double> out) const override;
  void batch_gradient(std::size_t agent, std::span<const double> u, std::uint64_t batch,
                      const StreamKey& key, std::span<double> out) const override;
  double noise_bound() const override;
  nlohmann::json to_json() const override;

  double sd() const noexcept { return sd_; }
  bool aggregate() const noexcept { return aggregate_; }

 private:
  std::shared_ptr<const CostModel> cost_;
  double sd_;
  bool aggregate_;
};

/// Fhat_k(u): per-agent mini-batch means, agent i keyed by (seed, i, k, phase).
BlockVector sample_F_hat(const SamplingOracle& orc, const BlockVector& u, std::uint64_t batch,
                         std::uint64_t seed, std::uint64_t iteration, Phase phase,
                         Exec exec = Exec::parallel);

/// Vhat_k(x): V with the F-row replaced by sample_F_hat.
PrimalDualState sample_V_hat(const ExtendedOperator& op, const SamplingOracle& orc,
                             const PrimalDualState& x, std::uint64_t batch, std::uint64_t seed,
                             std::uint64_t iteration, Phase phase, Exec exec = Exec::parallel);

/// sqrt(E ||Fhat_1(u) - F(u)||^2) estimated from `draws` single-sample calls.
double empirical_noise_bound(const SamplingOracle& orc, const BlockVector& u, std::size_t draws,
                             std::uint64_t seed);

}  // namespace gnes
