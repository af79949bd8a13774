#include "gnes/stochastic.hpp"

#include "gnes/errors.hpp"
#include "gnes/kernels.hpp"

#include <fmt/format.h>

#include <cmath>
#include <vector>

namespace gnes {

namespace {

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t absorb(std::uint64_t h, std::uint64_t word) { return mix64(h + kGolden + word); }

void require_finite(std::span<const double> v, std::size_t agent, std::uint64_t draw) {
  for (std::size_t c = 0; c < v.size(); ++c)
    if (!std::isfinite(v[c]))
      throw NumericError(fmt::format("sampled gradient of agent {} is not finite at coordinate {} "
                                     "(draw {})",
                                     agent, c, draw),
                         agent);
}

}  // namespace

KeyedStream::KeyedStream(const StreamKey& key, std::uint64_t draw) {
  std::uint64_t h = mix64(key.seed ^ 0x6a09e667f3bcc909ULL);
  h = absorb(h, key.agent);
  h = absorb(h, key.iteration);
  h = absorb(h, static_cast<std::uint64_t>(key.phase));
  h = absorb(h, draw);
  state_ = h;
}

KeyedStream::result_type KeyedStream::operator()() {
  state_ += kGolden;
  return mix64(state_);
}

BatchSchedule::BatchSchedule(double s0, double exponent) : s0_(s0), p_(exponent) {
  if (!(s0_ > 0.0) || !std::isfinite(s0_))
    throw ConfigError(fmt::format("batch.S0 = {} must be positive", s0_));
  if (!(p_ > 1.0) || !std::isfinite(p_))
    throw ConfigError(fmt::format("batch.p = {} must exceed 1 so that sum 1/S_k is finite "
                                  "(Standing Assumption 6)",
                                  p_));
}

std::uint64_t batch_size(const BatchSchedule& sched, std::uint64_t k) {
  const double raw = std::ceil(sched.initial() * std::pow(static_cast<double>(k) + 1.0,
                                                          sched.exponent()));
  constexpr double cap = 1e15;
  if (!(raw >= 1.0)) return 1;
  return static_cast<std::uint64_t>(std::min(raw, cap));
}

void SamplingOracle::batch_gradient(std::size_t agent, std::span<const double> u,
                                    std::uint64_t batch, const StreamKey& key,
                                    std::span<double> out) const {
  if (batch == 0) throw ParameterError("batch size must be at least 1");
  std::vector<double> draw(out.size());
  std::vector<double> acc(out.size(), 0.0);
  for (std::uint64_t t = 0; t < batch; ++t) {
    KeyedStream rng(key, t);
    sample_gradient(agent, u, rng, draw);
    require_finite(draw, agent, t);
    for (std::size_t c = 0; c < out.size(); ++c) acc[c] += draw[c];
  }
  const auto s = static_cast<double>(batch);
  for (std::size_t c = 0; c < out.size(); ++c) out[c] = acc[c] / s;
}

AdditiveGaussianOracle::AdditiveGaussianOracle(std::shared_ptr<const CostModel> cost, double sd,
                                               bool aggregate)
    : cost_(std::move(cost)), sd_(sd), aggregate_(aggregate) {
  if (!cost_) throw ParameterError("sampling oracle needs a cost model");
  if (!(sd_ >= 0.0) || !std::isfinite(sd_))
    throw ConfigError(fmt::format("noise sd = {} must be finite and nonnegative", sd_));
}

void AdditiveGaussianOracle::sample_gradient(std::size_t agent, std::span<const double> u,
                                             KeyedStream& rng, std::span<double> out) const {
  cost_->gradient(agent, u, out);
  if (sd_ == 0.0) return;
  for (auto& v : out) v += sd_ * rng.normal();
}

void AdditiveGaussianOracle::batch_gradient(std::size_t agent, std::span<const double> u,
                                            std::uint64_t batch, const StreamKey& key,
                                            std::span<double> out) const {
  if (batch == 0) throw ParameterError("batch size must be at least 1");
  cost_->gradient(agent, u, out);
  require_finite(out, agent, 0);
  if (sd_ == 0.0) return;
  const auto s = static_cast<double>(batch);
  if (aggregate_) {
    KeyedStream rng(key, 0);
    const double scale = sd_ / std::sqrt(s);
    for (auto& v : out) v += scale * rng.normal();
    return;
  }
  std::vector<double> acc(out.size(), 0.0);
  for (std::uint64_t t = 0; t < batch; ++t) {
    KeyedStream rng(key, t);
    for (auto& a : acc) a += rng.normal();
  }
  for (std::size_t c = 0; c < out.size(); ++c) out[c] += sd_ * (acc[c] / s);
}

double AdditiveGaussianOracle::noise_bound() const {
  return sd_ * std::sqrt(static_cast<double>(cost_->partition().primal_dim()));
}

nlohmann::json AdditiveGaussianOracle::to_json() const {
  return {{"model", "gaussian"}, {"sd", sd_}, {"aggregate", aggregate_}};
}

BlockVector sample_F_hat(const SamplingOracle& orc, const BlockVector& u, std::uint64_t batch,
                         std::uint64_t seed, std::uint64_t iteration, Phase phase, Exec exec) {
  if (u.kind() != BlockKind::primal) throw DimensionError("sample_F_hat expects a primal vector");
  const auto& part = u.partition();
  require_same_layout(part, orc.mean_model().partition(), "sample_F_hat");
  BlockVector out(u.partition_ptr(), BlockKind::primal);
  kernels::for_each_agent(exec, part.num_agents(), [&](std::size_t i) {
    auto block = out.span().subspan(part.primal_offset(i), part.dim(i));
    orc.batch_gradient(i, u.span(), batch, StreamKey{seed, i, iteration, phase}, block);
    require_finite(block, i, batch);
  });
  return out;
}

PrimalDualState sample_V_hat(const ExtendedOperator& op, const SamplingOracle& orc,
                             const PrimalDualState& x, std::uint64_t batch, std::uint64_t seed,
                             std::uint64_t iteration, Phase phase, Exec exec) {
  require_same_layout(op.partition(), x.partition(), "sample_V_hat");
  PrimalDualState out(op.partition_ptr());
  kernels::for_each_agent(exec, op.partition().num_agents(), [&](std::size_t i) {
    auto f_i = out.u_span(i);
    orc.batch_gradient(i, x.u_all(), batch, StreamKey{seed, i, iteration, phase}, f_i);
    require_finite(f_i, i, batch);
    kernels::operator_rows(op, i, x, f_i, out);
  });
  return out;
}

double empirical_noise_bound(const SamplingOracle& orc, const BlockVector& u, std::size_t draws,
                             std::uint64_t seed) {
  const auto& part = u.partition();
  const auto& model = orc.mean_model();
  std::vector<double> exact(part.primal_dim());
  for (std::size_t i = 0; i < part.num_agents(); ++i)
    model.gradient(i, u.span(),
                   std::span<double>(exact).subspan(part.primal_offset(i), part.dim(i)));
  double acc = 0.0;
  std::vector<double> g;
  for (std::size_t t = 0; t < draws; ++t) {
    for (std::size_t i = 0; i < part.num_agents(); ++i) {
      g.assign(part.dim(i), 0.0);
      KeyedStream rng(StreamKey{seed, i, t, Phase::xi}, 0);
      orc.sample_gradient(i, u.span(), rng, g);
      for (std::size_t c = 0; c < g.size(); ++c) {
        const double e = g[c] - exact[part.primal_offset(i) + c];
        acc += e * e;
      }
    }
  }
  return std::sqrt(acc / static_cast<double>(std::max<std::size_t>(draws, 1)));
}

}  // namespace gnes
