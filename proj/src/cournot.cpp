#include "gnes/cournot.hpp"

#include "gnes/errors.hpp"
#include "gnes/json_io.hpp"
#include "gnes/operators.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <set>

namespace gnes {

namespace {

constexpr double kTruncation = 3.0;

void require_keys(const nlohmann::json& j, std::initializer_list<const char*> keys,
                  const char* what) {
  if (!j.is_object()) throw ConfigError(fmt::format("{} must be an object", what));
  for (const auto& [k, v] : j.items()) {
    if (std::none_of(keys.begin(), keys.end(), [&](const char* s) { return k == s; }))
      throw ConfigError(fmt::format("{}: unknown key '{}'", what, k));
  }
}

}  // namespace

std::vector<std::vector<std::size_t>> default_participation() {
  return {{0, 3}, {0},    {0, 2, 4},    {1, 6}, {2, 6},
          {6},    {2, 5}, {1, 2, 3, 5}, {0, 4}, {3, 4, 5}};
}

nlohmann::json CournotConfig::to_json() const {
  return {{"num_firms", num_firms},
          {"num_markets", num_markets},
          {"participation", participation},
          {"cost_mean", cost_mean},
          {"cost_sd", cost_sd},
          {"cost_floor", cost_floor},
          {"intercept", intercept},
          {"slope_mean", slope_mean},
          {"slope_sd", slope_sd},
          {"sigma_d", sigma_d},
          {"cap_mean", cap_mean},
          {"cap_sd", cap_sd},
          {"capacity_lo", capacity_lo},
          {"capacity_hi", capacity_hi},
          {"demand_sign", demand_sign},
          {"graph", graph},
          {"seed", seed},
          {"lipschitz_pairs", lipschitz_pairs},
          {"lipschitz_factor", lipschitz_factor}};
}

CournotConfig CournotConfig::from_json(const nlohmann::json& j) {
  require_keys(j,
               {"num_firms", "num_markets", "participation", "cost_mean", "cost_sd", "cost_floor",
                "intercept", "slope_mean", "slope_sd", "sigma_d", "cap_mean", "cap_sd",
                "capacity_lo", "capacity_hi", "demand_sign", "graph", "seed", "lipschitz_pairs",
                "lipschitz_factor"},
               "cournot config");
  CournotConfig c;
  try {
    c.num_firms = j.value("num_firms", c.num_firms);
    c.num_markets = j.value("num_markets", c.num_markets);
    c.participation = j.value("participation", c.participation);
    c.cost_mean = j.value("cost_mean", c.cost_mean);
    c.cost_sd = j.value("cost_sd", c.cost_sd);
    c.cost_floor = j.value("cost_floor", c.cost_floor);
    c.intercept = j.value("intercept", c.intercept);
    c.slope_mean = j.value("slope_mean", c.slope_mean);
    c.slope_sd = j.value("slope_sd", c.slope_sd);
    c.sigma_d = j.value("sigma_d", c.sigma_d);
    c.cap_mean = j.value("cap_mean", c.cap_mean);
    c.cap_sd = j.value("cap_sd", c.cap_sd);
    c.capacity_lo = j.value("capacity_lo", c.capacity_lo);
    c.capacity_hi = j.value("capacity_hi", c.capacity_hi);
    c.demand_sign = j.value("demand_sign", c.demand_sign);
    c.graph = j.value("graph", c.graph);
    c.seed = j.value("seed", c.seed);
    c.lipschitz_pairs = j.value("lipschitz_pairs", c.lipschitz_pairs);
    c.lipschitz_factor = j.value("lipschitz_factor", c.lipschitz_factor);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("cournot config: {}", e.what()));
  }
  return c;
}

std::size_t CournotMarkets::local_index(std::size_t firm, std::size_t market) const {
  const auto& ms = markets_of_firm.at(firm);
  const auto it = std::lower_bound(ms.begin(), ms.end(), market);
  if (it == ms.end() || *it != market) return std::numeric_limits<std::size_t>::max();
  return static_cast<std::size_t>(it - ms.begin());
}

CournotCost::CournotCost(PartitionPtr partition, std::shared_ptr<const CournotMarkets> markets,
                         double lipschitz)
    : partition_(std::move(partition)), markets_(std::move(markets)), lipschitz_(lipschitz) {
  const auto& mk = *markets_;
  const auto n = partition_->num_agents();
  if (mk.markets_of_firm.size() != n || mk.cost.size() != n)
    throw DimensionError("cournot cost: market data does not match the number of firms");
  neighbors_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (mk.markets_of_firm[i].size() != partition_->dim(i) ||
        static_cast<std::size_t>(mk.cost[i].size()) != partition_->dim(i))
      throw DimensionError(fmt::format("cournot cost: firm {} data does not match d_i = {}", i,
                                       partition_->dim(i)));
    std::set<std::size_t> nb;
    for (auto j : mk.markets_of_firm[i])
      for (auto k : mk.firms_of_market.at(j))
        if (k != i) nb.insert(k);
    neighbors_[i].assign(nb.begin(), nb.end());
  }
}

double CournotCost::supply(std::size_t market, std::span<const double> u) const {
  double s = 0.0;
  for (auto k : markets_->firms_of_market[market])
    s += u[partition_->primal_offset(k) + markets_->local_index(k, market)];
  return s;
}

void CournotCost::gradient_at(std::size_t agent, std::span<const double> u,
                              std::span<const double> slopes, std::span<double> out) const {
  const auto& mk = *markets_;
  const auto off = partition_->primal_offset(agent);
  const auto& ms = mk.markets_of_firm[agent];
  const double sgn = mk.demand_sign;
  const double sig = mk.sigma_d;
  for (std::size_t c = 0; c < ms.size(); ++c) {
    const auto j = ms[c];
    const auto ji = static_cast<Eigen::Index>(j);
    const double s = std::max(supply(j, u), 0.0);
    const double price = mk.intercept[ji] + sgn * slopes[j] * std::pow(s, sig);
    const double slope = s > 0.0 ? sgn * slopes[j] * sig * std::pow(s, sig - 1.0) : 0.0;
    out[c] = mk.cost[agent][static_cast<Eigen::Index>(c)] - price - u[off + c] * slope;
  }
}

void CournotCost::gradient(std::size_t agent, std::span<const double> u,
                           std::span<double> out) const {
  const auto& pbar = markets_->slope_mean;
  gradient_at(agent, u, {pbar.data(), static_cast<std::size_t>(pbar.size())}, out);
}

double CournotCost::cost_at(std::size_t agent, std::span<const double> u,
                            std::span<const double> slopes) const {
  const auto& mk = *markets_;
  const auto off = partition_->primal_offset(agent);
  const auto& ms = mk.markets_of_firm[agent];
  double f = 0.0;
  for (std::size_t c = 0; c < ms.size(); ++c) {
    const auto j = ms[c];
    const double s = std::max(supply(j, u), 0.0);
    const double price = mk.intercept[static_cast<Eigen::Index>(j)] +
                         mk.demand_sign * slopes[j] * std::pow(s, mk.sigma_d);
    f += (mk.cost[agent][static_cast<Eigen::Index>(c)] - price) * u[off + c];
  }
  return f;
}

nlohmann::json CournotCost::to_json() const {
  const auto& mk = *markets_;
  nlohmann::json costs = nlohmann::json::array();
  for (const auto& c : mk.cost) costs.push_back(vector_to_json(c));
  return {{"type", "cournot"},
          {"markets_of_firm", mk.markets_of_firm},
          {"cost", costs},
          {"intercept", vector_to_json(mk.intercept)},
          {"slope_mean", vector_to_json(mk.slope_mean)},
          {"slope_sd", mk.slope_sd},
          {"sigma_d", mk.sigma_d},
          {"demand_sign", mk.demand_sign},
          {"lipschitz", lipschitz_}};
}

double truncated_variance_factor() {
  const double t = kTruncation;
  const double pdf = std::exp(-0.5 * t * t) / std::sqrt(2.0 * std::numbers::pi);
  const double mass = std::erf(t / std::numbers::sqrt2);
  return 1.0 - 2.0 * t * pdf / mass;
}

CournotOracle::CournotOracle(std::shared_ptr<const CournotCost> cost, const Eigen::VectorXd& upper,
                             std::uint64_t explicit_limit)
    : cost_(std::move(cost)), explicit_limit_(explicit_limit) {
  if (!cost_) throw ParameterError("cournot oracle needs a cost model");
  const auto& mk = cost_->markets();
  const auto& p = cost_->partition();
  if (static_cast<std::size_t>(upper.size()) != p.primal_dim())
    throw DimensionError("cournot oracle: upper bound has the wrong length");
  slope_var_ = mk.slope_sd * mk.slope_sd * truncated_variance_factor();
  // Per-coordinate noise is (p - pbar)(S^sigma + u sigma S^(sigma-1)); bound it at the top of U.
  std::vector<double> smax(mk.firms_of_market.size(), 0.0);
  for (std::size_t j = 0; j < smax.size(); ++j)
    for (auto k : mk.firms_of_market[j])
      smax[j] += upper[static_cast<Eigen::Index>(p.primal_offset(k) + mk.local_index(k, j))];
  double acc = 0.0;
  for (std::size_t i = 0; i < p.num_agents(); ++i)
    for (std::size_t c = 0; c < p.dim(i); ++c) {
      const auto j = mk.markets_of_firm[i][c];
      const double s = smax[j];
      const double u = upper[static_cast<Eigen::Index>(p.primal_offset(i) + c)];
      const double g = std::pow(s, mk.sigma_d) +
                       (s > 0.0 ? u * mk.sigma_d * std::pow(s, mk.sigma_d - 1.0) : 0.0);
      acc += g * g;
    }
  noise_bound_ = std::sqrt(slope_var_ * acc);
}

void CournotOracle::draw_slopes(std::size_t agent, KeyedStream& rng,
                                std::vector<double>& slopes) const {
  const auto& mk = cost_->markets();
  slopes.assign(mk.firms_of_market.size(), 0.0);
  for (auto j : mk.markets_of_firm[agent]) {
    double z = 0.0;
    if (mk.slope_sd > 0.0) {
      do {
        z = rng.normal();
      } while (std::abs(z) > kTruncation);
    }
    slopes[j] = mk.slope_mean[static_cast<Eigen::Index>(j)] + mk.slope_sd * z;
  }
}

void CournotOracle::sample_gradient(std::size_t agent, std::span<const double> u,
                                    KeyedStream& rng, std::span<double> out) const {
  std::vector<double> slopes;
  draw_slopes(agent, rng, slopes);
  cost_->gradient_at(agent, u, slopes, out);
}

void CournotOracle::batch_gradient(std::size_t agent, std::span<const double> u,
                                   std::uint64_t batch, const StreamKey& key,
                                   std::span<double> out) const {
  if (batch == 0) throw ParameterError("batch size must be at least 1");
  const auto& mk = cost_->markets();
  std::vector<double> mean(mk.firms_of_market.size(), 0.0);
  if (batch <= explicit_limit_) {
    std::vector<double> draw;
    for (std::uint64_t t = 0; t < batch; ++t) {
      KeyedStream rng(key, t);
      draw_slopes(agent, rng, draw);
      for (auto j : mk.markets_of_firm[agent]) mean[j] += draw[j];
    }
    for (auto j : mk.markets_of_firm[agent]) mean[j] /= static_cast<double>(batch);
  } else {
    KeyedStream rng(key, 0);
    const double sd = std::sqrt(slope_var_ / static_cast<double>(batch));
    for (auto j : mk.markets_of_firm[agent]) {
      const double m = mk.slope_mean[static_cast<Eigen::Index>(j)];
      const double half = kTruncation * mk.slope_sd;
      mean[j] = std::clamp(m + sd * rng.normal(), m - half, m + half);
    }
  }
  cost_->gradient_at(agent, u, mean, out);
}

nlohmann::json CournotOracle::to_json() const {
  return {{"model", "cournot"}, {"explicit_limit", explicit_limit_}};
}

CournotInstance assemble_cournot(const CournotMarkets& markets,
                                 const std::vector<Eigen::VectorXd>& caps,
                                 const std::vector<Eigen::VectorXd>& offsets,
                                 const Eigen::MatrixXd& weights, double lipschitz,
                                 std::uint64_t explicit_limit) {
  const auto n = markets.markets_of_firm.size();
  const auto m = markets.firms_of_market.size();
  if (caps.size() != n) throw DimensionError("cournot: one cap vector per firm is required");
  if (offsets.size() != n) throw DimensionError("cournot: one offset vector per firm is required");
  std::vector<std::size_t> dims(n);
  for (std::size_t i = 0; i < n; ++i) dims[i] = markets.markets_of_firm[i].size();
  auto part = make_partition(dims, m);
  auto mk = std::make_shared<const CournotMarkets>(markets);
  auto cost = std::make_shared<const CournotCost>(part, mk, lipschitz);

  std::vector<AgentData> agents(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto di = static_cast<Eigen::Index>(dims[i]);
    if (caps[i].size() != di)
      throw DimensionError(fmt::format("cournot: firm {} has {} caps for {} markets", i,
                                       caps[i].size(), di));
    agents[i].regularizer =
        std::make_shared<const BoxRegularizer>(Eigen::VectorXd::Zero(di), caps[i]);
    agents[i].coupling = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m), di);
    for (Eigen::Index c = 0; c < di; ++c)
      agents[i].coupling(static_cast<Eigen::Index>(markets.markets_of_firm[i][c]), c) = 1.0;
    if (static_cast<std::size_t>(offsets[i].size()) != m)
      throw DimensionError(fmt::format("cournot: offset of firm {} must have length {}", i, m));
    agents[i].offset = offsets[i];
  }
  auto problem = std::make_shared<const GameProblem>(part, cost, std::move(agents));
  auto oracle = std::make_shared<const CournotOracle>(cost, problem->upper(), explicit_limit);
  auto graph = std::make_shared<const CommGraph>(build_graph(weights));
  return {problem, oracle, graph};
}

CournotInstance generate(const CournotConfig& cfg) {
  if (!(cfg.sigma_d > 1.0 && cfg.sigma_d <= 3.0))
    throw ConfigError(fmt::format("sigma_d = {} must lie in (1, 3]: the pseudogradient is only "
                                  "known to be monotone for 1 < sigma <= 3",
                                  cfg.sigma_d));
  if (cfg.demand_sign != 1 && cfg.demand_sign != -1)
    throw ConfigError(fmt::format("demand_sign = {} must be +1 or -1", cfg.demand_sign));
  if (cfg.num_firms == 0 || cfg.num_markets == 0)
    throw ConfigError("cournot game needs at least one firm and one market");
  for (double v : {cfg.cost_sd, cfg.slope_sd, cfg.cap_sd})
    if (!(v >= 0.0) || !std::isfinite(v))
      throw ConfigError("cournot standard deviations must be finite and nonnegative");
  if (!(cfg.capacity_lo <= cfg.capacity_hi))
    throw ConfigError(fmt::format("capacity range [{}, {}] is empty", cfg.capacity_lo,
                                  cfg.capacity_hi));
  if (!(cfg.lipschitz_factor >= 1.0))
    throw ConfigError("lipschitz_factor must be at least 1");
  if (cfg.lipschitz_pairs == 0) throw ConfigError("lipschitz_pairs must be positive");

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unit;

  CournotMarkets mk;
  mk.markets_of_firm = cfg.participation;
  if (mk.markets_of_firm.empty()) {
    if (cfg.num_firms == 10 && cfg.num_markets == 7) {
      mk.markets_of_firm = default_participation();
    } else {
      mk.markets_of_firm.resize(cfg.num_firms);
      for (auto& ms : mk.markets_of_firm) {
        for (std::size_t j = 0; j < cfg.num_markets; ++j)
          if (unit(rng) < 0.3) ms.push_back(j);
        if (ms.empty()) ms.push_back(static_cast<std::size_t>(unit(rng) * cfg.num_markets) %
                                     cfg.num_markets);
      }
      for (std::size_t j = 0; j < cfg.num_markets; ++j) {
        const bool covered = std::any_of(mk.markets_of_firm.begin(), mk.markets_of_firm.end(),
                                         [&](const auto& ms) {
                                           return std::find(ms.begin(), ms.end(), j) != ms.end();
                                         });
        if (!covered) {
          auto& ms = mk.markets_of_firm[static_cast<std::size_t>(unit(rng) * cfg.num_firms) %
                                        cfg.num_firms];
          ms.insert(std::upper_bound(ms.begin(), ms.end(), j), j);
        }
      }
    }
  }
  if (mk.markets_of_firm.size() != cfg.num_firms)
    throw ConfigError(fmt::format("participation lists {} firms, expected {}",
                                  mk.markets_of_firm.size(), cfg.num_firms));
  mk.firms_of_market.assign(cfg.num_markets, {});
  for (std::size_t i = 0; i < cfg.num_firms; ++i) {
    auto& ms = mk.markets_of_firm[i];
    std::sort(ms.begin(), ms.end());
    if (ms.empty()) throw ConfigError(fmt::format("firm {} participates in no market", i));
    if (std::adjacent_find(ms.begin(), ms.end()) != ms.end())
      throw ConfigError(fmt::format("firm {} lists a market twice", i));
    for (auto j : ms) {
      if (j >= cfg.num_markets)
        throw ConfigError(fmt::format("firm {} lists market {} of {}", i, j, cfg.num_markets));
      mk.firms_of_market[j].push_back(i);
    }
  }
  for (std::size_t j = 0; j < cfg.num_markets; ++j)
    if (mk.firms_of_market[j].empty())
      throw ConfigError(fmt::format("market {} has no participating firm", j));

  mk.cost.resize(cfg.num_firms);
  for (std::size_t i = 0; i < cfg.num_firms; ++i) {
    mk.cost[i].resize(static_cast<Eigen::Index>(mk.markets_of_firm[i].size()));
    for (auto& c : mk.cost[i])
      c = std::max(cfg.cost_mean + cfg.cost_sd * normal(rng), cfg.cost_floor);
  }
  std::vector<Eigen::VectorXd> caps(cfg.num_firms);
  for (std::size_t i = 0; i < cfg.num_firms; ++i) {
    caps[i].resize(static_cast<Eigen::Index>(mk.markets_of_firm[i].size()));
    for (auto& t : caps[i]) t = std::max(cfg.cap_mean + cfg.cap_sd * normal(rng), 0.0);
  }
  Eigen::VectorXd capacity(static_cast<Eigen::Index>(cfg.num_markets));
  for (auto& b : capacity) b = cfg.capacity_lo + (cfg.capacity_hi - cfg.capacity_lo) * unit(rng);

  const auto nm = static_cast<Eigen::Index>(cfg.num_markets);
  mk.intercept = Eigen::VectorXd::Constant(nm, cfg.intercept);
  mk.slope_mean = Eigen::VectorXd::Constant(nm, cfg.slope_mean);
  mk.slope_sd = cfg.slope_sd;
  mk.sigma_d = cfg.sigma_d;
  mk.demand_sign = cfg.demand_sign;

  const std::vector<Eigen::VectorXd> offsets(cfg.num_firms,
                                             capacity / static_cast<double>(cfg.num_firms));
  const auto weights = generator_weights(cfg.graph, cfg.num_firms);
  const auto probe = assemble_cournot(mk, caps, offsets, weights, 0.0);
  const double ratio =
      sampled_lipschitz_ratio(*probe.problem, cfg.lipschitz_pairs, cfg.seed ^ 0x5eedULL);
  return assemble_cournot(mk, caps, offsets, weights, cfg.lipschitz_factor * ratio);
}

namespace {

template <class Fn>
void for_random_pairs(const GameProblem& problem, std::size_t pairs, std::uint64_t seed, Fn&& fn) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit;
  const auto& lo = problem.lower();
  const auto& hi = problem.upper();
  BlockVector u(problem.partition_ptr(), BlockKind::primal);
  BlockVector v(problem.partition_ptr(), BlockKind::primal);
  for (std::size_t t = 0; t < pairs; ++t) {
    for (Eigen::Index c = 0; c < lo.size(); ++c) {
      u.data()[c] = lo[c] + (hi[c] - lo[c]) * unit(rng);
      v.data()[c] = lo[c] + (hi[c] - lo[c]) * unit(rng);
    }
    const Eigen::VectorXd du = u.data() - v.data();
    if (du.squaredNorm() == 0.0) continue;
    const Eigen::VectorXd df =
        apply_F(problem, u, Exec::serial).data() - apply_F(problem, v, Exec::serial).data();
    fn(du, df);
  }
}

}  // namespace

MonotonicityReport monotonicity_probe(const GameProblem& problem, std::size_t trials,
                                      std::uint64_t seed) {
  MonotonicityReport rep;
  rep.trials = trials;
  rep.min_ratio = std::numeric_limits<double>::infinity();
  for_random_pairs(problem, trials, seed, [&](const Eigen::VectorXd& du, const Eigen::VectorXd& df) {
    rep.min_ratio = std::min(rep.min_ratio, df.dot(du) / du.squaredNorm());
  });
  return rep;
}

double sampled_lipschitz_ratio(const GameProblem& problem, std::size_t pairs, std::uint64_t seed) {
  double best = 0.0;
  for_random_pairs(problem, pairs, seed, [&](const Eigen::VectorXd& du, const Eigen::VectorXd& df) {
    best = std::max(best, df.norm() / du.norm());
  });
  return best;
}

}  // namespace gnes
