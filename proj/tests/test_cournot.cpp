#include "gnes/cournot.hpp"
#include "gnes/errors.hpp"
#include "gnes/instance.hpp"
#include "gnes/operators.hpp"

#include "helpers.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace gnes;

namespace {

/// One firm in one market with the given cost and demand data.
CournotInstance single_market(double c, double q, double pbar, double sigma_d, int sign,
                              double slope_sd = 0.005) {
  CournotMarkets mk;
  mk.markets_of_firm = {{0}};
  mk.firms_of_market = {{0}};
  mk.cost = {Eigen::VectorXd::Constant(1, c)};
  mk.intercept = Eigen::VectorXd::Constant(1, q);
  mk.slope_mean = Eigen::VectorXd::Constant(1, pbar);
  mk.slope_sd = slope_sd;
  mk.sigma_d = sigma_d;
  mk.demand_sign = sign;
  return assemble_cournot(mk, {Eigen::VectorXd::Constant(1, 200.0)}, {Eigen::VectorXd::Constant(1, 200.0)},
                          Eigen::MatrixXd::Zero(1, 1), 1.0);
}

double grad(const CournotInstance& c, std::size_t i, const Eigen::VectorXd& u) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(c.problem->partition().dim(i)));
  c.problem->cost().gradient(i, {u.data(), static_cast<std::size_t>(u.size())},
                             {out.data(), static_cast<std::size_t>(out.size())});
  return out[0];
}

}  // namespace

TEST_CASE("gradient by hand for one firm and one market") {
  const auto c = single_market(0.6, 400, 0.02, 1.2, -1);
  const Eigen::VectorXd u = Eigen::VectorXd::Constant(1, 100.0);
  const double expect = 0.6 - (400 - 0.02 * std::pow(100.0, 1.2)) + 100 * 0.02 * 1.2 * std::pow(100.0, 0.2);
  CHECK(grad(c, 0, u) == doctest::Approx(expect).epsilon(1e-14));
  // Zero aggregate supply: only c - q survives.
  CHECK(grad(c, 0, Eigen::VectorXd::Zero(1)) == doctest::Approx(0.6 - 400).epsilon(1e-15));
}

TEST_CASE("gradient matches finite differences of the sampled cost") {
  const auto c = generate(CournotConfig{});
  const auto* cost = dynamic_cast<const CournotCost*>(&c.problem->cost());
  REQUIRE(cost);
  const auto& part = c.problem->partition();
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> uu(1.0, 8.0), ss(0.015, 0.025);
  for (int t = 0; t < 10; ++t) {
    Eigen::VectorXd u(static_cast<Eigen::Index>(part.primal_dim()));
    for (auto& e : u) e = uu(rng);
    std::vector<double> slopes(7);
    for (auto& s : slopes) s = ss(rng);
    for (std::size_t i = 0; i < part.num_agents(); ++i) {
      const auto di = part.dim(i);
      std::vector<double> g(di);
      cost->gradient_at(i, {u.data(), static_cast<std::size_t>(u.size())}, slopes, g);
      for (std::size_t c2 = 0; c2 < di; ++c2) {
        const auto idx = static_cast<Eigen::Index>(part.primal_offset(i) + c2);
        const double h = 1e-5;
        Eigen::VectorXd up = u, dn = u;
        up[idx] += h;
        dn[idx] -= h;
        const double fd = (cost->cost_at(i, {up.data(), static_cast<std::size_t>(up.size())}, slopes) -
                           cost->cost_at(i, {dn.data(), static_cast<std::size_t>(dn.size())}, slopes)) /
                          (2 * h);
        CHECK(fd == doctest::Approx(g[c2]).epsilon(1e-6));
      }
    }
  }
}

TEST_CASE("default topology") {
  const auto part = default_participation();
  const std::vector<std::vector<std::size_t>> fig = {{0, 3}, {0}, {0, 2, 4}, {1, 6}, {2, 6},
                                                     {6},    {2, 5}, {1, 2, 3, 5}, {0, 4}, {3, 4, 5}};
  CHECK(part == fig);
  const auto c = generate(CournotConfig{});
  CHECK(c.problem->num_agents() == 10);
  CHECK(c.problem->partition().constraint_dim() == 7);
  CHECK(c.graph->num_edges() == 10);  // ring
  // D has one unit entry per (firm, market) pair: D u is the market supply.
  const auto& D = c.problem->stacked_coupling();
  CHECK(D.cwiseAbs().sum() == doctest::Approx(22.0));
  std::size_t col = 0;
  for (std::size_t i = 0; i < 10; ++i)
    for (auto j : fig[i]) {
      CHECK(D(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(col)) == 1.0);
      ++col;
    }
}

TEST_CASE("generation is deterministic in the seed") {
  CournotConfig cfg;
  cfg.seed = 4;
  const auto a = instance_to_json(from_cournot(generate(cfg), "a"));
  const auto b = instance_to_json(from_cournot(generate(cfg), "a"));
  CHECK(a == b);
  cfg.seed = 5;
  CHECK(instance_to_json(from_cournot(generate(cfg), "a")) != a);
}

TEST_CASE("config validation and round-trip") {
  CournotConfig cfg;
  cfg.sigma_d = 1.0;
  CHECK_THROWS_AS(generate(cfg), ConfigError);
  cfg.sigma_d = 3.5;
  CHECK_THROWS_AS(generate(cfg), ConfigError);
  cfg = {};
  cfg.demand_sign = 0;
  CHECK_THROWS_AS(generate(cfg), ConfigError);
  cfg = {};
  cfg.participation = default_participation();
  cfg.participation[3].clear();
  CHECK_THROWS_AS(generate(cfg), ConfigError);

  CournotConfig full;
  full.num_firms = 6;
  full.num_markets = 4;
  full.sigma_d = 2.5;
  full.graph = "erdos-renyi(0.5, 3)";
  full.seed = 77;
  const auto j = full.to_json();
  CHECK(CournotConfig::from_json(j).to_json() == j);
  auto bad = j;
  bad["colour"] = 1;
  CHECK_THROWS_AS(CournotConfig::from_json(bad), ConfigError);
  CHECK_NOTHROW(generate(full));  // random participation for non-default sizes
}

TEST_CASE("monotonicity probe") {
  const auto c = generate(CournotConfig{});
  CHECK(monotonicity_probe(*c.problem, 1000, 1).passed());
  const auto single = single_market(0.6, 400, 0.02, 1.2, -1);
  CHECK(monotonicity_probe(*single.problem, 1000, 2).min_ratio >= 0.0);
  CournotConfig plus;
  plus.demand_sign = 1;
  plus.seed = 3;
  CHECK_FALSE(monotonicity_probe(*generate(plus).problem, 1000, 1).passed());
}

TEST_CASE("truncated slope variance factor") {
  // Var of N(0,1) truncated at +-3: 1 - 2 * 3 phi(3) / (2 Phi(3) - 1).
  const double phi3 = std::exp(-4.5) / std::sqrt(2 * M_PI);
  const double mass = std::erf(3 / std::sqrt(2.0));
  CHECK(truncated_variance_factor() == doctest::Approx(1 - 6 * phi3 / mass).epsilon(1e-12));
}

TEST_CASE("sampled gradients are unbiased with the right variance") {
  const auto c = generate(CournotConfig{});
  const auto& part = c.problem->partition();
  Eigen::VectorXd u = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(part.primal_dim()), 4.0);
  const BlockVector ub(c.problem->partition_ptr(), BlockKind::primal, u);
  const auto f = apply_F(*c.problem, ub).data();
  std::vector<double> scaled;  // S * total variance, constant in S
  for (std::uint64_t S : {1, 16, 256}) {  // explicit draws and the moment-matched path
    const std::uint64_t n = S == 1 ? 100000 : 20000;
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(f.size()), sq = mean;
    for (std::uint64_t t = 0; t < n; ++t) {
      const Eigen::VectorXd e = sample_F_hat(*c.oracle, ub, S, 5, t, Phase::xi, Exec::serial).data() - f;
      mean += e;
      sq += e.cwiseProduct(e);
    }
    mean /= static_cast<double>(n);
    const Eigen::VectorXd var = sq / static_cast<double>(n) - mean.cwiseProduct(mean);
    for (Eigen::Index i = 0; i < f.size(); ++i) {
      CHECK(std::abs(mean[i]) <= 4 * std::sqrt(var[i] / static_cast<double>(n)) + 1e-12);
    }
    scaled.push_back(var.sum() * static_cast<double>(S));
  }
  CHECK(scaled[0] > 0.0);
  CHECK(scaled[1] == doctest::Approx(scaled[0]).epsilon(0.1));
  CHECK(scaled[2] == doctest::Approx(scaled[0]).epsilon(0.1));
}

TEST_CASE("Cournot sampling is policy independent") {
  const auto c = generate(CournotConfig{});
  const ExtendedOperator op(c.problem, c.graph);
  std::mt19937_64 rng(3);
  auto x = test::random_state(op.partition_ptr(), rng, 5.0);
  x.u() = x.u().cwiseAbs();
  for (std::uint64_t S : {3, 500})
    CHECK(test::bitwise_equal(sample_V_hat(op, *c.oracle, x, S, 1, 2, Phase::eta, Exec::serial).data(),
                              sample_V_hat(op, *c.oracle, x, S, 1, 2, Phase::eta, Exec::parallel).data()));
}

TEST_CASE("estimated Lipschitz constant bounds sampled ratios") {
  const auto c = generate(CournotConfig{});
  CHECK(sampled_lipschitz_ratio(*c.problem, 2000, 99) <= c.problem->cost().lipschitz());
}
