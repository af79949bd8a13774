#include "gnes/blockvec.hpp"
#include "gnes/errors.hpp"

#include "helpers.hpp"

#include <doctest.h>

#include <random>

using namespace gnes;

TEST_CASE("partition layout") {
  const auto p = make_partition({2, 1, 3}, 2);
  CHECK(p->primal_dim() == 6);
  CHECK(p->dual_dim() == 6);
  CHECK(p->state_dim() == 18);
  CHECK(p->primal_offset(2) == 3);
  CHECK_THROWS_AS(make_partition({}, 1), ParameterError);
  CHECK_THROWS_AS(make_partition({1, 0}, 1), ParameterError);
  CHECK_THROWS_AS(make_partition({1}, 0), ParameterError);
}

TEST_CASE("state blocks are views of one flat array") {
  const auto p = make_partition({2, 1}, 2);
  PrimalDualState x(p);
  x.u_span(1)[0] = 7.0;
  x.mu_span(0)[1] = 3.0;
  x.lambda_span(1)[0] = -2.0;
  CHECK(x.data()[2] == 7.0);
  CHECK(x.data()[3 + 1] == 3.0);
  CHECK(x.data()[3 + 4 + 2] == -2.0);
  CHECK(x.primal().data()[2] == 7.0);
  CHECK(x.duals().block(1)[0] == -2.0);
  CHECK_THROWS_AS(PrimalDualState(p, Eigen::VectorXd::Zero(4)), DimensionError);
}

TEST_CASE("psi_inner examples") {
  {
    const auto p = make_partition({1, 2}, 1);
    const auto psi = Preconditioner::uniform(p, 0.3);
    PrimalDualState z(p);
    CHECK(psi_inner(z, z, psi) == 0.0);
  }
  {
    const auto p = make_partition({3}, 1);
    CHECK(p->state_dim() == 5);
    const auto psi = Preconditioner::uniform(p, 1.0);
    const PrimalDualState ones(p, Eigen::VectorXd::Ones(5));
    CHECK(psi_inner(ones, ones, psi) == doctest::Approx(5.0).epsilon(1e-15));
  }
  {
    const auto p = make_partition({1}, 1);
    const Preconditioner psi(p, {0.5}, {0.25}, {0.25});
    const PrimalDualState ones(p, Eigen::VectorXd::Ones(3));
    CHECK(psi_inner(ones, ones, psi) == doctest::Approx(10.0).epsilon(1e-15));
    CHECK(psi_norm(ones, psi) == doctest::Approx(std::sqrt(10.0)).epsilon(1e-15));
    CHECK(inv_psi_norm_sq(ones, psi) == doctest::Approx(1.0).epsilon(1e-15));
  }
}

TEST_CASE("psi_inner rejects mismatched layouts, naming the block") {
  const auto a = make_partition({1, 2}, 1);
  const auto b = make_partition({1, 3}, 1);
  const auto psi = Preconditioner::uniform(a, 1.0);
  PrimalDualState x(a), y(b);
  try {
    (void)psi_inner(x, y, psi);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    CHECK(std::string(e.what()).find("u[1]") != std::string::npos);
  }
}

TEST_CASE("preconditioner spectrum") {
  const auto p = make_partition({1, 1}, 1);
  const Preconditioner psi(p, {0.5, 0.2}, {0.1, 0.4}, {0.25, 0.3});
  CHECK(psi.max_step() == 0.5);
  CHECK(psi.min_step() == 0.1);
  CHECK(psi.lambda_min() == doctest::Approx(2.0));
  CHECK(psi.lambda_max() == doctest::Approx(10.0));
  CHECK(psi.weights()[0] == doctest::Approx(2.0));
  CHECK(psi.weights()[2] == doctest::Approx(10.0));  // sigma_0 = 0.1
  CHECK_THROWS_AS(Preconditioner(p, {0.5, 0.0}, {1, 1}, {1, 1}), ParameterError);
  CHECK_THROWS_AS(Preconditioner(p, {0.5}, {1, 1}, {1, 1}), DimensionError);
}

TEST_CASE("relaxed_combine examples") {
  const auto p = make_partition({2}, 1);
  std::mt19937_64 rng(5);
  const auto z = test::random_state(p, rng);
  const auto r = test::random_state(p, rng);
  CHECK(test::bitwise_equal(relaxed_combine(z, r, 1.0).data(), r.data()));
  CHECK((relaxed_combine(z, z, 0.37).data() - z.data()).cwiseAbs().maxCoeff() <= 1e-15);
  const PrimalDualState zero(p);
  const PrimalDualState two(p, Eigen::VectorXd::Constant(4, 2.0));
  const auto c = relaxed_combine(zero, two, 0.25);
  for (auto v : c.data()) CHECK(v == 0.5);
  CHECK_THROWS_AS(relaxed_combine(z, r, 0.0), ParameterError);
  CHECK_THROWS_AS(relaxed_combine(z, r, 1.5), ParameterError);
}

TEST_CASE("convex combination identity in the Psi norm") {
  // ||a x + b y||^2 = a ||x||^2 + b ||y||^2 - a b ||x - y||^2 when a + b = 1.
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const auto p = make_partition({2, 3, 1}, 2);
  const Preconditioner psi(p, {0.1, 0.2, 0.3}, {0.05, 0.4, 0.15}, {0.25, 0.12, 0.33});
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const auto x = test::random_state(p, rng, 3.0);
    const auto y = test::random_state(p, rng, 3.0);
    const double a = unif(rng), b = 1.0 - a;
    const PrimalDualState mix(p, a * x.data() + b * y.data());
    const double lhs = psi_norm_sq(mix, psi);
    const double rhs =
        a * psi_norm_sq(x, psi) + b * psi_norm_sq(y, psi) - a * b * psi_dist_sq(x, y, psi);
    worst = std::max(worst, std::abs(lhs - rhs) / std::max(1.0, std::abs(lhs)));
  }
  CHECK(worst <= 1e-12);
}
