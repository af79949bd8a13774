#include "gnes/agentnet.hpp"
#include "gnes/cournot.hpp"
#include "gnes/errors.hpp"
#include "gnes/instance.hpp"

#include "helpers.hpp"

#include <doctest.h>

#include <fstream>

using namespace gnes;

namespace {

SolverParams short_run(Variant v, std::size_t iters) {
  SolverParams p;
  p.variant = v;
  p.max_iters = iters;
  p.tol = 0.0;
  return p;
}

/// Affine cost that claims to depend on no other agent but reads all of u.
class LyingCost final : public CostModel {
 public:
  explicit LyingCost(std::shared_ptr<const AffineCost> inner)
      : inner_(std::move(inner)), none_(inner_->partition().num_agents()) {}
  const AgentPartition& partition() const override { return inner_->partition(); }
  void gradient(std::size_t agent, std::span<const double> u, std::span<double> out) const override {
    inner_->gradient(agent, u, out);
  }
  const std::vector<std::size_t>& interaction_neighbors(std::size_t agent) const override {
    return none_.at(agent);
  }
  double lipschitz() const override { return inner_->lipschitz(); }
  nlohmann::json to_json() const override { return inner_->to_json(); }

 private:
  std::shared_ptr<const AffineCost> inner_;
  std::vector<std::vector<std::size_t>> none_;
};

}  // namespace

TEST_CASE("distributed traces equal monolithic traces bitwise") {
  for (const auto& name : builtin_names()) {
    const auto inst = builtin_instance(name, 0.1);
    const ExtendedOperator op(inst.problem, inst.graph);
    const PrimalDualState x0(op.partition_ptr());
    for (auto v : {Variant::risfbf, Variant::sfbf, Variant::sfb}) {
      const auto p = short_run(v, 60);
      const auto mono = run(op, *inst.oracle, p, x0, 7);
      const auto dist = run_distributed(op, *inst.oracle, p, x0, 7);
      CHECK(mono.trace.hash() == dist.run.trace.hash());
      CHECK(test::bitwise_equal(mono.final_state.data(), dist.run.final_state.data()));
    }
  }
  const auto c = generate(CournotConfig{});
  const ExtendedOperator op(c.problem, c.graph);
  const auto p = short_run(Variant::risfbf, 30);
  const PrimalDualState x0(op.partition_ptr());
  CHECK(run(op, *c.oracle, p, x0, 3).trace.hash() ==
        run_distributed(op, *c.oracle, p, x0, 3).run.trace.hash());
}

TEST_CASE("message count per iteration") {
  for (const auto& name : builtin_names()) {
    const auto inst = builtin_instance(name);
    const ExtendedOperator op(inst.problem, inst.graph);
    std::size_t lam = 0, act = 0;
    for (std::size_t i = 0; i < op.partition().num_agents(); ++i) {
      lam += inst.graph->neighbors(i).size();
      act += inst.problem->cost().interaction_neighbors(i).size();
    }
    CHECK(expected_messages_per_iteration(op, Variant::risfbf) == 2 * (lam + act));
    CHECK(expected_messages_per_iteration(op, Variant::sfb) == lam + act);
    for (auto v : {Variant::risfbf, Variant::sfb}) {
      const auto d = run_distributed(op, *inst.oracle, short_run(v, 20), PrimalDualState(op.partition_ptr()), 1);
      CHECK(d.messages == 20 * expected_messages_per_iteration(op, v));
      CHECK(d.messages_per_iteration == expected_messages_per_iteration(op, v));
    }
  }
}

TEST_CASE("single agent runs without messages") {
  const auto inst = builtin_instance("affine-single", 0.1);
  const ExtendedOperator op(inst.problem, inst.graph);
  const auto d = run_distributed(op, *inst.oracle, short_run(Variant::risfbf, 50), PrimalDualState(op.partition_ptr()), 2);
  CHECK(d.messages == 0);
  for (const auto& r : d.run.trace.records) CHECK(r.consensus_gap == 0.0);
}

TEST_CASE("audit mode names an illicit read") {
  const auto base = builtin_instance("affine-monotone-small");
  const auto affine = std::dynamic_pointer_cast<const AffineCost>(base.problem->cost_ptr());
  REQUIRE(affine);
  auto liar = std::make_shared<LyingCost>(affine);
  std::vector<AgentData> agents;
  for (std::size_t i = 0; i < base.problem->num_agents(); ++i) agents.push_back(base.problem->agent(i));
  auto problem = std::make_shared<GameProblem>(base.problem->partition_ptr(), liar, agents);
  const ExtendedOperator op(problem, base.graph);
  const AdditiveGaussianOracle orc(liar, 0.0);
  DistributedOptions audit;
  audit.audit = true;
  try {
    run_distributed(op, orc, short_run(Variant::risfbf, 5), PrimalDualState(op.partition_ptr()), 0, audit);
    FAIL("expected LocalityError");
  } catch (const LocalityError& e) {
    CHECK(std::string(e.what()).find("agent") != std::string::npos);
  }
  // Without the audit the poisoned blocks surface as a non-finite gradient.
  const auto r = run_distributed(op, orc, short_run(Variant::risfbf, 5), PrimalDualState(op.partition_ptr()), 0);
  CHECK(r.run.stop == StopReason::diverged);

  // An honest cost passes the audit.
  const ExtendedOperator honest(base.problem, base.graph);
  const auto ok = run_distributed(honest, *base.oracle, short_run(Variant::risfbf, 5),
                                  PrimalDualState(honest.partition_ptr()), 0, audit);
  CHECK(ok.audited_reads > 0);
}

TEST_CASE("message log") {
  const auto inst = builtin_instance("affine-star-6");
  const ExtendedOperator op(inst.problem, inst.graph);
  const auto dir = test::temp_dir("msglog");
  DistributedOptions opts;
  opts.message_log = dir / "messages.jsonl";
  const auto d = run_distributed(op, *inst.oracle, short_run(Variant::sfbf, 4), PrimalDualState(op.partition_ptr()), 0, opts);
  std::ifstream in(*opts.message_log);
  std::string line;
  std::size_t lines = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j.contains("sender"));
    CHECK(j.contains("receiver"));
    ++lines;
  }
  CHECK(lines == d.messages);
  std::filesystem::remove_all(dir);
}
