#include "gnes/instance.hpp"

#include "gnes/errors.hpp"
#include "gnes/json_io.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <random>

namespace gnes {

namespace {

const nlohmann::json& field(const nlohmann::json& j, const char* key, const char* what) {
  if (!j.is_object() || !j.contains(key))
    throw ConfigError(fmt::format("{}: missing field '{}'", what, key));
  return j.at(key);
}

std::shared_ptr<const Regularizer> regularizer_from_json(const nlohmann::json& j) {
  auto lo = vector_from_json(field(j, "lo", "regularizer"), "regularizer.lo");
  auto hi = vector_from_json(field(j, "hi", "regularizer"), "regularizer.hi");
  const auto n = lo.size();
  Eigen::VectorXd l1 = j.contains("l1") ? vector_from_json(j["l1"], "regularizer.l1")
                                        : Eigen::VectorXd::Zero(n);
  Eigen::VectorXd lin = j.contains("linear") ? vector_from_json(j["linear"], "regularizer.linear")
                                             : Eigen::VectorXd::Zero(n);
  return std::make_shared<const BoxRegularizer>(std::move(lo), std::move(hi), std::move(l1),
                                                std::move(lin));
}

CournotMarkets markets_from_json(const nlohmann::json& c, std::size_t num_markets) {
  CournotMarkets mk;
  mk.markets_of_firm =
      field(c, "markets_of_firm", "cournot cost").get<std::vector<std::vector<std::size_t>>>();
  for (const auto& v : field(c, "cost", "cournot cost"))
    mk.cost.push_back(vector_from_json(v, "cournot cost.cost"));
  mk.intercept = vector_from_json(field(c, "intercept", "cournot cost"), "intercept");
  mk.slope_mean = vector_from_json(field(c, "slope_mean", "cournot cost"), "slope_mean");
  mk.slope_sd = field(c, "slope_sd", "cournot cost").get<double>();
  mk.sigma_d = field(c, "sigma_d", "cournot cost").get<double>();
  mk.demand_sign = field(c, "demand_sign", "cournot cost").get<int>();
  mk.firms_of_market.assign(num_markets, {});
  for (std::size_t i = 0; i < mk.markets_of_firm.size(); ++i)
    for (auto j : mk.markets_of_firm[i]) {
      if (j >= num_markets)
        throw ConfigError(fmt::format("cournot cost: firm {} lists market {} of {}", i, j,
                                      num_markets));
      mk.firms_of_market[j].push_back(i);
    }
  return mk;
}

}  // namespace

nlohmann::json instance_to_json(const Instance& inst) {
  const auto& p = *inst.problem;
  nlohmann::json agents = nlohmann::json::array();
  for (std::size_t i = 0; i < p.num_agents(); ++i)
    agents.push_back({{"regularizer", p.regularizer(i).to_json()},
                      {"D", matrix_to_json(p.coupling(i))},
                      {"b", vector_to_json(p.offset(i))}});
  return {{"format", "gnes-instance"},
          {"version", 1},
          {"name", inst.name},
          {"dims", p.partition().dims()},
          {"constraint_dim", p.partition().constraint_dim()},
          {"cost", p.cost().to_json()},
          {"agents", agents},
          {"graph", {{"weights", matrix_to_json(inst.graph->weights())}}},
          {"noise", inst.oracle->to_json()}};
}

Instance instance_from_json(const nlohmann::json& doc) {
  try {
    if (field(doc, "format", "instance") != "gnes-instance")
      throw ConfigError("instance: format must be \"gnes-instance\"");
    Instance inst;
    inst.name = doc.value("name", std::string("instance"));
    const auto dims = field(doc, "dims", "instance").get<std::vector<std::size_t>>();
    const auto m = field(doc, "constraint_dim", "instance").get<std::size_t>();
    const auto& agents_doc = field(doc, "agents", "instance");
    if (!agents_doc.is_array() || agents_doc.size() != dims.size())
      throw ConfigError(fmt::format("instance: 'agents' must list {} agents", dims.size()));
    const auto weights = matrix_from_json(field(field(doc, "graph", "instance"), "weights",
                                                "instance.graph"),
                                          "graph.weights");
    const auto& cost = field(doc, "cost", "instance");
    const auto& noise = field(doc, "noise", "instance");
    const auto type = field(cost, "type", "instance.cost").get<std::string>();

    if (type == "cournot") {
      if (field(noise, "model", "instance.noise") != "cournot")
        throw ConfigError("instance: a cournot cost needs the cournot noise model");
      const auto mk = markets_from_json(cost, m);
      std::vector<Eigen::VectorXd> caps, offsets;
      for (const auto& a : agents_doc) {
        const auto reg = regularizer_from_json(field(a, "regularizer", "agent"));
        if ((reg->lower().array() != 0.0).any())
          throw ConfigError("instance: cournot strategies must have lower bound 0");
        caps.push_back(reg->upper());
        offsets.push_back(vector_from_json(field(a, "b", "agent"), "agent.b"));
      }
      auto c = assemble_cournot(mk, caps, offsets, weights,
                                field(cost, "lipschitz", "instance.cost").get<double>(),
                                noise.value("explicit_limit", std::uint64_t{64}));
      for (std::size_t i = 0; i < dims.size(); ++i) {
        const auto d = matrix_from_json(field(agents_doc[i], "D", "agent"), "agent.D");
        if (d != c.problem->coupling(i))
          throw ConfigError(fmt::format("instance: D of firm {} disagrees with its markets", i));
      }
      return from_cournot(c, inst.name);
    }
    if (type != "affine") throw ConfigError(fmt::format("instance: unknown cost type '{}'", type));

    auto part = make_partition(dims, m);
    auto affine = std::make_shared<const AffineCost>(
        part, matrix_from_json(field(cost, "M", "instance.cost"), "cost.M"),
        vector_from_json(field(cost, "q", "instance.cost"), "cost.q"));
    std::vector<AgentData> agents;
    for (const auto& a : agents_doc)
      agents.push_back({regularizer_from_json(field(a, "regularizer", "agent")),
                        matrix_from_json(field(a, "D", "agent"), "agent.D"),
                        vector_from_json(field(a, "b", "agent"), "agent.b")});
    inst.problem = std::make_shared<const GameProblem>(part, affine, std::move(agents));
    inst.graph = std::make_shared<const CommGraph>(build_graph(weights));
    if (field(noise, "model", "instance.noise") != "gaussian")
      throw ConfigError("instance: an affine cost needs the gaussian noise model");
    inst.oracle = std::make_shared<const AdditiveGaussianOracle>(
        affine, field(noise, "sd", "instance.noise").get<double>(), noise.value("aggregate", true));
    return inst;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("instance document: {}", e.what()));
  }
}

Instance from_cournot(const CournotInstance& c, std::string name) {
  return Instance{std::move(name), c.problem, c.graph, c.oracle};
}

namespace {

Instance affine_monotone_small(double noise_sd) {
  auto part = make_partition({2, 2, 2}, 2);
  Eigen::MatrixXd m(6, 6);
  m << 1.0, 0.2, 0.3, 0.0, -0.2, 0.1,
       0.2, 0.8, 0.0, 0.25, 0.1, 0.0,
      -0.3, 0.0, 1.2, 0.1, 0.2, -0.1,
       0.0, -0.25, 0.1, 0.9, 0.0, 0.3,
       0.2, -0.1, -0.2, 0.0, 1.1, 0.2,
      -0.1, 0.0, 0.1, -0.3, 0.2, 0.7;
  Eigen::VectorXd q(6);
  q << -2.0, -1.0, -1.5, -2.5, -1.0, -2.0;
  auto cost = std::make_shared<const AffineCost>(part, m, q);

  // Row 0 caps total output at 3 and binds; row 1 stays slack at the solution.
  const Eigen::MatrixXd d1 = (Eigen::MatrixXd(2, 2) << 1.0, 1.0, 1.0, 0.0).finished();
  const Eigen::MatrixXd d2 = (Eigen::MatrixXd(2, 2) << 1.0, 1.0, 0.0, 1.0).finished();
  const Eigen::Vector2d b(1.0, 10.0 / 3.0);
  std::vector<AgentData> agents;
  for (const auto* d : {&d1, &d2, &d1})
    agents.push_back({std::make_shared<const BoxRegularizer>(Eigen::VectorXd::Zero(2),
                                                             Eigen::VectorXd::Constant(2, 3.0)),
                      *d, b});
  Instance inst;
  inst.name = "affine-monotone-small";
  inst.problem = std::make_shared<const GameProblem>(part, cost, std::move(agents));
  inst.graph = std::make_shared<const CommGraph>(build_graph(complete_weights(3)));
  inst.oracle = std::make_shared<const AdditiveGaussianOracle>(cost, noise_sd);
  return inst;
}

struct BuiltinRecipe {
  const char* name;
  RandomAffineSpec spec;
  std::uint64_t seed;
};

const std::vector<BuiltinRecipe>& recipes() {
  static const std::vector<BuiltinRecipe> r = {
      {"affine-skew-ring-5", {5, 2, 2, "ring", 0.8, 0.0, 0.0}, 11},
      {"affine-star-6", {6, 1, 1, "star", 0.5, 0.2, 0.0}, 12},
      {"affine-complete-4", {4, 3, 2, "complete", 0.3, 0.1, 0.0}, 13},
      {"affine-er-8", {8, 2, 3, "erdos-renyi(0.4, 7)", 0.5, 0.1, 0.0}, 14},
      {"affine-single", {1, 3, 1, "complete", 0.5, 0.2, 0.0}, 15},
  };
  return r;
}

}  // namespace

const std::vector<std::string>& builtin_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v{"affine-monotone-small"};
    for (const auto& r : recipes()) v.emplace_back(r.name);
    return v;
  }();
  return names;
}

Instance builtin_instance(const std::string& name, double noise_sd) {
  if (name == "affine-monotone-small") return affine_monotone_small(noise_sd);
  for (const auto& r : recipes()) {
    if (name != r.name) continue;
    auto spec = r.spec;
    spec.noise_sd = noise_sd;
    auto inst = random_affine_instance(spec, r.seed);
    inst.name = name;
    return inst;
  }
  std::string known;
  for (const auto& n : builtin_names()) known += (known.empty() ? "" : ", ") + n;
  throw ConfigError(fmt::format("unknown builtin '{}' (known: {})", name, known));
}

Instance random_affine_instance(const RandomAffineSpec& spec, std::uint64_t seed) {
  if (spec.agents == 0 || spec.dim == 0 || spec.constraints == 0)
    throw ConfigError("random affine game needs positive agents, dim and constraints");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unit;
  const auto n = spec.agents;
  const auto di = static_cast<Eigen::Index>(spec.dim);
  const auto d = static_cast<Eigen::Index>(n) * di;
  const auto m = static_cast<Eigen::Index>(spec.constraints);

  // Block-sparse M: rank-one PSD terms and skew blocks on interacting pairs,
  // PSD blocks on the diagonal, plus a diagonal shift.
  Eigen::MatrixXd mat = spec.shift * Eigen::MatrixXd::Identity(d, d);
  for (std::size_t i = 0; i < n; ++i) {
    const auto oi = static_cast<Eigen::Index>(i) * di;
    Eigen::MatrixXd g(di, di);
    for (auto& v : g.reshaped()) v = normal(rng);
    mat.block(oi, oi, di, di) += g.transpose() * g / static_cast<double>(di);
    for (std::size_t j = i + 1; j < n; ++j) {
      if (unit(rng) > 0.5 && j != i + 1) continue;
      const auto oj = static_cast<Eigen::Index>(j) * di;
      Eigen::VectorXd r(2 * di);
      for (auto& v : r) v = 0.5 * normal(rng);
      Eigen::MatrixXd rr = r * r.transpose();
      mat.block(oi, oi, di, di) += rr.topLeftCorner(di, di);
      mat.block(oj, oj, di, di) += rr.bottomRightCorner(di, di);
      mat.block(oi, oj, di, di) += rr.topRightCorner(di, di);
      mat.block(oj, oi, di, di) += rr.bottomLeftCorner(di, di);
      Eigen::MatrixXd s(di, di);
      for (auto& v : s.reshaped()) v = spec.skew * normal(rng);
      mat.block(oi, oj, di, di) += s;
      mat.block(oj, oi, di, di) -= s.transpose();
    }
  }
  Eigen::VectorXd q(d);
  for (auto& v : q) v = 2.0 * normal(rng);

  auto part = make_partition(std::vector<std::size_t>(n, spec.dim), spec.constraints);
  auto cost = std::make_shared<const AffineCost>(part, mat, q);
  std::vector<AgentData> agents;
  for (std::size_t i = 0; i < n; ++i) {
    AgentData a;
    a.regularizer = std::make_shared<const BoxRegularizer>(Eigen::VectorXd::Constant(di, -2.0),
                                                           Eigen::VectorXd::Constant(di, 2.0));
    a.coupling.resize(m, di);
    for (auto& v : a.coupling.reshaped()) v = 2.0 * unit(rng) - 1.0;
    a.offset.resize(m);
    for (auto& v : a.offset) v = 0.2 + 0.8 * unit(rng);
    agents.push_back(std::move(a));
  }
  Instance inst;
  inst.name = fmt::format("random-affine-{}", seed);
  inst.problem = std::make_shared<const GameProblem>(part, cost, std::move(agents));
  inst.graph = std::make_shared<const CommGraph>(build_graph(generator_weights(spec.graph, n)));
  inst.oracle = std::make_shared<const AdditiveGaussianOracle>(cost, spec.noise_sd);
  return inst;
}

}  // namespace gnes
