#pragma once

#include "gnes/cournot.hpp"
#include "gnes/graph.hpp"
#include "gnes/problem.hpp"
#include "gnes/stochastic.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace gnes {

/// A complete, runnable game: data, communication graph and sampling oracle.
struct Instance {
  std::string name;
  std::shared_ptr<const GameProblem> problem;
  std::shared_ptr<const CommGraph> graph;
  std::shared_ptr<const SamplingOracle> oracle;
};

/// Instance document: {"format": "gnes-instance", "name", "dims", "constraint_dim",
/// "cost", "agents": [{"regularizer", "D", "b"}], "graph": {"weights"}, "noise"}.
nlohmann::json instance_to_json(const Instance& inst);
Instance instance_from_json(const nlohmann::json& doc);

Instance from_cournot(const CournotInstance& c, std::string name);

/// Names accepted by builtin_instance.
const std::vector<std::string>& builtin_names();

/// Desk-scale affine games with additive Gaussian noise of the given sd.
Instance builtin_instance(const std::string& name, double noise_sd = 0.0);

struct RandomAffineSpec {
  std::size_t agents = 4;
  std::size_t dim = 2;          ///< d_i for every agent
  std::size_t constraints = 2;  ///< m
  std::string graph = "ring";
  double skew = 0.5;            ///< scale of the skew-symmetric part of M
  double shift = 0.2;           ///< added to the diagonal (strong monotonicity modulus)
  double noise_sd = 0.0;
};

/// Monotone affine game with random data, boxes [-2, 2] and random coupling rows.
Instance random_affine_instance(const RandomAffineSpec& spec, std::uint64_t seed);

}  // namespace gnes
