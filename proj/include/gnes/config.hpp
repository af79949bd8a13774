#pragma once

#include "gnes/cournot.hpp"
#include "gnes/instance.hpp"
#include "gnes/solver.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace gnes {

/// Where the game comes from. Exactly one source is active.
struct ProblemSource {
  enum class Kind { builtin, cournot, inline_instance, instance_path };
  Kind kind = Kind::builtin;
  std::string builtin = "affine-monotone-small";
  double noise_sd = 0.0;  ///< builtin games only
  CournotConfig cournot;
  nlohmann::json instance;  ///< inline instance document
  std::string path;         ///< instance document on disk
};

/// Either a list of variants or an inertia sweep (RISFBF at several alpha_bar).
struct CompareSpec {
  std::vector<Variant> variants;
  std::vector<double> alpha_sweep;
  double sweep_rho = 1.0;  ///< rho_k held fixed across the sweep
};

enum class Executor { monolithic, distributed };

struct RunConfig {
  ProblemSource problem;
  /// Solver settings; `reference` is never serialized (verify computes it).
  SolverParams solver;
  std::uint64_t seed = 0;
  std::size_t replications = 1;
  std::string out_dir = "out";
  Executor executor = Executor::monolithic;
  bool message_log = false;
  bool allow_nonmonotone = false;
  std::size_t monotonicity_trials = 1000;
  CompareSpec compare;

  nlohmann::json to_json() const;
  /// Rejects unknown keys and malformed values with ConfigError.
  static RunConfig from_json(const nlohmann::json& j);
};

RunConfig load_config(const std::filesystem::path& path);

/// Builds the instance named by the source; relative instance paths resolve
/// against `base_dir`.
Instance load_problem(const ProblemSource& src, const std::filesystem::path& base_dir = {});

/// Rejects non-monotone pseudogradients (affine: eigenvalues of the symmetric
/// part; otherwise a sampled probe) unless `allow` is set. Returns the smallest
/// monotonicity ratio observed.
double check_monotone(const Instance& inst, std::size_t trials, bool allow, std::uint64_t seed);

}  // namespace gnes
