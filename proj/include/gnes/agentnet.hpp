#pragma once

#include "gnes/solver.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

namespace gnes {

/// Exchange rounds of one iteration: inertial variables (Z_k), then mid
/// variables (Y_k). SFB only has the first.
enum class ExchangePhase : std::uint8_t { inertial = 0, mid = 1 };

enum class PayloadKind : std::uint8_t { strategy = 0, dual = 1 };

/// One point-to-point message. Strategy payloads carry u_i; dual payloads
/// carry (mu_i, lambda_i).
struct Message {
  std::uint64_t k = 0;
  ExchangePhase phase = ExchangePhase::inertial;
  PayloadKind kind = PayloadKind::strategy;
  std::size_t sender = 0;
  std::size_t receiver = 0;
  std::vector<double> u;
  std::vector<double> mu;
  std::vector<double> lambda;

  nlohmann::json summary() const;  ///< k, phase, sender, receiver, payload sizes
};

struct DistributedOptions {
  /// Record every cross-agent read and check it against a delivered message.
  bool audit = false;
  /// JSON-lines dump of every message (payload sizes only).
  std::optional<std::filesystem::path> message_log;
};

struct DistributedResult {
  RunResult run;
  std::uint64_t messages = 0;
  std::uint64_t messages_per_iteration = 0;
  std::uint64_t audited_reads = 0;
};

/// Expected messages per iteration: one exchange per round, each sending u_i
/// to every j with i in N_j^A and (mu_i, lambda_i) to every graph neighbour.
std::uint64_t expected_messages_per_iteration(const ExtendedOperator& op, Variant variant);

/// Message-passing executor. Every agent owns its blocks and a private view
/// of the state in which blocks it has not received are NaN; the trajectory
/// is bitwise identical to run() for the same (params, seed).
DistributedResult run_distributed(const ExtendedOperator& op, const SamplingOracle& orc,
                                  const SolverParams& params, const PrimalDualState& x0,
                                  std::uint64_t seed, const DistributedOptions& options = {});

}  // namespace gnes
