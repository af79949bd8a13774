#pragma once

#include "gnes/config.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace gnes {

/// Exit codes of the gnes binary.
enum ExitCode : int {
  exit_ok = 0,
  exit_failure = 1,     ///< a run diverged or a verification check failed
  exit_invalid = 2,     ///< configuration or input rejected before running
};

/// One result table row of `gnes verify`.
struct VerifyCheck {
  std::string name;
  bool passed = false;
  std::string detail;
  std::optional<std::uint64_t> first_bad_k;
  double slack = 0.0;
};

/// Each command validates the config, writes its outputs under cfg.out_dir and
/// reports on `out`. Errors propagate as gnes::Error.
int cmd_run(const RunConfig& cfg, const std::filesystem::path& base_dir, std::ostream& out);
int cmd_compare(const RunConfig& cfg, const std::filesystem::path& base_dir, std::ostream& out);
int cmd_verify(const RunConfig& cfg, const std::filesystem::path& base_dir, std::ostream& out,
               std::vector<VerifyCheck>* checks = nullptr);
/// Writes the instance document of a generated Cournot game to `path`.
int cmd_gen_cournot(const CournotConfig& cfg, bool allow_nonmonotone,
                    const std::filesystem::path& path, std::ostream& out);

/// Aggregate CSV over replications: k, then mean/min/max of res and r_psi.
/// Replications that stopped early hold their last record.
std::string aggregate_csv(const std::vector<SolverTrace>& traces);

/// Machine-readable error document: {"error": {"kind", "message", ...}}.
std::string error_document(const std::string& kind, const std::string& message);

/// Full command-line entry point (argv[0] is the program name). Validation
/// failures print an error document on `err` and return exit_invalid.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace gnes
