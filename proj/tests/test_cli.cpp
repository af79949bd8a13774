#include "gnes/cli.hpp"
#include "gnes/errors.hpp"
#include "gnes/json_io.hpp"

#include "helpers.hpp"

#include <doctest.h>

#include <fstream>
#include <sstream>

using namespace gnes;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Invocation {
  int code;
  std::string out, err;
};

Invocation gnes_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "gnes");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli_main(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path write_config(const fs::path& dir, const json& j) {
  const auto p = dir / "config.json";
  std::ofstream(p) << j.dump(2);
  return p;
}

std::vector<std::string> lines_of(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

}  // namespace

TEST_CASE("config round-trip is the identity") {
  std::vector<json> docs;
  docs.push_back(RunConfig{}.to_json());
  docs.push_back(json::parse(R"({
    "problem": {"builtin": "affine-er-8", "noise_sd": 0.25},
    "solver": {"variant": "sfbf", "alpha_bar": 0.05, "nu": 0.2, "steps": "auto",
               "step_fraction": 0.3, "max_iters": 77, "tol": 1e-9, "res_tol": 1e-5,
               "rho_fixed": 0.9, "rho_scale": 1.0, "batch": {"s0": 2.0, "p": 1.5},
               "diagnostics": true, "trace_every": 3, "parallel": false},
    "seed": 18446744073709551615, "replications": 4, "out_dir": "somewhere",
    "executor": "distributed", "message_log": true, "allow_nonmonotone": true,
    "monotonicity_trials": 50,
    "compare": {"variants": ["sfb", "risfbf"], "alpha_sweep": [0, 0.1], "sweep_rho": 0.5}
  })"));
  docs.push_back(json::parse(R"({"problem": {"cournot": {"seed": 9, "sigma_d": 2.0}},
    "solver": {"steps": {"gamma": [0.1, 0.2], "sigma": [0.1, 0.1], "tau": [0.3, 0.3]}}})"));
  docs.push_back(json{{"problem", {{"instance", instance_to_json(builtin_instance("affine-star-6", 0.1))}}}});
  docs.push_back(json::parse(R"({"problem": {"instance_path": "games/x.json"}})"));
  for (const auto& d : docs) {
    const auto once = RunConfig::from_json(d).to_json();
    const auto twice = RunConfig::from_json(once).to_json();
    CHECK(once == twice);
    CHECK(RunConfig::from_json(json::parse(once.dump())).to_json() == once);
  }
  // Documents written in canonical form come back unchanged.
  CHECK(RunConfig::from_json(docs[1]).to_json() == docs[1]);
}

TEST_CASE("config rejects malformed documents") {
  CHECK_THROWS_AS(RunConfig::from_json(json::parse(R"({"solvr": {}})")), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json(json::parse(R"({"solver": {"max_iters": -3}})")), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json(json::parse(R"({"solver": {"variant": "adam"}})")), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json(json::parse(R"({"solver": {"batch": {"p": 1.0}}})")), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json(json::parse(R"({"problem": {"builtin": "nope"}})")), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json(json::parse(R"({"problem": {}})")), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json(json::parse(R"({"replications": 0})")), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json(json::parse(R"({"executor": "cloud"})")), ConfigError);
}

TEST_CASE("instance documents round-trip") {
  for (const auto& name : builtin_names()) {
    const auto doc = instance_to_json(builtin_instance(name, 0.3));
    CHECK(instance_to_json(instance_from_json(doc)) == doc);
  }
  const auto doc = instance_to_json(from_cournot(generate(CournotConfig{}), "c"));
  CHECK(instance_to_json(instance_from_json(doc)) == doc);
}

TEST_CASE("run on the builtin game") {
  const auto dir = test::temp_dir("run");
  const auto r = gnes_cli({"run", "--out", (dir / "o").string()});
  CHECK(r.code == 0);
  const auto summary = read_json_file(dir / "o" / "summary.json");
  CHECK(summary["replications"][0]["final_r_psi"].get<double>() < 1e-6);
  CHECK(summary["replications"][0]["trace_hash"].get<std::string>().size() == 16);
  CHECK(summary["config"] == RunConfig::from_json(summary["config"]).to_json());
  CHECK(lines_of(dir / "o" / "trace_rep0.csv").front() == "k,r_psi,res,consensus_gap,feas_gap,step_norm");
  fs::remove_all(dir);
}

TEST_CASE("aggregate over ten replications") {
  const auto dir = test::temp_dir("agg");
  const auto cfg = write_config(dir, json::parse(R"({"problem": {"builtin": "affine-monotone-small",
      "noise_sd": 0.1}, "solver": {"max_iters": 150, "tol": 0}})"));
  const auto r = gnes_cli({"run", "--config", cfg.string(), "--reps", "10", "--out", (dir / "o").string(), "--seed", "40"});
  CHECK(r.code == 0);
  const auto lines = lines_of(dir / "o" / "aggregate.csv");
  REQUIRE(lines.size() == 151);
  CHECK(lines[0] == "k,res_mean,res_min,res_max,r_psi_mean,r_psi_min,r_psi_max");
  for (const auto& l : lines) CHECK(std::count(l.begin(), l.end(), ',') == 6);
  for (int i = 0; i < 10; ++i) CHECK(fs::exists(dir / "o" / ("trace_rep" + std::to_string(i) + ".csv")));
  const auto s = read_json_file(dir / "o" / "summary.json");
  CHECK(s["replications"][9]["seed"] == 49);
  fs::remove_all(dir);
}

TEST_CASE("aggregate holds early stoppers at their last record") {
  SolverTrace a, b;
  for (std::uint64_t k = 0; k < 3; ++k) a.records.push_back({k, 1.0, 2.0 + k, 0, 0, 0, 0, 0, 1, {}});
  b.records.push_back({0, 3.0, 4.0, 0, 0, 0, 0, 0, 1, {}});
  const auto csv = aggregate_csv({a, b});
  std::istringstream in(csv);
  std::vector<std::string> lines;
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  REQUIRE(lines.size() == 4);
  CHECK(lines[3] == "2,4,4,4,2,1,3");
}

TEST_CASE("invalid inertia is rejected with exit 2") {
  const auto dir = test::temp_dir("bad");
  const auto cfg = write_config(dir, json::parse(R"({"solver": {"alpha_bar": 1.0}})"));
  const auto r = gnes_cli({"run", "--config", cfg.string(), "--out", (dir / "o").string()});
  CHECK(r.code == 2);
  const auto err = json::parse(r.err);
  CHECK(err["error"]["kind"] == "config");
  CHECK(err["error"]["message"].get<std::string>().find("Theorem 1") != std::string::npos);
  CHECK(err["error"]["message"].get<std::string>().find("alpha_bar < 1") != std::string::npos);
  CHECK_FALSE(fs::exists(dir / "o" / "summary.json"));

  CHECK(gnes_cli({"run", "--variant", "adam"}).code == 2);
  CHECK(gnes_cli({"run", "--config", (dir / "missing.json").string()}).code == 2);
  CHECK(gnes_cli({"frobnicate"}).code == 2);
  fs::remove_all(dir);
}

TEST_CASE("compare variants on the Cournot default") {
  const auto dir = test::temp_dir("cmp");
  const auto cfg = write_config(dir, json::parse(R"({"problem": {"cournot": {}},
      "solver": {"max_iters": 40, "tol": 0, "trace_every": 10}, "replications": 2,
      "compare": {"variants": ["risfbf", "sfbf", "sfb", "sfbf"]}})"));
  const auto r = gnes_cli({"compare", "--config", cfg.string(), "--out", (dir / "o").string()});
  CHECK(r.code == 0);
  const auto lines = lines_of(dir / "o" / "compare.csv");
  CHECK(lines[0] == "variant,replication,k,res,r_psi");
  CHECK(lines.size() == 1 + 4 * 2 * 5);  // k = 0, 10, 20, 30 and the final 39
  const auto s = read_json_file(dir / "o" / "compare_summary.json");
  REQUIRE(s["families"].size() == 4);
  CHECK(s["families"][3]["label"] == "sfbf#2");
  for (int rep = 0; rep < 2; ++rep)
    CHECK(s["families"][1]["replications"][rep]["trace_hash"] ==
          s["families"][3]["replications"][rep]["trace_hash"]);
  CHECK(s["families"][0]["replications"][0]["trace_hash"] != s["families"][1]["replications"][0]["trace_hash"]);
  fs::remove_all(dir);
}

TEST_CASE("compare an inertia sweep") {
  const auto dir = test::temp_dir("sweep");
  const auto cfg = write_config(dir, json::parse(R"({"solver": {"max_iters": 30, "tol": 0},
      "compare": {"alpha_sweep": [0, 0.05, 0.1, 0.2]}})"));
  CHECK(gnes_cli({"compare", "--config", cfg.string(), "--out", (dir / "o").string()}).code == 0);
  const auto s = read_json_file(dir / "o" / "compare_summary.json");
  REQUIRE(s["families"].size() == 4);
  for (const auto& f : s["families"]) CHECK(f["rho_fixed"] == 1.0);
  CHECK(s["families"][2]["alpha_bar"] == 0.1);

  const auto one = write_config(dir, json::parse(R"({"compare": {"variants": ["sfb"]}})"));
  CHECK(gnes_cli({"compare", "--config", one.string(), "--out", (dir / "p").string()}).code == 2);
  fs::remove_all(dir);
}

TEST_CASE("verify passes clean and noisy runs and catches the negative control") {
  const auto dir = test::temp_dir("verify");
  CHECK(gnes_cli({"verify", "--out", (dir / "a").string()}).code == 0);
  const auto noisy = write_config(dir, json::parse(R"({"problem": {"builtin": "affine-monotone-small",
      "noise_sd": 0.1}, "solver": {"max_iters": 1000, "tol": 0}})"));
  const auto ok = gnes_cli({"verify", "--config", noisy.string(), "--out", (dir / "b").string()});
  CHECK(ok.code == 0);
  CHECK(ok.out.find("FAIL") == std::string::npos);

  const auto neg = write_config(dir, json::parse(R"({"problem": {"builtin": "affine-monotone-small",
      "noise_sd": 0.1}, "solver": {"max_iters": 1000, "tol": 0, "rho_scale": 2.0}})"));
  const auto bad = gnes_cli({"verify", "--config", neg.string(), "--out", (dir / "c").string()});
  CHECK(bad.code == 1);
  const auto err = json::parse(bad.err);
  CHECK(err["error"]["kind"] == "verification");
  CHECK(err["error"]["message"].get<std::string>().find("h_nonnegative") != std::string::npos);
  CHECK(err["error"].contains("k"));
  CHECK(err["error"]["slack"].get<double>() > 1e-9);

  std::vector<VerifyCheck> checks;
  std::ostringstream sink;
  auto cfg = RunConfig::from_json(json::parse(R"({"solver": {"max_iters": 200, "tol": 0}})"));
  cfg.out_dir = (dir / "d").string();
  CHECK(cmd_verify(cfg, {}, sink, &checks) == 0);
  CHECK(checks.size() >= 8);

  cfg.problem.kind = ProblemSource::Kind::cournot;
  CHECK_THROWS_AS(cmd_verify(cfg, {}, sink), ConfigError);
  fs::remove_all(dir);
}

TEST_CASE("gen cournot feeds run, and non-monotone games are gated") {
  const auto dir = test::temp_dir("gen");
  const auto inst = dir / "games" / "c.json";
  CHECK(gnes_cli({"gen", "cournot", "--seed", "2", "--out", inst.string()}).code == 0);
  const auto doc = read_json_file(inst);
  CHECK(doc["format"] == "gnes-instance");
  const auto cfg = write_config(dir, json::parse(R"({"problem": {"instance_path": "games/c.json"},
      "solver": {"max_iters": 20, "tol": 0, "trace_every": 10}})"));
  CHECK(gnes_cli({"run", "--config", cfg.string(), "--out", (dir / "o").string()}).code == 0);

  const auto plus = dir / "plus.json";
  std::ofstream(plus) << R"({"demand_sign": 1, "seed": 3})";
  const auto rejected = gnes_cli({"gen", "cournot", "--config", plus.string(), "--out", (dir / "p.json").string()});
  CHECK(rejected.code == 2);
  CHECK(rejected.err.find("--allow-nonmonotone") != std::string::npos);
  CHECK(gnes_cli({"gen", "cournot", "--config", plus.string(), "--out", (dir / "p.json").string(),
                  "--allow-nonmonotone"}).code == 0);

  const auto runplus = write_config(dir, json::parse(R"({"problem": {"cournot": {"demand_sign": 1, "seed": 3}},
      "solver": {"max_iters": 5, "tol": 0}})"));
  CHECK(gnes_cli({"run", "--config", runplus.string(), "--out", (dir / "q").string()}).code == 2);
  CHECK(gnes_cli({"run", "--config", runplus.string(), "--out", (dir / "q").string(), "--allow-nonmonotone"}).code != 2);
  fs::remove_all(dir);
}

TEST_CASE("distributed executor through the CLI") {
  const auto dir = test::temp_dir("dist");
  const auto mono = write_config(dir, json::parse(R"({"problem": {"builtin": "affine-er-8", "noise_sd": 0.1},
      "solver": {"max_iters": 50, "tol": 0}})"));
  CHECK(gnes_cli({"run", "--config", mono.string(), "--out", (dir / "m").string()}).code == 0);
  const auto dist = write_config(dir, json::parse(R"({"problem": {"builtin": "affine-er-8", "noise_sd": 0.1},
      "solver": {"max_iters": 50, "tol": 0}, "executor": "distributed", "message_log": true})"));
  CHECK(gnes_cli({"run", "--config", dist.string(), "--out", (dir / "d").string()}).code == 0);
  const auto a = read_json_file(dir / "m" / "summary.json");
  const auto b = read_json_file(dir / "d" / "summary.json");
  CHECK(a["replications"][0]["trace_hash"] == b["replications"][0]["trace_hash"]);
  CHECK(fs::exists(dir / "d" / "messages_rep0.jsonl"));
  fs::remove_all(dir);
}
