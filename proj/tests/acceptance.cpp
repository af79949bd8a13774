// Acceptance checks. `gnes_acceptance N` runs criterion N; with no argument all run.
#include "gnes/agentnet.hpp"
#include "gnes/cournot.hpp"
#include "gnes/graph.hpp"
#include "gnes/instance.hpp"
#include "gnes/operators.hpp"
#include "gnes/solver.hpp"
#include "gnes/stochastic.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <random>

using namespace gnes;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

PrimalDualState random_state(const PartitionPtr& part, std::mt19937_64& rng, double scale) {
  std::normal_distribution<double> n(0.0, scale);
  Eigen::VectorXd v(static_cast<Eigen::Index>(part->state_dim()));
  for (auto& e : v) e = n(rng);
  return PrimalDualState(part, v);
}

SolverParams fixed_run(Variant v, std::size_t iters, double tol = 0.0) {
  SolverParams p;
  p.variant = v;
  p.max_iters = iters;
  p.tol = tol;
  return p;
}

Outcome solution_characterization() {
  const auto t0 = Clock::now();
  const auto inst = builtin_instance("affine-monotone-small");
  const ExtendedOperator op(inst.problem, inst.graph);
  const auto ref = reference_solution(op, 1e-12);
  const auto kkt = kkt_check(*inst.problem, ref.point.primal(), mean_multiplier(ref.point), 1e-8);
  const double res = residual_res(*inst.problem, ref.point.primal());
  const double secs = seconds_since(t0);
  return {ref.r_psi < 1e-12 && kkt.passed() && res < 1e-8 && secs < 5.0,
          fmt::format("r_psi {:.2e} after {} iterations, kkt {}, res {:.2e}, {:.2f} s", ref.r_psi,
                      ref.iterations, kkt.passed() ? "ok" : "failed", res, secs)};
}

Outcome stochastic_convergence() {
  const auto t0 = Clock::now();
  const auto inst = builtin_instance("affine-monotone-small", 0.1);
  const ExtendedOperator op(inst.problem, inst.graph);
  auto p = fixed_run(Variant::risfbf, 20000);
  p.res_tol = 1e-4;
  std::size_t reached = 0, worst_iters = 0;
  double worst_res = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto r = run(op, *inst.oracle, p, PrimalDualState(op.partition_ptr()), seed);
    if (r.stop == StopReason::res_tolerance && r.final_res < 1e-4) ++reached;
    worst_iters = std::max(worst_iters, r.iterations);
    worst_res = std::max(worst_res, r.final_res);
  }
  const double secs = seconds_since(t0);
  return {reached == 10 && secs < 60.0,
          fmt::format("{}/10 seeds reached res < 1e-4, slowest after {} iterations, worst final "
                      "res {:.2e}, {:.2f} s",
                      reached, worst_iters, worst_res, secs)};
}

Outcome executor_equivalence() {
  struct Case {
    Instance inst;
    Variant v;
    std::uint64_t seed;
    std::size_t iters;
  };
  std::vector<Case> cases;
  cases.push_back({from_cournot(generate(CournotConfig{}), "cournot"), Variant::risfbf, 0, 200});
  const std::vector<Variant> vs = {Variant::risfbf, Variant::sfbf, Variant::sfb};
  std::mt19937_64 rng(2024);
  for (std::size_t c = 0; c < 9; ++c) {
    const auto& name = builtin_names()[rng() % builtin_names().size()];
    cases.push_back({builtin_instance(name, 0.05 * static_cast<double>(c % 4)), vs[c % 3], rng(),
                     100 + 50 * (c % 3)});
  }
  std::size_t equal = 0;
  std::string bad;
  for (const auto& c : cases) {
    const ExtendedOperator op(c.inst.problem, c.inst.graph);
    const PrimalDualState x0(op.partition_ptr());
    const auto p = fixed_run(c.v, c.iters);
    const auto mono = run(op, *c.inst.oracle, p, x0, c.seed);
    const auto dist = run_distributed(op, *c.inst.oracle, p, x0, c.seed);
    const auto a = mono.final_state.data(), b = dist.run.final_state.data();
    if (mono.trace.hash() == dist.run.trace.hash() && a.size() == b.size() &&
        std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0)
      ++equal;
    else
      bad += fmt::format(" {}/{}", c.inst.name, to_string(c.v));
  }
  return {equal == cases.size(),
          fmt::format("{}/{} pairs bitwise identical{}", equal, cases.size(), bad)};
}

Outcome inequality_suite() {
  const auto inst = builtin_instance("affine-monotone-small", 0.1);
  const ExtendedOperator op(inst.problem, inst.graph);
  const auto ref = reference_solution(op, 1e-12);
  const auto clean = builtin_instance("affine-monotone-small", 0.0);
  const auto report = [&](const SamplingOracle& orc, double rho_scale) {
    auto p = fixed_run(Variant::risfbf, 1000);
    p.diagnostics = true;
    p.reference = ref.point;
    p.rho_scale = rho_scale;
    const auto r = run(op, orc, p, PrimalDualState(op.partition_ptr()), 17);
    return diagnostics_check(r.trace, 1e-9);
  };
  const auto quiet = report(*clean.oracle, 1.0);
  const auto noisy = report(*inst.oracle, 1.0);
  const auto level = spdlog::get_level();
  spdlog::set_level(spdlog::level::err);  // the control's coupling warning is expected
  const auto control = report(*inst.oracle, 2.0);
  spdlog::set_level(level);
  const auto summary = [](const DiagnosticsReport& d) {
    return fmt::format("{} checked, FR {}, YZG {}, H {}, coupling {}", d.checked,
                       d.recursion_violations, d.residual_bound_violations, d.h_violations,
                       d.coupling_violations);
  };
  return {quiet.passed() && noisy.passed() && quiet.checked == 1000 && noisy.checked == 1000 &&
              !control.passed(),
          fmt::format("noise-free [{}]; noisy [{}]; doubled rho [{}]", summary(quiet),
                      summary(noisy), summary(control))};
}

Outcome identity_suite() {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const auto inst = builtin_instance("affine-er-8");
  const ExtendedOperator op(inst.problem, inst.graph);
  const auto part = op.partition_ptr();
  const auto psi = make_preconditioner(op, SolverParams{});
  double ab = 0.0, firm = 0.0, lip = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const auto x = random_state(part, rng, 3.0);
    const auto y = random_state(part, rng, 3.0);
    const double a = unif(rng);
    const auto mix = relaxed_combine(x, y, 1.0 - a);
    const double lhs = psi_norm_sq(mix, psi);
    const double rhs = a * psi_norm_sq(x, psi) + (1 - a) * psi_norm_sq(y, psi) -
                       a * (1 - a) * psi_dist_sq(x, y, psi);
    ab = std::max(ab, std::abs(lhs - rhs) / std::max(1.0, std::abs(lhs)));

    const PrimalDualState dx(part, x.data() - y.data());
    const PrimalDualState dj(part, resolvent_T(op, x, psi).data() - resolvent_T(op, y, psi).data());
    firm = std::max(firm, psi_norm_sq(dj, psi) - psi_inner(dj, dx, psi));
    lip = std::max(lip, (apply_V(op, x).data() - apply_V(op, y).data()).norm() -
                            op.lipschitz() * dx.data().norm());
  }
  return {ab <= 1e-12 && firm <= 1e-10 && lip <= 0.0,
          fmt::format("convex identity {:.1e}, firm nonexpansiveness {:.1e}, Lipschitz excess {:.1e}",
                      ab, firm, lip)};
}

Outcome estimator_statistics() {
  const double s = 0.1;
  const auto inst = builtin_instance("affine-monotone-small", s);
  const auto& orc = *inst.oracle;
  std::mt19937_64 rng(6);
  std::normal_distribution<double> n;
  BlockVector u(inst.problem->partition_ptr(), BlockKind::primal);
  for (auto& e : u.data()) e = n(rng);
  const auto f = apply_F(*inst.problem, u).data();
  const auto moments = [&](std::uint64_t batch, std::uint64_t draws, Eigen::VectorXd& mean,
                           Eigen::VectorXd& var) {
    mean = Eigen::VectorXd::Zero(f.size());
    Eigen::VectorXd sq = mean;
    for (std::uint64_t t = 0; t < draws; ++t) {
      const Eigen::VectorXd e = sample_F_hat(orc, u, batch, 77, t, Phase::xi).data() - f;
      mean += e;
      sq += e.cwiseProduct(e);
    }
    mean /= static_cast<double>(draws);
    var = sq / static_cast<double>(draws) - mean.cwiseProduct(mean);
  };
  Eigen::VectorXd mean, var;
  moments(1, 100000, mean, var);
  const Eigen::VectorXd se = (var / 100000.0).cwiseSqrt();
  const double worst_z = (mean.cwiseAbs().array() / se.array()).maxCoeff();
  bool ok = worst_z <= 4.0;
  std::string detail = fmt::format("max |mean| / se = {:.2f}", worst_z);
  for (std::uint64_t S : {1, 4, 16}) {
    moments(S, 10000, mean, var);
    const double ratio = var.maxCoeff() / (s * s / static_cast<double>(S));
    ok = ok && ratio <= 1.2;
    detail += fmt::format(", S={} max var / (s^2/S) = {:.3f}", S, ratio);
  }
  return {ok, detail};
}

Outcome spectral_bounds() {
  std::vector<std::pair<std::string, Eigen::MatrixXd>> graphs;
  for (std::size_t n = 2; n <= 12; ++n) {
    graphs.emplace_back(fmt::format("ring{}", n), ring_weights(n));
    graphs.emplace_back(fmt::format("star{}", n), star_weights(n));
    graphs.emplace_back(fmt::format("complete{}", n), complete_weights(n));
  }
  for (std::uint64_t s = 0; s < 20; ++s)
    graphs.emplace_back(fmt::format("er{}", s), erdos_renyi_weights(3 + s % 10, 0.35, 100 + s));
  std::size_t held = 0;
  std::string bad;
  for (const auto& [name, W] : graphs) {
    const auto g = build_graph(W);
    const double k = g.laplacian_norm(), d = g.max_degree();
    if (d <= k * (1 + 1e-9) && k <= 2 * d * (1 + 1e-9))
      ++held;
    else
      bad += " " + name;
  }
  return {held == graphs.size(), fmt::format("{}/{} graphs satisfy the bounds{}", held, graphs.size(), bad)};
}

Outcome cournot_ordering() {
  const auto t0 = Clock::now();
  std::size_t ordered = 0;
  std::string rows;
  for (std::uint64_t inst_seed = 1; inst_seed <= 10; ++inst_seed) {
    CournotConfig cc;
    cc.seed = inst_seed;
    const auto c = generate(cc);
    const ExtendedOperator op(c.problem, c.graph);
    const PrimalDualState x0(op.partition_ptr());
    std::array<double, 3> mean{};
    const std::array<Variant, 3> vs = {Variant::risfbf, Variant::sfbf, Variant::sfb};
    for (std::size_t v = 0; v < 3; ++v) {
      auto p = fixed_run(vs[v], 5000);
      p.trace_every = 5000;
      for (std::uint64_t rep = 0; rep < 10; ++rep)
        mean[v] += run(op, *c.oracle, p, x0, rep).final_res / 10.0;
    }
    const bool ok = mean[0] <= mean[1] && mean[1] <= mean[2];
    ordered += ok;
    rows += fmt::format("\n    seed {:2}: risfbf {:.4e}  sfbf {:.4e}  sfb {:.4e}  {}", inst_seed,
                        mean[0], mean[1], mean[2], ok ? "ordered" : "not ordered");
  }
  const double secs = seconds_since(t0);
  return {ordered >= 8 && secs < 600.0,
          fmt::format("{}/10 instance seeds ordered, {:.1f} s{}", ordered, secs, rows)};
}

Outcome degeneracy() {
  std::size_t equal = 0, total = 0;
  std::string bad;
  for (const auto& name : builtin_names()) {
    const auto inst = builtin_instance(name, 0.1);
    const ExtendedOperator op(inst.problem, inst.graph);
    const PrimalDualState x0(op.partition_ptr());
    for (std::uint64_t seed : {3, 11}) {
      auto r = fixed_run(Variant::risfbf, 300);
      r.alpha_bar = 0.0;
      r.rho_fixed = 1.0;
      auto s = fixed_run(Variant::sfbf, 300);
      s.rho_fixed = 1.0;
      ++total;
      if (run(op, *inst.oracle, r, x0, seed).trace.hash() == run(op, *inst.oracle, s, x0, seed).trace.hash())
        ++equal;
      else
        bad += fmt::format(" {}/{}", name, seed);
    }
  }
  return {equal == total, fmt::format("{}/{} runs hash-identical{}", equal, total, bad)};
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_level(spdlog::level::warn);
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"solution characterization", solution_characterization},
      {"stochastic convergence", stochastic_convergence},
      {"executor equivalence", executor_equivalence},
      {"inequality suite", inequality_suite},
      {"identity suite", identity_suite},
      {"estimator statistics", estimator_statistics},
      {"spectral bounds", spectral_bounds},
      {"Cournot variant ordering", cournot_ordering},
      {"inertia-free degeneracy", degeneracy},
  };
  std::vector<std::size_t> which;
  if (argc > 1) {
    const auto n = std::strtoul(argv[1], nullptr, 10);
    if (n < 1 || n > criteria.size()) {
      fmt::print(stderr, "usage: gnes_acceptance [1-{}]\n", criteria.size());
      return 2;
    }
    which.push_back(n - 1);
  } else {
    for (std::size_t i = 0; i < criteria.size(); ++i) which.push_back(i);
  }
  bool all = true;
  for (auto i : which) {
    Outcome o{false, ""};
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, fmt::format("threw: {}", e.what())};
    }
    all = all && o.pass;
    fmt::print("criterion {} ({}): {} - {}\n", i + 1, criteria[i].first, o.pass ? "PASS" : "FAIL",
               o.detail);
  }
  return all ? 0 : 1;
}
