// Acceptance harness: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Runtime limits are part of each criterion.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <unistd.h>

#include "kcrl/experiment.hpp"
#include "kcrl/plants.hpp"
#include "oracles.hpp"

using namespace kcrl;
using namespace kcrl::testing;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool passed = true;
  std::string detail;
  void require(bool ok, const std::string& what) {
    if (!detail.empty()) detail += "; ";
    detail += what + (ok ? "" : " [failed]");
    passed = passed && ok;
  }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() /
                       ("kcrl_acceptance_" + std::to_string(::getpid())) / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string read_body(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string s = ss.str();
  const auto nl = s.find('\n');
  return nl == std::string::npos ? std::string() : s.substr(nl + 1);
}

std::string read_all(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ExperimentConfig shipped(const char* name) {
  return parse_config(std::string(KCRL_CONFIG_DIR) + "/" + name);
}

Outcome kernel_approximation() {
  Outcome o;
  const auto pairs = kernel_pairs(100, 2, 3.0, 2024);
  const double err = kernel_error(FeatureMap::generate(2, 4096, 1.0, 0), pairs);
  o.require(err <= 0.05, "max error at D=4096 " + fmt("%.4f", err));
  double previous = INFINITY;
  bool monotone = true;
  std::string meds;
  for (int d : {64, 256, 1024, 4096}) {
    std::vector<double> errs;
    for (std::uint64_t seed = 0; seed < 10; ++seed)
      errs.push_back(kernel_error(FeatureMap::generate(2, d, 1.0, seed), pairs));
    const double med = median(errs);
    monotone = monotone && med < previous;
    previous = med;
    meds += (meds.empty() ? "" : " > ") + fmt("%.4f", med);
  }
  o.require(monotone, "median error by D " + meds);
  return o;
}

Outcome ridge_recovery() {
  Outcome o;
  const PlantedData p = planted_data(2, 1, 256, 2560, 10.0, 3);
  ModelEstimate m(p.map, 2, 1e-8);
  m.absorb_all(p.map, p.transitions);
  const double err = (m.weights() - p.w_star).norm();
  o.require(err <= 1e-4, "|W - W*|_F " + fmt("%.2e", err));

  std::vector<Transition> shuffled = p.transitions;
  std::mt19937_64 g(5);
  std::shuffle(shuffled.begin(), shuffled.end(), g);
  ModelEstimate m2(p.map, 2, 1e-8);
  for (const auto& tr : shuffled) m2.absorb(p.map, tr);
  const double order = (m.weights() - m2.weights()).norm();
  o.require(order <= 1e-9 * (1.0 + m.weights().norm()), "order change " + fmt("%.1e", order));

  double prev = INFINITY;
  bool shrinks = true;
  for (double lambda : {1e-3, 1e-1, 1e1, 1e3}) {
    ModelEstimate s(p.map, 2, lambda);
    s.absorb_all(p.map, std::span<const Transition>(p.transitions).subspan(0, 300));
    shrinks = shrinks && s.weights().norm() <= prev;
    prev = s.weights().norm();
  }
  o.require(shrinks, "weight norm shrinks with lambda");
  return o;
}

Outcome jacobian_scaling() {
  Outcome o;
  const PlantedData p = planted_data(2, 1, 64, 640, 3.0, 21);
  ModelEstimate m(p.map, 2, 1e-3);
  m.absorb_all(p.map, p.transitions);
  const LearnedDynamics f(m, p.map, 1);
  Rng rng(4);
  std::vector<Eigen::VectorXd> points;
  for (int i = 0; i < 10; ++i) points.push_back(ball_point(rng, 3, 2.0));
  const std::vector<double> steps{1e-1, 1e-2, 1e-3};
  const double slope = loglog_slope(steps, fd_errors(f, points, steps));
  o.require(std::abs(slope - 2.0) <= 0.3, "log-log slope " + fmt("%.3f", slope));
  double worst = 0.0;
  for (double delta : {1e-9, 1e-6, 1e-3, 2.0, 8.0}) {
    const double want = std::cbrt(delta / 2.0);
    worst = std::max(worst, std::abs(optimal_step(delta, 1.0) - want) / want);
  }
  o.require(worst <= 1e-12, "optimal step relative error " + fmt("%.1e", worst));
  return o;
}

Outcome certificate_exactness() {
  Outcome o;
  const Plant& p3 = find_plant("P3");
  const PlantDynamics truth(p3);
  const Eigen::MatrixXd a = truth.jacobian(Eigen::VectorXd::Zero(3)).leftCols(2);
  const Eigen::MatrixXd m = discrete_lyapunov_series(a, Eigen::MatrixXd::Identity(2, 2));
  const double residual = (a.transpose() * m * a - m + Eigen::MatrixXd::Identity(2, 2)).norm();
  o.require(residual <= 1e-12, "Lyapunov residual " + fmt("%.1e", residual));

  const Policy zero = Policy::affine(Eigen::MatrixXd::Zero(1, 2), Eigen::VectorXd::Zero(1), 1.0);
  const RepresentativeBatch batch = make_grid_batch(p3.box_lower(), p3.box_upper(), {11, 11});
  const StabilityCertificate exact = plain_certificate(m, 0.0);
  double worst = 0.0;
  for (const auto& x : batch.points)
    worst = std::max(worst, std::abs(max_eigenvalue(constraint_at(exact, x, zero, truth, 1e-3)).value + 1.0));
  o.require(worst <= 1e-8, "max |lambda_max + 1| " + fmt("%.1e", worst));

  // Certify a policy on the exact model, then check decrease on the plant.
  MarginInputs in;
  in.lipschitz_policy = p3.constants().lipschitz_policy;
  in.lipschitz_dynamics = p3.constants().lipschitz_dynamics;
  in.jacobian_error = 0.0;
  in.metric = m;
  in.g_grad_bound = p3.constants().g_grad_bound;
  in.fill_distance = batch.fill_distance;
  in.margin_assumed = p3.constants().stability_margin;
  const StabilityCertificate cert = compute_margins(in);
  CostSpec cost;
  cost.q = Eigen::MatrixXd::Identity(2, 2);
  cost.r = Eigen::MatrixXd::Identity(1, 1);
  cost.initial_lower = p3.box_lower();
  cost.initial_upper = p3.box_upper();
  const SolveResult sol = solve_constrained_policy(zero, {}, cert, batch, truth, cost, {}, {});
  o.require(sol.report.feasible, "policy certified in " + std::to_string(sol.report.iterations) + " iterations");
  Rng rng(9);
  int violations = 0, checked = 0;
  for (int r = 0; r < 20; ++r) {
    const Trajectory tr = rollout(p3, sol.policy, box_point(rng, p3.box_lower(), p3.box_upper()), 500);
    const StabilityMetrics sm = stability_metrics(tr, p3, sol.policy, m);
    violations += sm.lyapunov_violations;
    checked += sm.lyapunov_checked;
  }
  o.require(violations == 0, std::to_string(violations) + "/" + std::to_string(checked) +
                                 " Lyapunov violations over 20x500 steps");
  return o;
}

Outcome margin_formulas() {
  Outcome o;
  MarginInputs in;
  in.lipschitz_policy = 1.0;
  in.lipschitz_dynamics = 1.0;
  in.jacobian_error = 0.1;
  in.metric = Eigen::MatrixXd::Identity(2, 2);
  in.g_grad_bound = 1.0;
  in.fill_distance = 0.2;
  in.margin_assumed = 2.0;
  const StabilityCertificate c = compute_margins(in);
  o.require(std::abs(c.margin_model - 0.92) <= 1e-14, "eps_i " + fmt("%.15g", c.margin_model));
  o.require(std::abs(c.margin_batch - 0.88) <= 1e-14, "eps_pd " + fmt("%.15g", c.margin_batch));
  in.margin_assumed = 0.5;
  o.require(error_code_of([&] { compute_margins(in); }) == ErrorCode::kInfeasibleBatch,
            "eps_bar 0.5 raises infeasible-batch");
  return o;
}

Outcome primal_dual_feasibility() {
  Outcome o;
  const ScalarInstance s;
  double min_mu = INFINITY;
  try {
    const SolveResult res = solve_constrained_policy(
        s.policy(0.0), {}, s.cert, s.batch, s.model, s.cost, {}, {},
        [&](const IterationDiagnostics& d) { min_mu = std::min(min_mu, d.multiplier); });
    o.require(res.report.feasible && res.report.iterations <= 5000,
              "feasible after " + std::to_string(res.report.iterations) + " iterations");
    const double audit = batch_sup(s.cert, s.batch, res.policy, s.model, 1e-3).value + s.cert.margin_batch;
    o.require(audit <= 1e-9, "re-audited sup + eps_pd " + fmt("%.3e", audit));
    o.require(s.gain_feasible(res.policy.gain()(0, 0)),
              "gain " + fmt("%.4f", res.policy.gain()(0, 0)) + " in the grid-searched feasible set");
  } catch (const Error& e) {
    o.require(false, e.what());
  }
  o.require(min_mu >= 0.0, "min mu " + fmt("%.3g", min_mu));
  return o;
}

Outcome end_to_end() {
  Outcome o;
  for (const char* name : {"p1_sample_complexity.json", "p3_sample_complexity.json"}) {
    const ExperimentConfig cfg = shipped(name);
    const bool setup = cfg.features.count == 256 &&
                       cfg.epoch.tau == static_cast<std::int64_t>(cfg.features.count) * cfg.features.count &&
                       cfg.epoch.mode == EpochMode::kSampleComplexity;
    o.require(setup, cfg.plant + " D=256, tau=D^2, sample-complexity mode");
    RunOptions opt;
    opt.output_directory = scratch(cfg.plant).string();
    const ExperimentReport rep = run_experiment(cfg, opt);
    if (rep.epochs.empty()) {
      o.require(false, cfg.plant + " produced no epoch");
      continue;
    }
    const EpochRecord& e = rep.epochs.front();
    const auto& ev = e.evaluation;
    o.require(e.feasible, cfg.plant + " epoch-1 feasible (" + e.status + ")");
    if (cfg.plant == "P1") {
      o.require(ev.reached == 20 && ev.diverged == 0,
                "P1 " + std::to_string(ev.reached) + "/20 within 1e-2, max dist " + fmt("%.2e", ev.max_final_dist));
      const double rate = ev.lyapunov_checked ? double(ev.lyapunov_violations) / ev.lyapunov_checked : 0.0;
      o.require(rate <= 0.01, "P1 Lyapunov violations " + std::to_string(ev.lyapunov_violations) + "/" +
                                  std::to_string(ev.lyapunov_checked));
    } else {
      o.require(ev.max_final_dist <= 1e-3,
                "P3 max final dist " + fmt("%.2e", ev.max_final_dist));
    }
  }
  return o;
}

Outcome gradient_checks() {
  Outcome o;
  Rng rng(11);
  for (const Plant& plant : builtin_plants()) {
    const PlantDynamics f(plant);
    CostSpec cost;
    cost.q = Eigen::MatrixXd::Identity(plant.state_dim(), plant.state_dim());
    cost.r = Eigen::MatrixXd::Identity(plant.input_dim(), plant.input_dim());
    cost.initial_lower = plant.box_lower();
    cost.initial_upper = plant.box_upper();
    const StabilityCertificate cert = plain_certificate(plant.witness_metric(), 0.05);
    double worst_cost = 0.0, worst_eig = 0.0;
    for (const Policy& pol : {plant.witness_policy(),
                              Policy::mlp(plant.state_dim(), plant.input_dim(), 4,
                                          plant.constants().lipschitz_policy, 2)}) {
      worst_cost = std::max(worst_cost, cost_gradient_check(pol, f, cost, 8, 1));
      for (int t = 0; t < 5; ++t) {
        const Eigen::VectorXd x = box_point(rng, plant.box_lower(), plant.box_upper());
        worst_eig = std::max(worst_eig, eigen_gradient_check(cert, x, pol, f, 1e-4));
      }
    }
    o.require(worst_cost <= 1e-3 && worst_eig <= 1e-3,
              plant.name() + " cost " + fmt("%.1e", worst_cost) + " eigen " + fmt("%.1e", worst_eig));
  }
  return o;
}

Outcome determinism_and_persistence() {
  Outcome o;
  const ExperimentConfig cfg = parse_config_text(R"({
    "plant": "P1", "seed": 5,
    "features": {"count": 32},
    "epoch": {"mode": "manual", "tau": 1024, "max_epochs": 3, "dither_epochs": 3},
    "certificate": {"margin_mode": "budget_split"},
    "optimizer": {"max_iters": 200},
    "evaluation": {"rollouts": 5, "steps": 100}
  })");
  const fs::path a = scratch("det_a"), b = scratch("det_b"), c = scratch("det_c");
  RunOptions oa, ob, oc;
  oa.output_directory = a.string();
  ob.output_directory = b.string();
  oc.output_directory = c.string();
  run_experiment(cfg, oa);
  run_experiment(cfg, ob);
  const std::vector<std::string> files{"metrics.csv", "epochs.csv", "traj_epoch_0.csv",
                                       "traj_epoch_1.csv", "traj_epoch_2.csv"};
  bool same = true;
  for (const auto& f : files) same = same && read_body(a / f) == read_body(b / f);
  o.require(same, "reruns byte-identical below the header");

  const fs::path ck = a / "checkpoints/epoch_3.ckpt";
  save_checkpoint(load_checkpoint(ck.string()), (a / "copy.ckpt").string());
  o.require(read_all(ck) == read_all(a / "copy.ckpt"), "checkpoint round-trip bit-exact");
  o.require(verify_checkpoint(ck.string()).passed, "checkpoint verifies");

  oc.stop_after_epoch = 1;
  const ExperimentReport stopped = run_experiment(cfg, oc);
  oc.stop_after_epoch = -1;
  oc.resume_path = (c / "checkpoints/epoch_1.ckpt").string();
  const ExperimentReport resumed = run_experiment(cfg, oc);
  bool resumed_same = stopped.exit_code == 2 && resumed.completed;
  for (const auto& f : files) resumed_same = resumed_same && read_body(a / f) == read_body(c / f);
  o.require(resumed_same, "resume after epoch 1 matches the uninterrupted run");
  return o;
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double limit_seconds;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "kernel approximation", 60, kernel_approximation},
      {2, "ridge recovery", 60, ridge_recovery},
      {3, "Jacobian scaling", 60, jacobian_scaling},
      {4, "certificate exactness on P3", 120, certificate_exactness},
      {5, "margin formulas", 1, margin_formulas},
      {6, "primal-dual feasibility", 120, primal_dual_feasibility},
      {7, "end-to-end stabilization", 900, end_to_end},
      {8, "gradient checks", 120, gradient_checks},
      {9, "determinism and persistence", 300, determinism_and_persistence},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    o.require(secs < c.limit_seconds, fmt("%.2fs", secs) + " < " + fmt("%gs", c.limit_seconds));
    std::printf("criterion %d %s: %s (%s)\n", c.id, c.name, o.passed ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
    failures += !o.passed;
  }
  fs::remove_all(fs::temp_directory_path() / ("kcrl_acceptance_" + std::to_string(::getpid())));
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures ? 1 : 0;
}
