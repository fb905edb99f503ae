#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "kcrl/errors.hpp"
#include "kcrl/experiment.hpp"
#include "kcrl/jacobian.hpp"
#include "kcrl/rng.hpp"

namespace kcrl {

namespace fs = std::filesystem;

namespace {

constexpr std::int64_t kHoldoutTimeOffset = 1'000'000'000;

const char* kMetricsColumns =
    "epoch,iteration,cost,sup_value,constraint_value,multiplier,argmax,"
    "cost_grad_norm,step_norm,degenerate_count,projected";

const char* kEpochColumns =
    "epoch,transitions,status,model_error,hessian_bound,fd_step,jacobian_error,"
    "true_jacobian_error,margin_model,margin_batch,margin_assumed,fill_distance,"
    "metric_norm,excitation,iterations,multiplier,constraint_value,feasible,cost,"
    "policy_id,eval_max_final_dist,eval_mean_final_dist,eval_max_decay_rate,"
    "eval_lyapunov_violations,eval_lyapunov_checked,eval_diverged,eval_reached";

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string header_line(const std::string& file) {
  return "# kcrl " + std::string(kCodeVersion) + " " + file + " generated " + timestamp() + "\n";
}

std::ofstream open_csv(const fs::path& path, const char* columns, bool append) {
  std::ofstream out(path, append ? std::ios::app | std::ios::binary
                                 : std::ios::trunc | std::ios::binary);
  if (!out) fail(ErrorCode::kIo, "cannot open '" + path.string() + "' for writing");
  if (!append) out << header_line(path.filename().string()) << columns << "\n";
  return out;
}

Eigen::VectorXd uniform_in_box(Rng& rng, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  Eigen::VectorXd x(lo.size());
  for (Eigen::Index k = 0; k < lo.size(); ++k) x(k) = rng.uniform(lo(k), hi(k));
  return x;
}

Policy initial_policy(const ExperimentConfig& cfg, const Plant& plant) {
  const auto& pc = cfg.policy;
  Policy p = pc.architecture == PolicyArchitecture::kAffine
                 ? Policy::affine(pc.initial_gain, pc.initial_bias, pc.lipschitz_cap)
                 : Policy::mlp(plant.state_dim(), plant.input_dim(), pc.hidden,
                               pc.lipschitz_cap,
                               Rng::stream(cfg.seed, streams::kPolicyInit).next_u64(),
                               pc.init_scale);
  p.project();
  return p;
}

CostSpec cost_spec(const ExperimentConfig& cfg) {
  CostSpec c;
  c.q = cfg.cost.q;
  c.r = cfg.cost.r;
  c.discount = cfg.cost.discount;
  c.horizon = cfg.cost.horizon;
  c.initial_lower = cfg.cost.initial_lower;
  c.initial_upper = cfg.cost.initial_upper;
  return c;
}

/// Probe points phi = [x; u] for the Jacobian error and curvature estimates:
/// x uniform in the batch box, u uniform in the range any capped policy
/// without offset can produce there.
std::vector<Eigen::VectorXd> probe_points(const ExperimentConfig& cfg, int p, int epoch) {
  Rng rng = Rng::stream(cfg.seed, streams::kProbes, static_cast<std::uint64_t>(epoch));
  const Eigen::VectorXd& lo = cfg.batch.lower;
  const Eigen::VectorXd& hi = cfg.batch.upper;
  const double reach = cfg.policy.lipschitz_cap *
                       lo.cwiseAbs().cwiseMax(hi.cwiseAbs()).norm();
  std::vector<Eigen::VectorXd> probes;
  probes.reserve(static_cast<std::size_t>(cfg.certificate.probes));
  for (int i = 0; i < cfg.certificate.probes; ++i) {
    Eigen::VectorXd phi(lo.size() + p);
    phi.head(lo.size()) = uniform_in_box(rng, lo, hi);
    for (int k = 0; k < p; ++k) phi(lo.size() + k) = rng.uniform(-reach, reach);
    probes.push_back(std::move(phi));
  }
  return probes;
}

Eigen::MatrixXd choose_metric(const ExperimentConfig& cfg, const Plant& plant,
                              const DynamicsModel& learned, const Policy& policy) {
  const int n = plant.state_dim();
  switch (cfg.certificate.metric) {
    case MetricMode::kIdentity:
      return Eigen::MatrixXd::Identity(n, n);
    case MetricMode::kWitness:
      return plant.witness_metric();
    case MetricMode::kLyapunov: {
      const Eigen::VectorXd& xe = plant.equilibrium().point;
      Eigen::VectorXd phi(n + plant.input_dim());
      phi << xe, policy.evaluate(xe);
      const Eigen::MatrixXd j = learned.jacobian(phi);
      const Eigen::MatrixXd a =
          j.leftCols(n) + j.rightCols(plant.input_dim()) * policy.state_jacobian(xe);
      try {
        return discrete_lyapunov_series(a, Eigen::MatrixXd::Identity(n, n));
      } catch (const Error&) {
        return Eigen::MatrixXd::Identity(n, n);
      }
    }
  }
  return Eigen::MatrixXd::Identity(n, n);
}

void write_trajectory_rows(std::ostream& out, const char* kind, int index,
                           const Trajectory& traj, const Plant& plant,
                           const Policy& policy) {
  auto row = [&](std::int64_t t, const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
    out << kind << ',' << index << ',' << t;
    for (Eigen::Index k = 0; k < x.size(); ++k) out << ',' << num(x(k));
    for (Eigen::Index k = 0; k < u.size(); ++k) out << ',' << num(u(k));
    out << ',' << num(plant.distance_to_equilibrium(x, policy)) << '\n';
  };
  for (const Transition& tr : traj.transitions) row(tr.time_index, tr.state, tr.action);
  if (!traj.transitions.empty()) {
    const Transition& last = traj.transitions.back();
    row(last.time_index + 1, last.next_state, policy.evaluate(last.next_state));
  }
}

std::string epoch_row(const EpochRecord& r) {
  std::ostringstream os;
  const EvaluationSummary& e = r.evaluation;
  os << r.epoch << ',' << r.transitions << ',' << r.status << ',' << num(r.model_error)
     << ',' << num(r.hessian_bound) << ',' << num(r.fd_step) << ','
     << num(r.jacobian_error) << ',' << num(r.true_jacobian_error) << ','
     << num(r.margin_model) << ',' << num(r.margin_batch) << ','
     << num(r.margin_assumed) << ',' << num(r.fill_distance) << ','
     << num(r.metric_norm) << ',' << num(r.excitation) << ',' << r.iterations << ','
     << num(r.multiplier) << ',' << num(r.constraint_value) << ','
     << (r.feasible ? 1 : 0) << ',' << num(r.cost) << ',' << r.policy_id << ','
     << num(e.max_final_dist) << ',' << num(e.mean_final_dist) << ','
     << num(e.max_decay_rate) << ',' << e.lyapunov_violations << ','
     << e.lyapunov_checked << ',' << e.diverged << ',' << e.reached << '\n';
  return os.str();
}

struct RunState {
  FeatureMap map;
  ModelEstimate model;
  Policy policy;
  DualState dual;
  std::optional<StabilityCertificate> certificate;
  Eigen::VectorXd x;
  std::int64_t t = 0;
  std::vector<EpochRecord> records;
};

class Runner {
 public:
  Runner(const ExperimentConfig& cfg, const RunOptions& options)
      : cfg_(cfg), options_(options), plant_(find_plant(cfg.plant)) {}

  ExperimentReport run();

 private:
  EpochRecord run_epoch(RunState& s, int epoch);
  EvaluationSummary evaluate(const Policy& policy,
                             const std::optional<StabilityCertificate>& cert,
                             int epoch, std::ostream& traj_out);
  void write_report(const ExperimentReport& report) const;
  void log(const std::string& line) const {
    if (options_.verbose) std::cerr << line << std::endl;
  }

  const ExperimentConfig& cfg_;
  const RunOptions& options_;
  const Plant& plant_;
  fs::path dir_;
  std::string config_hash_;
  std::string settings_hash_;
  std::ofstream metrics_;
  std::ofstream epochs_;
};

EvaluationSummary Runner::evaluate(const Policy& policy,
                                   const std::optional<StabilityCertificate>& cert,
                                   int epoch, std::ostream& traj_out) {
  EvaluationSummary sum;
  Rng rng = Rng::stream(cfg_.seed, streams::kEvaluation, static_cast<std::uint64_t>(epoch));
  const int n = plant_.state_dim();
  const Eigen::MatrixXd metric =
      cert ? cert->metric : Eigen::MatrixXd::Identity(n, n);
  double total = 0.0;
  for (int r = 0; r < cfg_.evaluation.rollouts; ++r) {
    const Eigen::VectorXd x0 = uniform_in_box(rng, plant_.box_lower(), plant_.box_upper());
    RolloutOptions ro;
    ro.epoch = epoch;
    ro.seed = cfg_.seed;
    double final_dist = std::numeric_limits<double>::infinity();
    try {
      const Trajectory traj = rollout(plant_, policy, x0, cfg_.evaluation.steps, ro);
      const StabilityMetrics m = stability_metrics(traj, plant_, policy, metric,
                                                   cfg_.evaluation.neighborhood);
      final_dist = m.final_dist;
      sum.max_decay_rate = std::max(sum.max_decay_rate, m.decay_rate);
      sum.lyapunov_violations += m.lyapunov_violations;
      sum.lyapunov_checked += m.lyapunov_checked;
      if (m.diverging) ++sum.diverged;
      write_trajectory_rows(traj_out, "eval", r, traj, plant_, policy);
    } catch (const Divergence&) {
      ++sum.diverged;
      sum.max_decay_rate = std::numeric_limits<double>::infinity();
    }
    sum.max_final_dist = std::max(sum.max_final_dist, final_dist);
    total += final_dist;
    if (final_dist <= cfg_.evaluation.threshold) ++sum.reached;
  }
  sum.mean_final_dist = total / cfg_.evaluation.rollouts;
  return sum;
}

EpochRecord Runner::run_epoch(RunState& s, int epoch) {
  const int n = plant_.state_dim();
  const int p = plant_.input_dim();
  EpochRecord rec;
  rec.epoch = epoch;

  const fs::path traj_path = dir_ / ("traj_epoch_" + std::to_string(epoch) + ".csv");
  std::ofstream traj_out(traj_path, std::ios::trunc | std::ios::binary);
  if (!traj_out) fail(ErrorCode::kIo, "cannot open '" + traj_path.string() + "'");
  traj_out << header_line(traj_path.filename().string()) << "kind,rollout,t";
  for (int k = 0; k < n; ++k) traj_out << ",x" << k;
  for (int k = 0; k < p; ++k) traj_out << ",u" << k;
  traj_out << ",dist\n";

  // Collect tau transitions under the current policy, continuing the plant
  // state and clock from the previous epoch.
  RolloutOptions collect;
  collect.dither_amplitude = epoch < cfg_.epoch.dither_epochs ? cfg_.epoch.dither_amplitude : 0.0;
  collect.start_time = s.t;
  collect.epoch = epoch;
  collect.seed = cfg_.seed;
  Trajectory data;
  try {
    data = rollout(plant_, s.policy, s.x, cfg_.epoch.tau, collect);
  } catch (const Divergence& e) {
    throw Divergence("epoch " + std::to_string(epoch) + ": data collection: " + e.what(),
                     e.step());
  }
  if (cfg_.output.collection_trajectory)
    write_trajectory_rows(traj_out, "collect", 0, data, plant_, s.policy);
  s.model.absorb_all(s.map, data.transitions);
  s.x = data.transitions.back().next_state;
  s.t += cfg_.epoch.tau;
  s.model.refresh();
  rec.transitions = s.model.sample_count();
  rec.excitation = s.model.excitation();

  // Fresh holdout from the same excitation regime, far from the data clock.
  Rng hold_rng = Rng::stream(cfg_.seed, streams::kHoldout, static_cast<std::uint64_t>(epoch));
  RolloutOptions hold;
  hold.dither_amplitude = cfg_.epoch.dither_amplitude;
  hold.start_time = kHoldoutTimeOffset + static_cast<std::int64_t>(epoch) * cfg_.epoch.holdout_steps;
  hold.epoch = epoch;
  hold.seed = cfg_.seed;
  const Trajectory holdout =
      rollout(plant_, s.policy, uniform_in_box(hold_rng, cfg_.batch.lower, cfg_.batch.upper),
              cfg_.epoch.holdout_steps, hold);
  rec.model_error = empirical_model_error(s.model, s.map, holdout.transitions);

  const LearnedDynamics learned(s.model, s.map, p);
  const std::vector<Eigen::VectorXd> probes = probe_points(cfg_, p, epoch);
  double phi_inf = 0.0;
  for (const auto& phi : probes) phi_inf = std::max(phi_inf, phi.lpNorm<Eigen::Infinity>());

  rec.hessian_bound = cfg_.certificate.hessian_bound
                          ? *cfg_.certificate.hessian_bound
                          : estimate_hessian_bound(learned, probes, 1e-3);
  rec.fd_step = cfg_.certificate.fd_step
                    ? *cfg_.certificate.fd_step
                    : optimal_step(rec.model_error, std::max(rec.hessian_bound, 1e-12), phi_inf);
  rec.jacobian_error = jacobian_error_proxy(learned, probes, rec.fd_step, rec.model_error);

  const RepresentativeBatch batch = make_config_batch(cfg_, epoch);
  rec.fill_distance = batch.fill_distance;
  rec.margin_assumed = cfg_.certificate.stability_margin;

  MarginInputs in;
  in.lipschitz_policy = cfg_.policy.lipschitz_cap;
  in.lipschitz_dynamics = cfg_.certificate.lipschitz_dynamics;
  in.jacobian_error = rec.jacobian_error;
  in.metric = choose_metric(cfg_, plant_, learned, s.policy);
  in.g_grad_bound = cfg_.certificate.g_grad_bound;
  in.fill_distance = batch.fill_distance;
  in.margin_assumed = cfg_.certificate.stability_margin;
  in.mode = cfg_.certificate.margin_mode;
  in.fixed_margin = cfg_.certificate.fixed_margin;
  in.batch_margin_override = cfg_.certificate.epsilon_pd.value_or(-1.0);
  rec.metric_norm = spectral_norm(in.metric);

  std::optional<StabilityCertificate> cert;
  try {
    cert = compute_margins(in);
    rec.margin_model = cert->margin_model;
    rec.margin_batch = cert->margin_batch;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kInfeasibleMargin && e.code() != ErrorCode::kInfeasibleBatch)
      throw;
    rec.status = to_string(e.code());
    log("epoch " + std::to_string(epoch) + ": " + e.what() + "; keeping the current policy");
  }

  if (cert) {
    PrimalDualConfig pd;
    pd.n_rollouts = cfg_.cost.rollouts;
    pd.seed = Rng::stream(cfg_.seed, streams::kCostInitialStates,
                          static_cast<std::uint64_t>(epoch)).next_u64();
    pd.fd_step = rec.fd_step;
    pd.theta_limit = cfg_.optimizer.theta_limit;
    StopRule stop;
    stop.max_iters = cfg_.optimizer.max_iters;
    stop.tol_grad = cfg_.optimizer.tol_grad;
    stop.tol_feas = cfg_.optimizer.tol_feas;
    const CostSpec cost = cost_spec(cfg_);
    auto observer = [&](const IterationDiagnostics& d) {
      metrics_ << epoch << ',' << d.iteration << ',' << num(d.cost) << ','
               << num(d.sup_value) << ',' << num(d.constraint_value) << ','
               << num(d.multiplier) << ',' << d.argmax << ',' << num(d.cost_grad_norm)
               << ',' << num(d.step_norm) << ',' << d.degenerate_count << ','
               << (d.projected ? 1 : 0) << '\n';
    };
    try {
      SolveResult res = solve_constrained_policy(s.policy, s.dual, *cert, batch, learned,
                                                 cost, pd, stop, observer);
      s.policy = std::move(res.policy);
      s.dual = res.dual;
      rec.iterations = res.report.iterations;
      rec.constraint_value = res.report.constraint_value;
      rec.cost = res.report.cost;
      rec.feasible = res.report.feasible;
      s.certificate = cert;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kInfeasibleResult &&
          e.code() != ErrorCode::kRolloutDivergence && e.code() != ErrorCode::kNumeric)
        throw;
      rec.status = to_string(e.code());
      rec.iterations = cfg_.optimizer.max_iters;
      log("epoch " + std::to_string(epoch) + ": " + e.what() + "; keeping the current policy");
    }
  }
  rec.multiplier = s.dual.multiplier;
  rec.policy_id = policy_id(s.policy);

  // Simulator-side audit: FD Jacobian of the learned model against the true
  // Jacobian at the batch points, under the policy carried forward.
  for (const auto& x : batch.points) {
    Eigen::VectorXd phi(n + p);
    phi << x, s.policy.evaluate(x);
    const Eigen::MatrixXd fd = finite_difference_jacobian(learned, phi, rec.fd_step).full();
    const Eigen::MatrixXd truth = plant_.true_jacobian(x, phi.tail(p));
    rec.true_jacobian_error = std::max(rec.true_jacobian_error, (fd - truth).norm());
  }
  rec.evaluation = evaluate(s.policy, rec.feasible ? cert : std::nullopt, epoch, traj_out);

  std::ostringstream os;
  os << "epoch " << epoch << ": status " << rec.status << ", model error " << rec.model_error
     << ", eps_J " << rec.jacobian_error << ", eps_i " << rec.margin_model << ", eps_pd "
     << rec.margin_batch << ", iterations " << rec.iterations << ", feasible "
     << rec.feasible << ", max final dist " << rec.evaluation.max_final_dist;
  log(os.str());
  return rec;
}

void Runner::write_report(const ExperimentReport& report) const {
  std::ofstream out(dir_ / "report.json", std::ios::trunc | std::ios::binary);
  if (!out) fail(ErrorCode::kIo, "cannot write report.json");
  out << report_to_json(report);
}

ExperimentReport Runner::run() {
  const int n = plant_.state_dim();
  const int p = plant_.input_dim();
  dir_ = resolve_output_directory(cfg_, options_);
  fs::create_directories(dir_);
  config_hash_ = cfg_.source_hash.empty() ? fnv1a_hex(dump_config(cfg_)) : cfg_.source_hash;
  settings_hash_ = settings_hash(cfg_);

  if (cfg_.epoch.mode == EpochMode::kSampleComplexity) {
    const MarginPreview pre = preview_margins(cfg_);
    if (!pre.feasible) {
      fail(ErrorCode::kInfeasibleBatch,
           "sample-complexity mode needs eps_bar - eps_pd > 0 before starting: " + pre.message);
    }
  }

  const bool resuming = !options_.resume_path.empty();
  std::optional<RunState> state;
  int start_epoch = 0;
  if (resuming) {
    Checkpoint ck = load_checkpoint(options_.resume_path);
    if (ck.settings_hash != settings_hash_) {
      fail(ErrorCode::kInvalidConfig, "resume: checkpoint was written for settings " +
                                          ck.settings_hash + ", this config is " + settings_hash_);
    }
    if (ck.plant != cfg_.plant) fail(ErrorCode::kInvalidConfig, "resume: plant mismatch");
    // Drop rows written after the checkpoint by an interrupted epoch.
    fs::resize_file(dir_ / "metrics.csv", ck.metrics_bytes);
    fs::resize_file(dir_ / "epochs.csv", ck.epochs_bytes);
    state.emplace(RunState{std::move(*ck.feature_map), std::move(*ck.model),
                           std::move(*ck.policy), ck.dual, ck.certificate,
                           ck.plant_state, ck.plant_time, std::move(ck.records)});
    start_epoch = ck.epochs_completed;
  } else {
    FeatureMap map = FeatureMap::generate(n + p, cfg_.features.count,
                                          cfg_.features.bandwidth, cfg_.features.seed);
    ModelEstimate model(map, n, cfg_.epoch.regularizer);
    DualState dual;
    dual.multiplier = cfg_.optimizer.initial_multiplier;
    dual.step_primal = cfg_.optimizer.step_primal;
    dual.step_dual = cfg_.optimizer.step_dual;
    state.emplace(RunState{std::move(map), std::move(model), initial_policy(cfg_, plant_),
                           dual, std::nullopt, plant_.data_start(), 0, {}});
  }
  RunState& s = *state;
  metrics_ = open_csv(dir_ / "metrics.csv", kMetricsColumns, resuming);
  epochs_ = open_csv(dir_ / "epochs.csv", kEpochColumns, resuming);

  ExperimentReport report;
  report.plant = cfg_.plant;
  report.config_hash = config_hash_;
  report.seed = cfg_.seed;
  report.feature_seed = cfg_.features.seed;

  auto finish = [&](bool completed) {
    report.epochs = s.records;
    report.completed = completed;
    if (!s.records.empty()) {
      report.final_feasible = s.records.back().feasible;
      report.final_max_dist = s.records.back().evaluation.max_final_dist;
    }
    const bool ok = report.final_feasible &&
                    report.final_max_dist <= cfg_.evaluation.threshold;
    report.exit_code = !completed ? 2 : (ok ? 0 : 1);
    metrics_.flush();
    epochs_.flush();
    write_report(report);
    return report;
  };

  try {
    for (int epoch = start_epoch; epoch < cfg_.epoch.max_epochs; ++epoch) {
      if (options_.stop_after_epoch >= 0 && epoch >= options_.stop_after_epoch)
        return finish(false);
      EpochRecord rec = run_epoch(s, epoch);
      epochs_ << epoch_row(rec);
      s.records.push_back(std::move(rec));
      metrics_.flush();
      epochs_.flush();
      if (!metrics_ || !epochs_) fail(ErrorCode::kIo, "failed writing CSV output");
      if (cfg_.output.checkpoints) {
        Checkpoint ck;
        ck.settings_hash = settings_hash_;
        ck.plant = cfg_.plant;
        ck.epochs_completed = epoch + 1;
        ck.metrics_bytes = fs::file_size(dir_ / "metrics.csv");
        ck.epochs_bytes = fs::file_size(dir_ / "epochs.csv");
        ck.feature_map = s.map;
        ck.model = s.model;
        ck.policy = s.policy;
        ck.dual = s.dual;
        ck.certificate = s.certificate;
        ck.plant_state = s.x;
        ck.plant_time = s.t;
        ck.records = s.records;
        save_checkpoint(ck, (dir_ / "checkpoints" /
                             ("epoch_" + std::to_string(epoch + 1) + ".ckpt")).string());
      }
    }
  } catch (...) {
    // Flush what exists before propagating.
    report.epochs = s.records;
    metrics_.flush();
    epochs_.flush();
    try {
      write_report(report);
    } catch (...) {
    }
    throw;
  }
  return finish(true);
}

}  // namespace

std::string resolve_output_directory(const ExperimentConfig& cfg, const RunOptions& options) {
  if (options.output_directory && !options.output_directory->empty())
    return *options.output_directory;
  if (const char* env = std::getenv("KCRL_OUTPUT_DIR"); env != nullptr && *env != '\0')
    return env;
  return cfg.output.directory;
}

ExperimentReport run_experiment(const ExperimentConfig& cfg, const RunOptions& options) {
  Runner runner(cfg, options);
  return runner.run();
}

std::string report_to_json(const ExperimentReport& r) {
  using Json = nlohmann::ordered_json;
  auto real = [](double v) { return std::isfinite(v) ? Json(v) : Json(num(v)); };
  Json j;
  j["provenance"] = {{"code_version", kCodeVersion},
                     {"config_hash", r.config_hash},
                     {"plant", r.plant},
                     {"seed", r.seed},
                     {"feature_seed", r.feature_seed}};
  j["degraded_mode"] =
      "an epoch whose margins or constrained solve are infeasible keeps the previous "
      "policy, records the reason in its status and continues collecting data";
  Json epochs = Json::array();
  for (const EpochRecord& e : r.epochs) {
    const EvaluationSummary& v = e.evaluation;
    epochs.push_back({{"epoch", e.epoch},
                      {"transitions", e.transitions},
                      {"status", e.status},
                      {"model_error", real(e.model_error)},
                      {"hessian_bound", real(e.hessian_bound)},
                      {"fd_step", real(e.fd_step)},
                      {"jacobian_error", real(e.jacobian_error)},
                      {"true_jacobian_error", real(e.true_jacobian_error)},
                      {"margin_model", real(e.margin_model)},
                      {"margin_batch", real(e.margin_batch)},
                      {"margin_assumed", real(e.margin_assumed)},
                      {"fill_distance", real(e.fill_distance)},
                      {"metric_norm", real(e.metric_norm)},
                      {"excitation", real(e.excitation)},
                      {"iterations", e.iterations},
                      {"multiplier", real(e.multiplier)},
                      {"constraint_value", real(e.constraint_value)},
                      {"feasible", e.feasible},
                      {"cost", real(e.cost)},
                      {"policy_id", e.policy_id},
                      {"evaluation",
                       {{"max_final_dist", real(v.max_final_dist)},
                        {"mean_final_dist", real(v.mean_final_dist)},
                        {"max_decay_rate", real(v.max_decay_rate)},
                        {"lyapunov_violations", v.lyapunov_violations},
                        {"lyapunov_checked", v.lyapunov_checked},
                        {"diverged", v.diverged},
                        {"reached", v.reached}}}});
  }
  j["epochs"] = std::move(epochs);
  j["completed"] = r.completed;
  j["final_feasible"] = r.final_feasible;
  j["final_max_dist"] = real(r.final_max_dist);
  j["exit_code"] = r.exit_code;
  j["generated"] = timestamp();
  return j.dump(2) + "\n";
}

}  // namespace kcrl
