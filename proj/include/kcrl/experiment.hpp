#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "kcrl/certificate.hpp"
#include "kcrl/model.hpp"
#include "kcrl/plants.hpp"
#include "kcrl/policy.hpp"
#include "kcrl/primal_dual.hpp"

namespace kcrl {

inline constexpr const char* kCodeVersion = "0.1.0";

/// sample_complexity: tau must equal D^2 and margins use the budget split.
enum class EpochMode { kManual, kSampleComplexity };
const char* to_string(EpochMode mode);

/// Where the metric M comes from each epoch.
///   identity:  M = I
///   lyapunov:  series solution for the learned closed loop linearized at the
///              equilibrium point (identity if that linearization is unstable)
///   witness:   the plant's declared reference metric
enum class MetricMode { kIdentity, kLyapunov, kWitness };
const char* to_string(MetricMode mode);

enum class BatchKind { kGrid, kHalton };
const char* to_string(BatchKind kind);

struct FeatureSettings {
  int count = 256;
  double bandwidth = 1.0;
  std::uint64_t seed = 0;
};

struct EpochSettings {
  EpochMode mode = EpochMode::kManual;
  std::int64_t tau = 4096;
  int max_epochs = 1;
  double regularizer = 1e-3;
  int dither_epochs = 1;
  double dither_amplitude = 1.0;
  int holdout_steps = 1000;
};

struct CertificateSettings {
  MarginMode margin_mode = MarginMode::kModelError;
  double fixed_margin = 0.0;
  double stability_margin = 0.1;        // eps_bar
  double g_grad_bound = 1.0;            // M_G
  double lipschitz_dynamics = 1.0;      // L_F
  std::optional<double> hessian_bound;  // F_H; estimated from the model if absent
  MetricMode metric = MetricMode::kIdentity;
  std::optional<double> epsilon_pd;     // batch margin override; auto if absent
  std::optional<double> fd_step;        // Jacobian step; optimal step if absent
  int probes = 100;                     // probe points for eps_J and F_H
};

struct BatchSettings {
  BatchKind kind = BatchKind::kGrid;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  int resolution = 11;  // grid points per axis
  int count = 256;      // halton points
  int audit_samples = 4096;
  bool redraw = false;  // halton only: a new batch each epoch
};

struct OptimizerSettings {
  double step_primal = 1e-3;
  double step_dual = 1e-2;
  double initial_multiplier = 0.0;
  int max_iters = 5000;
  double tol_grad = 1e-6;
  double tol_feas = 0.0;
  double theta_limit = 1e6;
};

struct CostSettings {
  Eigen::MatrixXd q;
  Eigen::MatrixXd r;
  double discount = 0.97;
  int horizon = 50;
  int rollouts = 8;
  Eigen::VectorXd initial_lower;
  Eigen::VectorXd initial_upper;
};

struct PolicySettings {
  PolicyArchitecture architecture = PolicyArchitecture::kAffine;
  double lipschitz_cap = 1.0;  // L_u
  int hidden = 8;
  double init_scale = 0.5;
  Eigen::MatrixXd initial_gain;  // affine only
  Eigen::VectorXd initial_bias;
};

struct EvaluationSettings {
  int rollouts = 20;
  int steps = 300;
  double threshold = 1e-2;
  double neighborhood = 1e-6;
};

struct OutputSettings {
  std::string directory = "kcrl_out";
  bool checkpoints = true;
  bool collection_trajectory = false;
};

/// Fully resolved experiment description. Plant-dependent defaults are filled
/// in at parse time, so the normalized dump is self-contained.
struct ExperimentConfig {
  std::string plant = "P3";
  std::uint64_t seed = 1;
  FeatureSettings features;
  EpochSettings epoch;
  CertificateSettings certificate;
  BatchSettings batch;
  OptimizerSettings optimizer;
  CostSettings cost;
  PolicySettings policy;
  EvaluationSettings evaluation;
  OutputSettings output;

  std::string source_hash;  // FNV-1a of the file bytes, empty if not from a file
};

/// Parses and validates a JSON config. Every problem found is reported in one
/// kInvalidConfig error, one line per field. Unknown keys are errors with a
/// nearest-key suggestion.
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig parse_config(const std::string& path);

/// Normalized JSON text: every field explicit, stable key order. Parsing the
/// dump yields the same config.
std::string dump_config(const ExperimentConfig& cfg);

std::string fnv1a_hex(const std::string& bytes);

/// Hash of the normalized config without the output section. A checkpoint can
/// only be resumed under the same settings.
std::string settings_hash(const ExperimentConfig& cfg);

/// Representative batch for an epoch; a fixed batch unless halton redraw is on.
RepresentativeBatch make_config_batch(const ExperimentConfig& cfg, int epoch);

/// Margins implied by the config before any data is seen (eps_J = 0).
struct MarginPreview {
  StabilityCertificate certificate;  // valid only when feasible
  double fill_distance = 0.0;
  double margin_batch = 0.0;
  double margin_model = 0.0;
  bool feasible = false;
  std::string message;
};
MarginPreview preview_margins(const ExperimentConfig& cfg);

struct EvaluationSummary {
  double max_final_dist = 0.0;
  double mean_final_dist = 0.0;
  double max_decay_rate = 0.0;
  int lyapunov_violations = 0;
  int lyapunov_checked = 0;
  int diverged = 0;
  int reached = 0;  // rollouts with final_dist <= threshold
};

struct EpochRecord {
  int epoch = 0;
  std::int64_t transitions = 0;  // total absorbed so far
  std::string status = "ok";
  double model_error = 0.0;       // delta on the holdout
  double hessian_bound = 0.0;     // F_H used
  double fd_step = 0.0;           // eps
  double jacobian_error = 0.0;    // eps_J proxy
  double true_jacobian_error = 0.0;
  double margin_model = 0.0;      // eps_i
  double margin_batch = 0.0;      // eps_pd
  double margin_assumed = 0.0;    // eps_bar
  double fill_distance = 0.0;
  double metric_norm = 0.0;
  double excitation = 0.0;
  int iterations = 0;
  double multiplier = 0.0;
  double constraint_value = 0.0;
  bool feasible = false;
  double cost = 0.0;
  std::string policy_id;
  EvaluationSummary evaluation;
};

struct ExperimentReport {
  std::string plant;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::uint64_t feature_seed = 0;
  std::vector<EpochRecord> epochs;
  bool completed = false;  // false when stopped early on request
  bool final_feasible = false;
  double final_max_dist = 0.0;
  int exit_code = 1;
};

struct RunOptions {
  std::string resume_path;     // continue from this checkpoint
  int stop_after_epoch = -1;   // stop once this many epochs are complete
  std::optional<std::string> output_directory;  // overrides config and env
  bool verbose = false;        // progress lines on stderr
};

/// Output directory resolution: RunOptions, then KCRL_OUTPUT_DIR, then config.
std::string resolve_output_directory(const ExperimentConfig& cfg,
                                     const RunOptions& options);

/// The epoch loop: collect, fit, size margins, solve, evaluate, persist.
/// An epoch whose margins or solve are infeasible keeps the previous policy
/// and records the reason in its status. Exit code 0 iff the final epoch is
/// feasible and every evaluation rollout ends within the threshold.
ExperimentReport run_experiment(const ExperimentConfig& cfg,
                                const RunOptions& options = {});

std::string report_to_json(const ExperimentReport& report);

/// Everything needed to continue a run at an epoch boundary.
struct Checkpoint {
  std::string settings_hash;  // see settings_hash()
  std::string plant;
  int epochs_completed = 0;
  std::uint64_t metrics_bytes = 0;  // CSV sizes at the boundary
  std::uint64_t epochs_bytes = 0;
  std::optional<FeatureMap> feature_map;
  std::optional<ModelEstimate> model;
  std::optional<Policy> policy;
  DualState dual;
  std::optional<StabilityCertificate> certificate;
  Eigen::VectorXd plant_state;
  std::int64_t plant_time = 0;
  std::vector<EpochRecord> records;
};

/// Text format, floats as hexadecimal literals, so every scalar round-trips
/// bit-exactly.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
/// Throws kParse on malformed or truncated input, kIo on a missing file.
Checkpoint load_checkpoint(const std::string& path);

struct VerificationReport {
  std::vector<AuditItem> items;
  bool passed = false;
};

/// Re-checks the stored objects: gram symmetric and positive definite,
/// closed-form residual of the stored weights, feature map fingerprint,
/// policy Lipschitz cap, metric positive definite, multiplier >= 0.
/// Parse failures are reported as a single failed item.
VerificationReport verify_checkpoint(const std::string& path);

}  // namespace kcrl
