#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "kcrl/errors.hpp"
#include "kcrl/experiment.hpp"
#include "kcrl/rng.hpp"

namespace kcrl {

using Json = nlohmann::ordered_json;

const char* to_string(EpochMode mode) {
  return mode == EpochMode::kSampleComplexity ? "sample_complexity" : "manual";
}

const char* to_string(MetricMode mode) {
  switch (mode) {
    case MetricMode::kIdentity: return "identity";
    case MetricMode::kLyapunov: return "lyapunov";
    case MetricMode::kWitness: return "witness";
  }
  return "unknown";
}

const char* to_string(BatchKind kind) {
  return kind == BatchKind::kHalton ? "halton" : "grid";
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string settings_hash(const ExperimentConfig& cfg) {
  ExperimentConfig c = cfg;
  c.output = OutputSettings{};
  return fnv1a_hex(dump_config(c));
}

namespace {

const std::map<std::string, std::vector<std::string>>& schema() {
  static const std::map<std::string, std::vector<std::string>> s = {
      {"", {"plant", "seed", "features", "epoch", "certificate", "batch",
            "optimizer", "cost", "policy", "evaluation", "output"}},
      {"features", {"count", "bandwidth", "seed"}},
      {"epoch", {"mode", "tau", "max_epochs", "regularizer", "dither_epochs",
                 "dither_amplitude", "holdout_steps"}},
      {"certificate", {"margin_mode", "fixed_margin", "stability_margin",
                       "g_grad_bound", "lipschitz_dynamics", "hessian_bound",
                       "metric", "epsilon_pd", "fd_step", "probes"}},
      {"batch", {"kind", "lower", "upper", "resolution", "count",
                 "audit_samples", "redraw"}},
      {"optimizer", {"step_primal", "step_dual", "initial_multiplier",
                     "max_iters", "tol_grad", "tol_feas", "theta_limit"}},
      {"cost", {"q", "r", "discount", "horizon", "rollouts", "initial_lower",
                "initial_upper"}},
      {"policy", {"architecture", "lipschitz_cap", "hidden", "init_scale",
                  "initial_gain", "initial_bias"}},
      {"evaluation", {"rollouts", "steps", "threshold", "neighborhood"}},
      {"output", {"directory", "checkpoints", "collection_trajectory"}},
  };
  return s;
}

std::size_t edit_distance(const std::string& a, const std::string& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1,
                         prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

std::string join_path(const std::string& section, const std::string& key) {
  return section.empty() ? key : section + "." + key;
}

/// Nearest known key over every section; the same section wins ties.
std::string suggest(const std::string& section, const std::string& key) {
  std::string best;
  std::size_t best_d = std::string::npos;
  bool best_same = false;
  for (const auto& [sec, keys] : schema()) {
    for (const auto& k : keys) {
      const std::size_t d = edit_distance(key, k);
      const bool same = sec == section;
      if (d < best_d || (d == best_d && same && !best_same)) {
        best_d = d;
        best = join_path(sec, k);
        best_same = same;
      }
    }
  }
  const std::size_t limit = std::max<std::size_t>(2, key.size() / 3);
  return best_d <= limit ? best : std::string();
}

class Reader {
 public:
  explicit Reader(std::vector<std::string>& errors) : errors_(errors) {}

  void error(const std::string& path, const std::string& msg) {
    errors_.push_back(path + ": " + msg);
  }

  const Json* section(const Json& root, const std::string& name) {
    if (!root.contains(name)) return nullptr;
    const Json& s = root.at(name);
    if (!s.is_object()) {
      error(name, "must be an object");
      return nullptr;
    }
    check_keys(s, name);
    return &s;
  }

  void check_keys(const Json& obj, const std::string& section) {
    const auto& known = schema().at(section);
    for (auto it = obj.begin(); it != obj.end(); ++it) {
      if (std::find(known.begin(), known.end(), it.key()) != known.end()) continue;
      std::string msg = "unknown key";
      const std::string s = suggest(section, it.key());
      if (!s.empty()) msg += "; did you mean '" + s + "'?";
      error(join_path(section, it.key()), msg);
    }
  }

  template <class F>
  void field(const Json* obj, const std::string& section, const std::string& key,
             F&& read) {
    if (obj == nullptr || !obj->contains(key)) return;
    read(obj->at(key), join_path(section, key));
  }

  void number(const Json* obj, const std::string& sec, const std::string& key,
              double& out) {
    field(obj, sec, key, [&](const Json& v, const std::string& path) {
      if (!v.is_number()) return error(path, "must be a number");
      out = v.get<double>();
      if (!std::isfinite(out)) error(path, "must be finite");
    });
  }

  template <class Int>
  void integer(const Json* obj, const std::string& sec, const std::string& key,
               Int& out) {
    field(obj, sec, key, [&](const Json& v, const std::string& path) {
      if (!v.is_number_integer()) return error(path, "must be an integer");
      if constexpr (std::is_unsigned_v<Int>) {
        if (!v.is_number_unsigned()) return error(path, "must be non-negative");
      }
      out = v.get<Int>();
    });
  }

  void boolean(const Json* obj, const std::string& sec, const std::string& key,
               bool& out) {
    field(obj, sec, key, [&](const Json& v, const std::string& path) {
      if (!v.is_boolean()) return error(path, "must be true or false");
      out = v.get<bool>();
    });
  }

  void string(const Json* obj, const std::string& sec, const std::string& key,
              std::string& out) {
    field(obj, sec, key, [&](const Json& v, const std::string& path) {
      if (!v.is_string()) return error(path, "must be a string");
      out = v.get<std::string>();
    });
  }

  /// "auto" or a number.
  void auto_number(const Json* obj, const std::string& sec, const std::string& key,
                   std::optional<double>& out) {
    field(obj, sec, key, [&](const Json& v, const std::string& path) {
      if (v.is_string() && v.get<std::string>() == "auto") {
        out.reset();
      } else if (v.is_number()) {
        out = v.get<double>();
      } else {
        error(path, "must be \"auto\" or a number");
      }
    });
  }

  void vector(const Json* obj, const std::string& sec, const std::string& key,
              Eigen::VectorXd& out) {
    field(obj, sec, key, [&](const Json& v, const std::string& path) {
      if (!v.is_array()) return error(path, "must be an array of numbers");
      Eigen::VectorXd tmp(static_cast<Eigen::Index>(v.size()));
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (!v[i].is_number()) return error(path, "must be an array of numbers");
        tmp(static_cast<Eigen::Index>(i)) = v[i].get<double>();
      }
      out = tmp;
    });
  }

  void matrix(const Json* obj, const std::string& sec, const std::string& key,
              Eigen::MatrixXd& out) {
    field(obj, sec, key, [&](const Json& v, const std::string& path) {
      const char* msg = "must be a non-empty array of equal-length rows";
      if (!v.is_array() || v.empty() || !v[0].is_array() || v[0].empty())
        return error(path, msg);
      Eigen::MatrixXd tmp(static_cast<Eigen::Index>(v.size()),
                          static_cast<Eigen::Index>(v[0].size()));
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (!v[i].is_array() || v[i].size() != v[0].size()) return error(path, msg);
        for (std::size_t j = 0; j < v[i].size(); ++j) {
          if (!v[i][j].is_number()) return error(path, msg);
          tmp(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
              v[i][j].get<double>();
        }
      }
      out = tmp;
    });
  }

 private:
  std::vector<std::string>& errors_;
};

Json to_json(const Eigen::VectorXd& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

Json to_json(const Eigen::MatrixXd& m) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) a.push_back(to_json(Eigen::VectorXd(m.row(i).transpose())));
  return a;
}

Json auto_or(const std::optional<double>& v) {
  return v ? Json(*v) : Json("auto");
}

void validate(const ExperimentConfig& c, const Plant& plant,
              bool margin_mode_given, bool tau_given,
              std::vector<std::string>& errors) {
  auto err = [&](const std::string& path, const std::string& msg) {
    errors.push_back(path + ": " + msg);
  };
  const int n = plant.state_dim();
  const int p = plant.input_dim();

  if (c.features.count < 1) err("features.count", "must be >= 1");
  if (!(c.features.bandwidth > 0.0)) err("features.bandwidth", "must be positive");

  if (c.epoch.tau < 1) err("epoch.tau", "must be >= 1");
  if (c.epoch.max_epochs < 1) err("epoch.max_epochs", "must be >= 1");
  if (!(c.epoch.regularizer > 0.0)) err("epoch.regularizer", "must be positive");
  if (c.epoch.dither_epochs < 0) err("epoch.dither_epochs", "must be >= 0");
  if (c.epoch.dither_amplitude < 0.0) err("epoch.dither_amplitude", "must be >= 0");
  if (c.epoch.holdout_steps < 1) err("epoch.holdout_steps", "must be >= 1");
  if (c.epoch.mode == EpochMode::kSampleComplexity) {
    const std::int64_t d = c.features.count;
    if (tau_given && c.epoch.tau != d * d) {
      err("epoch.tau",
          "epoch.tau = " + std::to_string(c.epoch.tau) +
              " must equal features.count^2 = " + std::to_string(d * d) +
              " (features.count = " + std::to_string(d) +
              ") when epoch.mode = sample_complexity (" +
              std::to_string(c.epoch.tau) + " != " + std::to_string(d * d) + ")");
    }
    if (margin_mode_given && c.certificate.margin_mode != MarginMode::kBudgetSplit) {
      err("certificate.margin_mode",
          "must be budget_split when epoch.mode = sample_complexity");
    }
  }

  const auto& ce = c.certificate;
  if (!(ce.stability_margin > 0.0)) err("certificate.stability_margin", "must be positive");
  if (!(ce.g_grad_bound >= 0.0)) err("certificate.g_grad_bound", "must be >= 0");
  if (!(ce.lipschitz_dynamics > 0.0)) err("certificate.lipschitz_dynamics", "must be positive");
  if (ce.hessian_bound && !(*ce.hessian_bound > 0.0))
    err("certificate.hessian_bound", "must be positive or \"auto\"");
  if (ce.epsilon_pd && !(*ce.epsilon_pd >= 0.0))
    err("certificate.epsilon_pd", "must be >= 0 or \"auto\"");
  if (ce.fd_step && !(*ce.fd_step > 0.0))
    err("certificate.fd_step", "must be positive or \"auto\"");
  if (ce.fixed_margin < 0.0) err("certificate.fixed_margin", "must be >= 0");
  if (ce.probes < 1) err("certificate.probes", "must be >= 1");

  const auto& b = c.batch;
  if (b.lower.size() != n) err("batch.lower", "must have " + std::to_string(n) + " entries");
  if (b.upper.size() != n) err("batch.upper", "must have " + std::to_string(n) + " entries");
  if (b.lower.size() == n && b.upper.size() == n && !(b.lower.array() < b.upper.array()).all())
    err("batch.upper", "must exceed batch.lower componentwise");
  if (b.resolution < 2) err("batch.resolution", "must be >= 2");
  if (b.count < 1) err("batch.count", "must be >= 1");
  if (b.audit_samples < 1) err("batch.audit_samples", "must be >= 1");
  if (b.redraw && b.kind != BatchKind::kHalton)
    err("batch.redraw", "only applies to batch.kind = halton");

  const auto& o = c.optimizer;
  if (!(o.step_primal > 0.0)) err("optimizer.step_primal", "must be positive");
  if (!(o.step_dual > 0.0)) err("optimizer.step_dual", "must be positive");
  if (o.initial_multiplier < 0.0) err("optimizer.initial_multiplier", "must be >= 0");
  if (o.max_iters < 1) err("optimizer.max_iters", "must be >= 1");
  if (o.tol_grad < 0.0) err("optimizer.tol_grad", "must be >= 0");
  if (!(o.theta_limit > 0.0)) err("optimizer.theta_limit", "must be positive");

  const auto& co = c.cost;
  if (co.q.rows() != n || co.q.cols() != n) err("cost.q", "must be " + std::to_string(n) + "x" + std::to_string(n));
  if (co.r.rows() != p || co.r.cols() != p) err("cost.r", "must be " + std::to_string(p) + "x" + std::to_string(p));
  if (!(co.discount > 0.0 && co.discount <= 1.0)) err("cost.discount", "must lie in (0, 1]");
  if (co.horizon < 1) err("cost.horizon", "must be >= 1");
  if (co.rollouts < 1) err("cost.rollouts", "must be >= 1");
  if (co.initial_lower.size() != n) err("cost.initial_lower", "must have " + std::to_string(n) + " entries");
  if (co.initial_upper.size() != n) err("cost.initial_upper", "must have " + std::to_string(n) + " entries");
  if (co.initial_lower.size() == n && co.initial_upper.size() == n &&
      !(co.initial_lower.array() <= co.initial_upper.array()).all())
    err("cost.initial_upper", "must be >= cost.initial_lower componentwise");

  const auto& po = c.policy;
  if (!(po.lipschitz_cap > 0.0)) err("policy.lipschitz_cap", "must be positive");
  if (po.hidden < 1) err("policy.hidden", "must be >= 1");
  if (!(po.init_scale > 0.0)) err("policy.init_scale", "must be positive");
  if (po.initial_gain.rows() != p || po.initial_gain.cols() != n)
    err("policy.initial_gain", "must be " + std::to_string(p) + "x" + std::to_string(n));
  if (po.initial_bias.size() != p)
    err("policy.initial_bias", "must have " + std::to_string(p) + " entries");

  const auto& ev = c.evaluation;
  if (ev.rollouts < 1) err("evaluation.rollouts", "must be >= 1");
  if (ev.steps < 1) err("evaluation.steps", "must be >= 1");
  if (!(ev.threshold > 0.0)) err("evaluation.threshold", "must be positive");
  if (ev.neighborhood < 0.0) err("evaluation.neighborhood", "must be >= 0");
  if (c.output.directory.empty()) err("output.directory", "must not be empty");
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
  Json root;
  try {
    root = Json::parse(text);
  } catch (const Json::parse_error& e) {
    fail(ErrorCode::kInvalidConfig, std::string("config: malformed JSON: ") + e.what());
  }
  if (!root.is_object()) fail(ErrorCode::kInvalidConfig, "config: top level must be an object");

  std::vector<std::string> errors;
  Reader rd(errors);
  rd.check_keys(root, "");

  ExperimentConfig c;
  rd.string(&root, "", "plant", c.plant);
  rd.integer(&root, "", "seed", c.seed);
  const Plant* plant = nullptr;
  try {
    plant = &find_plant(c.plant);
  } catch (const Error&) {
    std::string names;
    for (const Plant& p : builtin_plants()) names += (names.empty() ? "" : ", ") + p.name();
    rd.error("plant", "unknown plant '" + c.plant + "' (known: " + names + ")");
  }

  const Json* fe = rd.section(root, "features");
  const Json* ep = rd.section(root, "epoch");
  const Json* ce = rd.section(root, "certificate");
  const Json* ba = rd.section(root, "batch");
  const Json* op = rd.section(root, "optimizer");
  const Json* co = rd.section(root, "cost");
  const Json* po = rd.section(root, "policy");
  const Json* ev = rd.section(root, "evaluation");
  const Json* ou = rd.section(root, "output");

  if (plant == nullptr) {
    std::string msg = "config has errors:";
    for (const auto& e : errors) msg += "\n  " + e;
    fail(ErrorCode::kInvalidConfig, msg);
  }

  const int n = plant->state_dim();
  const int p = plant->input_dim();
  const PlantConstants& k = plant->constants();

  // Plant-dependent defaults.
  c.features.seed = c.seed;
  c.epoch.dither_amplitude = plant->dither_amplitude();
  c.certificate.stability_margin = k.stability_margin;
  c.certificate.g_grad_bound = k.g_grad_bound;
  c.certificate.lipschitz_dynamics = k.lipschitz_dynamics;
  c.certificate.hessian_bound = k.hessian_bound;
  c.batch.lower = plant->box_lower();
  c.batch.upper = plant->box_upper();
  c.cost.q = Eigen::MatrixXd::Identity(n, n);
  c.cost.r = Eigen::MatrixXd::Identity(p, p);
  c.cost.initial_lower = plant->box_lower();
  c.cost.initial_upper = plant->box_upper();
  c.policy.lipschitz_cap = k.lipschitz_policy;
  c.policy.initial_gain = plant->initial_gain();
  c.policy.initial_bias = Eigen::VectorXd::Zero(p);

  rd.integer(fe, "features", "count", c.features.count);
  rd.number(fe, "features", "bandwidth", c.features.bandwidth);
  rd.integer(fe, "features", "seed", c.features.seed);

  std::string mode = to_string(c.epoch.mode);
  rd.string(ep, "epoch", "mode", mode);
  if (mode == "sample_complexity") {
    c.epoch.mode = EpochMode::kSampleComplexity;
  } else if (mode != "manual") {
    rd.error("epoch.mode", "must be \"manual\" or \"sample_complexity\"");
  }
  const bool tau_given = ep != nullptr && ep->contains("tau");
  if (c.epoch.mode == EpochMode::kSampleComplexity) {
    c.epoch.tau = static_cast<std::int64_t>(c.features.count) * c.features.count;
    c.certificate.margin_mode = MarginMode::kBudgetSplit;
  }
  rd.integer(ep, "epoch", "tau", c.epoch.tau);
  rd.integer(ep, "epoch", "max_epochs", c.epoch.max_epochs);
  rd.number(ep, "epoch", "regularizer", c.epoch.regularizer);
  rd.integer(ep, "epoch", "dither_epochs", c.epoch.dither_epochs);
  rd.number(ep, "epoch", "dither_amplitude", c.epoch.dither_amplitude);
  rd.integer(ep, "epoch", "holdout_steps", c.epoch.holdout_steps);

  const bool margin_mode_given = ce != nullptr && ce->contains("margin_mode");
  std::string margin_mode = to_string(c.certificate.margin_mode);
  rd.string(ce, "certificate", "margin_mode", margin_mode);
  try {
    c.certificate.margin_mode = parse_margin_mode(margin_mode);
  } catch (const Error&) {
    rd.error("certificate.margin_mode", "must be model_error, budget_split or fixed");
  }
  rd.number(ce, "certificate", "fixed_margin", c.certificate.fixed_margin);
  rd.number(ce, "certificate", "stability_margin", c.certificate.stability_margin);
  rd.number(ce, "certificate", "g_grad_bound", c.certificate.g_grad_bound);
  rd.number(ce, "certificate", "lipschitz_dynamics", c.certificate.lipschitz_dynamics);
  rd.auto_number(ce, "certificate", "hessian_bound", c.certificate.hessian_bound);
  std::string metric = to_string(c.certificate.metric);
  rd.string(ce, "certificate", "metric", metric);
  if (metric == "identity") c.certificate.metric = MetricMode::kIdentity;
  else if (metric == "lyapunov") c.certificate.metric = MetricMode::kLyapunov;
  else if (metric == "witness") c.certificate.metric = MetricMode::kWitness;
  else rd.error("certificate.metric", "must be identity, lyapunov or witness");
  rd.auto_number(ce, "certificate", "epsilon_pd", c.certificate.epsilon_pd);
  rd.auto_number(ce, "certificate", "fd_step", c.certificate.fd_step);
  rd.integer(ce, "certificate", "probes", c.certificate.probes);

  std::string kind = to_string(c.batch.kind);
  rd.string(ba, "batch", "kind", kind);
  if (kind == "halton") c.batch.kind = BatchKind::kHalton;
  else if (kind != "grid") rd.error("batch.kind", "must be grid or halton");
  rd.vector(ba, "batch", "lower", c.batch.lower);
  rd.vector(ba, "batch", "upper", c.batch.upper);
  rd.integer(ba, "batch", "resolution", c.batch.resolution);
  rd.integer(ba, "batch", "count", c.batch.count);
  rd.integer(ba, "batch", "audit_samples", c.batch.audit_samples);
  rd.boolean(ba, "batch", "redraw", c.batch.redraw);

  rd.number(op, "optimizer", "step_primal", c.optimizer.step_primal);
  rd.number(op, "optimizer", "step_dual", c.optimizer.step_dual);
  rd.number(op, "optimizer", "initial_multiplier", c.optimizer.initial_multiplier);
  rd.integer(op, "optimizer", "max_iters", c.optimizer.max_iters);
  rd.number(op, "optimizer", "tol_grad", c.optimizer.tol_grad);
  rd.number(op, "optimizer", "tol_feas", c.optimizer.tol_feas);
  rd.number(op, "optimizer", "theta_limit", c.optimizer.theta_limit);

  rd.matrix(co, "cost", "q", c.cost.q);
  rd.matrix(co, "cost", "r", c.cost.r);
  rd.number(co, "cost", "discount", c.cost.discount);
  rd.integer(co, "cost", "horizon", c.cost.horizon);
  rd.integer(co, "cost", "rollouts", c.cost.rollouts);
  rd.vector(co, "cost", "initial_lower", c.cost.initial_lower);
  rd.vector(co, "cost", "initial_upper", c.cost.initial_upper);

  std::string arch = to_string(c.policy.architecture);
  rd.string(po, "policy", "architecture", arch);
  try {
    c.policy.architecture = parse_policy_architecture(arch);
  } catch (const Error&) {
    rd.error("policy.architecture", "must be affine or mlp");
  }
  rd.number(po, "policy", "lipschitz_cap", c.policy.lipschitz_cap);
  rd.integer(po, "policy", "hidden", c.policy.hidden);
  rd.number(po, "policy", "init_scale", c.policy.init_scale);
  rd.matrix(po, "policy", "initial_gain", c.policy.initial_gain);
  rd.vector(po, "policy", "initial_bias", c.policy.initial_bias);

  rd.integer(ev, "evaluation", "rollouts", c.evaluation.rollouts);
  rd.integer(ev, "evaluation", "steps", c.evaluation.steps);
  rd.number(ev, "evaluation", "threshold", c.evaluation.threshold);
  rd.number(ev, "evaluation", "neighborhood", c.evaluation.neighborhood);

  rd.string(ou, "output", "directory", c.output.directory);
  rd.boolean(ou, "output", "checkpoints", c.output.checkpoints);
  rd.boolean(ou, "output", "collection_trajectory", c.output.collection_trajectory);

  validate(c, *plant, margin_mode_given, tau_given, errors);
  if (!errors.empty()) {
    std::string msg = "config has errors:";
    for (const auto& e : errors) msg += "\n  " + e;
    fail(ErrorCode::kInvalidConfig, msg);
  }
  c.source_hash = fnv1a_hex(text);
  return c;
}

ExperimentConfig parse_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "config: cannot open '" + path + "'");
  const std::string text((std::istreambuf_iterator<char>(in)),
                         std::istreambuf_iterator<char>());
  try {
    return parse_config_text(text);
  } catch (const Error& e) {
    fail(e.code(), path + ": " + e.what());
  }
}

std::string dump_config(const ExperimentConfig& c) {
  Json j;
  j["plant"] = c.plant;
  j["seed"] = c.seed;
  j["features"] = {{"count", c.features.count},
                   {"bandwidth", c.features.bandwidth},
                   {"seed", c.features.seed}};
  j["epoch"] = {{"mode", to_string(c.epoch.mode)},
                {"tau", c.epoch.tau},
                {"max_epochs", c.epoch.max_epochs},
                {"regularizer", c.epoch.regularizer},
                {"dither_epochs", c.epoch.dither_epochs},
                {"dither_amplitude", c.epoch.dither_amplitude},
                {"holdout_steps", c.epoch.holdout_steps}};
  j["certificate"] = {{"margin_mode", to_string(c.certificate.margin_mode)},
                      {"fixed_margin", c.certificate.fixed_margin},
                      {"stability_margin", c.certificate.stability_margin},
                      {"g_grad_bound", c.certificate.g_grad_bound},
                      {"lipschitz_dynamics", c.certificate.lipschitz_dynamics},
                      {"hessian_bound", auto_or(c.certificate.hessian_bound)},
                      {"metric", to_string(c.certificate.metric)},
                      {"epsilon_pd", auto_or(c.certificate.epsilon_pd)},
                      {"fd_step", auto_or(c.certificate.fd_step)},
                      {"probes", c.certificate.probes}};
  j["batch"] = {{"kind", to_string(c.batch.kind)},
                {"lower", to_json(c.batch.lower)},
                {"upper", to_json(c.batch.upper)},
                {"resolution", c.batch.resolution},
                {"count", c.batch.count},
                {"audit_samples", c.batch.audit_samples},
                {"redraw", c.batch.redraw}};
  j["optimizer"] = {{"step_primal", c.optimizer.step_primal},
                    {"step_dual", c.optimizer.step_dual},
                    {"initial_multiplier", c.optimizer.initial_multiplier},
                    {"max_iters", c.optimizer.max_iters},
                    {"tol_grad", c.optimizer.tol_grad},
                    {"tol_feas", c.optimizer.tol_feas},
                    {"theta_limit", c.optimizer.theta_limit}};
  j["cost"] = {{"q", to_json(c.cost.q)},
               {"r", to_json(c.cost.r)},
               {"discount", c.cost.discount},
               {"horizon", c.cost.horizon},
               {"rollouts", c.cost.rollouts},
               {"initial_lower", to_json(c.cost.initial_lower)},
               {"initial_upper", to_json(c.cost.initial_upper)}};
  j["policy"] = {{"architecture", to_string(c.policy.architecture)},
                 {"lipschitz_cap", c.policy.lipschitz_cap},
                 {"hidden", c.policy.hidden},
                 {"init_scale", c.policy.init_scale},
                 {"initial_gain", to_json(c.policy.initial_gain)},
                 {"initial_bias", to_json(c.policy.initial_bias)}};
  j["evaluation"] = {{"rollouts", c.evaluation.rollouts},
                     {"steps", c.evaluation.steps},
                     {"threshold", c.evaluation.threshold},
                     {"neighborhood", c.evaluation.neighborhood}};
  j["output"] = {{"directory", c.output.directory},
                 {"checkpoints", c.output.checkpoints},
                 {"collection_trajectory", c.output.collection_trajectory}};
  return j.dump(2) + "\n";
}

RepresentativeBatch make_config_batch(const ExperimentConfig& cfg, int epoch) {
  const auto& b = cfg.batch;
  if (b.kind == BatchKind::kGrid) {
    return make_grid_batch(b.lower, b.upper,
                           std::vector<int>(static_cast<std::size_t>(b.lower.size()),
                                            b.resolution));
  }
  const std::uint64_t index = b.redraw ? static_cast<std::uint64_t>(epoch) : 0;
  const std::uint64_t seed = Rng::stream(cfg.seed, streams::kBatch, index).next_u64();
  return make_halton_batch(b.lower, b.upper, b.count, b.audit_samples, seed);
}

MarginPreview preview_margins(const ExperimentConfig& cfg) {
  const Plant& plant = find_plant(cfg.plant);
  const RepresentativeBatch batch = make_config_batch(cfg, 0);
  MarginInputs in;
  in.lipschitz_policy = cfg.policy.lipschitz_cap;
  in.lipschitz_dynamics = cfg.certificate.lipschitz_dynamics;
  in.jacobian_error = 0.0;
  in.metric = cfg.certificate.metric == MetricMode::kWitness
                  ? plant.witness_metric()
                  : Eigen::MatrixXd::Identity(plant.state_dim(), plant.state_dim());
  in.g_grad_bound = cfg.certificate.g_grad_bound;
  in.fill_distance = batch.fill_distance;
  in.margin_assumed = cfg.certificate.stability_margin;
  in.mode = cfg.certificate.margin_mode;
  in.fixed_margin = cfg.certificate.fixed_margin;
  in.batch_margin_override = cfg.certificate.epsilon_pd.value_or(-1.0);

  MarginPreview out;
  out.fill_distance = batch.fill_distance;
  const double g_bound = (1.0 + in.lipschitz_policy) * in.lipschitz_dynamics;
  out.margin_batch = in.batch_margin_override >= 0.0
                         ? in.batch_margin_override
                         : batch_margin(g_bound, spectral_norm(in.metric),
                                        in.g_grad_bound, in.fill_distance);
  try {
    out.certificate = compute_margins(in);
    out.margin_model = out.certificate.margin_model;
    out.feasible = true;
    out.message = "feasible";
  } catch (const Error& e) {
    out.feasible = false;
    out.message = e.what();
  }
  return out;
}

}  // namespace kcrl
