#include "kcrl/kcrl.h"

#include <cstring>
#include <iomanip>
#include <new>
#include <sstream>
#include <string>

#include "kcrl/certificate.hpp"
#include "kcrl/errors.hpp"
#include "kcrl/experiment.hpp"
#include "kcrl/feature_map.hpp"
#include "kcrl/model.hpp"
#include "kcrl/plants.hpp"

struct kcrl_feature_map {
  kcrl::FeatureMap map;
};

struct kcrl_model {
  kcrl::FeatureMap map;
  kcrl::ModelEstimate model;
};

struct kcrl_config {
  kcrl::ExperimentConfig cfg;
};

namespace {

thread_local std::string g_last_error;

kcrl_status to_status(kcrl::ErrorCode code) {
  return static_cast<kcrl_status>(static_cast<int>(code));
}

template <class F>
kcrl_status guarded(F&& body) {
  try {
    g_last_error.clear();
    body();
    return KCRL_OK;
  } catch (const kcrl::Error& e) {
    g_last_error = e.what();
    return to_status(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return KCRL_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return KCRL_INTERNAL;
  } catch (...) {
    g_last_error = "unknown failure";
    return KCRL_INTERNAL;
  }
}

void need(const void* p, const char* what) {
  kcrl::require(p != nullptr, std::string(what) + " must not be NULL");
}

kcrl_status emit_status(const std::string& text, char* buf, size_t cap, size_t* needed) {
  const size_t size = text.size() + 1;
  if (needed != nullptr) *needed = size;
  if (buf == nullptr || cap < size) {
    g_last_error = "buffer too small: " + std::to_string(size) + " bytes needed";
    return KCRL_BUFFER_TOO_SMALL;
  }
  std::memcpy(buf, text.c_str(), size);
  return KCRL_OK;
}

std::string describe_plants() {
  std::ostringstream os;
  os << std::setprecision(6);
  for (const kcrl::Plant& p : kcrl::builtin_plants()) {
    const kcrl::PlantConstants& k = p.constants();
    os << p.name() << ": " << p.description() << "\n";
    os << "  state_dim " << p.state_dim() << ", input_dim " << p.input_dim() << "\n";
    os << "  L_F " << k.lipschitz_dynamics << ", F_H ";
    if (k.hessian_bound) os << *k.hessian_bound; else os << "estimated";
    os << ", Gamma_phi " << k.phi_bound << ", eps_bar " << k.stability_margin
       << ", M_G " << k.g_grad_bound << ", L_u " << k.lipschitz_policy << "\n";
    os << "  equilibrium "
       << (p.equilibrium().kind == kcrl::EquilibriumKind::kPoint ? "point" : "fixed-point set")
       << ", box [" << p.box_lower().transpose() << "] to [" << p.box_upper().transpose()
       << "]\n";
    os << "  witness gain [" << p.witness_policy().gain() << "], initial gain ["
       << p.initial_gain() << "], dither " << p.dither_amplitude() << "\n";
    for (const kcrl::AuditItem& a : kcrl::audit_plant(p)) {
      os << "  audit " << a.name << ": " << (a.passed ? "pass" : "FAIL") << " (" << a.detail
         << ")\n";
    }
  }
  return os.str();
}

}  // namespace

extern "C" {

const char* kcrl_status_string(kcrl_status status) {
  switch (status) {
    case KCRL_OK: return "ok";
    case KCRL_BUFFER_TOO_SMALL: return "buffer-too-small";
    case KCRL_INTERNAL: return "internal";
    default:
      if (status >= KCRL_INVALID_ARGUMENT && status <= KCRL_IO)
        return kcrl::to_string(static_cast<kcrl::ErrorCode>(status));
      return "unknown";
  }
}

const char* kcrl_last_error(void) { return g_last_error.c_str(); }

const char* kcrl_version(void) { return kcrl::kCodeVersion; }

kcrl_status kcrl_feature_map_create(int input_dim, int feature_count, double bandwidth,
                                    uint64_t seed, kcrl_feature_map** out) {
  return guarded([&] {
    need(out, "out");
    *out = nullptr;
    *out = new kcrl_feature_map{
        kcrl::FeatureMap::generate(input_dim, feature_count, bandwidth, seed)};
  });
}

void kcrl_feature_map_free(kcrl_feature_map* map) { delete map; }

kcrl_status kcrl_feature_map_featurize(const kcrl_feature_map* map, const double* phi,
                                       size_t phi_len, double* out, size_t out_len) {
  return guarded([&] {
    need(map, "map");
    need(phi, "phi");
    need(out, "out");
    kcrl::require(phi_len == static_cast<size_t>(map->map.input_dim()),
                  "featurize: phi length must equal the input dimension");
    kcrl::require(out_len == static_cast<size_t>(map->map.feature_count()),
                  "featurize: output length must equal the feature count");
    const Eigen::VectorXd z = map->map.featurize(
        Eigen::Map<const Eigen::VectorXd>(phi, static_cast<Eigen::Index>(phi_len)));
    std::memcpy(out, z.data(), out_len * sizeof(double));
  });
}

kcrl_status kcrl_model_create(const kcrl_feature_map* map, int state_dim,
                              double regularizer, kcrl_model** out) {
  return guarded([&] {
    need(map, "map");
    need(out, "out");
    *out = nullptr;
    kcrl::require(state_dim > 0 && state_dim < map->map.input_dim(),
                  "model: state_dim must be positive and below the feature map input dimension");
    *out = new kcrl_model{map->map, kcrl::ModelEstimate(map->map, state_dim, regularizer)};
  });
}

void kcrl_model_free(kcrl_model* model) { delete model; }

kcrl_status kcrl_model_absorb(kcrl_model* model, const double* state, const double* action,
                              const double* next_state) {
  return guarded([&] {
    need(model, "model");
    need(state, "state");
    need(action, "action");
    need(next_state, "next_state");
    const int n = model->model.state_dim();
    const int p = model->map.input_dim() - n;
    kcrl::Transition tr;
    tr.state = Eigen::Map<const Eigen::VectorXd>(state, n);
    tr.action = Eigen::Map<const Eigen::VectorXd>(action, p);
    tr.next_state = Eigen::Map<const Eigen::VectorXd>(next_state, n);
    tr.time_index = model->model.sample_count();
    model->model.absorb(model->map, tr);
  });
}

kcrl_status kcrl_model_predict(const kcrl_model* model, const double* state,
                               const double* action, double* next_state) {
  return guarded([&] {
    need(model, "model");
    need(state, "state");
    need(action, "action");
    need(next_state, "next_state");
    const int n = model->model.state_dim();
    const int p = model->map.input_dim() - n;
    Eigen::VectorXd phi(n + p);
    phi << Eigen::Map<const Eigen::VectorXd>(state, n),
        Eigen::Map<const Eigen::VectorXd>(action, p);
    const Eigen::VectorXd y = model->model.predict(model->map, phi);
    std::memcpy(next_state, y.data(), static_cast<size_t>(n) * sizeof(double));
  });
}

kcrl_status kcrl_model_sample_count(const kcrl_model* model, int64_t* out) {
  return guarded([&] {
    need(model, "model");
    need(out, "out");
    *out = model->model.sample_count();
  });
}

kcrl_status kcrl_compute_margins(const kcrl_margin_inputs* in, kcrl_margins* out) {
  return guarded([&] {
    need(in, "inputs");
    need(out, "out");
    need(in->metric, "inputs.metric");
    kcrl::require(in->metric_dim > 0, "inputs.metric_dim must be positive");
    kcrl::MarginInputs mi;
    mi.lipschitz_policy = in->lipschitz_policy;
    mi.lipschitz_dynamics = in->lipschitz_dynamics;
    mi.jacobian_error = in->jacobian_error;
    mi.metric = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                               Eigen::RowMajor>>(in->metric, in->metric_dim,
                                                                 in->metric_dim);
    mi.g_grad_bound = in->g_grad_bound;
    mi.fill_distance = in->fill_distance;
    mi.margin_assumed = in->margin_assumed;
    switch (in->mode) {
      case KCRL_MARGIN_MODEL_ERROR: mi.mode = kcrl::MarginMode::kModelError; break;
      case KCRL_MARGIN_BUDGET_SPLIT: mi.mode = kcrl::MarginMode::kBudgetSplit; break;
      case KCRL_MARGIN_FIXED: mi.mode = kcrl::MarginMode::kFixed; break;
      default: kcrl::fail(kcrl::ErrorCode::kInvalidArgument, "unknown margin mode");
    }
    mi.fixed_margin = in->fixed_margin;
    mi.batch_margin_override = in->batch_margin_override;
    const kcrl::StabilityCertificate c = kcrl::compute_margins(mi);
    out->margin_model = c.margin_model;
    out->margin_batch = c.margin_batch;
    out->g_bound = c.g_bound;
    out->metric_norm = c.metric_norm;
    out->feasible = c.feasible ? 1 : 0;
  });
}

kcrl_status kcrl_config_load(const char* path, kcrl_config** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = nullptr;
    *out = new kcrl_config{kcrl::parse_config(path)};
  });
}

kcrl_status kcrl_config_parse(const char* text, kcrl_config** out) {
  return guarded([&] {
    need(text, "text");
    need(out, "out");
    *out = nullptr;
    *out = new kcrl_config{kcrl::parse_config_text(text)};
  });
}

void kcrl_config_free(kcrl_config* cfg) { delete cfg; }

kcrl_status kcrl_config_dump(const kcrl_config* cfg, char* buf, size_t cap, size_t* needed) {
  std::string text;
  const kcrl_status st = guarded([&] {
    need(cfg, "config");
    text = kcrl::dump_config(cfg->cfg);
  });
  return st != KCRL_OK ? st : emit_status(text, buf, cap, needed);
}

kcrl_status kcrl_config_margins(const kcrl_config* cfg, int* feasible, char* buf, size_t cap,
                                size_t* needed) {
  std::string text;
  const kcrl_status st = guarded([&] {
    need(cfg, "config");
    const kcrl::MarginPreview m = kcrl::preview_margins(cfg->cfg);
    std::ostringstream os;
    os << std::setprecision(10);
    os << "plant " << cfg->cfg.plant << ", margin mode "
       << kcrl::to_string(cfg->cfg.certificate.margin_mode) << ", metric "
       << kcrl::to_string(cfg->cfg.certificate.metric) << "\n";
    os << "fill distance h   " << m.fill_distance << "\n";
    os << "eps_bar           " << cfg->cfg.certificate.stability_margin << "\n";
    os << "eps_pd            " << m.margin_batch << "\n";
    os << "eps_i             " << m.margin_model << "  (eps_J = 0 before any data)\n";
    os << "feasible          " << (m.feasible ? "yes" : "no") << "\n";
    if (!m.feasible) os << "reason            " << m.message << "\n";
    text = os.str();
    if (feasible != nullptr) *feasible = m.feasible ? 1 : 0;
  });
  return st != KCRL_OK ? st : emit_status(text, buf, cap, needed);
}

void kcrl_run_options_init(kcrl_run_options* options) {
  if (options == nullptr) return;
  options->resume_path = nullptr;
  options->stop_after_epoch = -1;
  options->output_directory = nullptr;
  options->verbose = 0;
}

kcrl_status kcrl_run(const kcrl_config* cfg, const kcrl_run_options* options,
                     kcrl_run_result* out) {
  return guarded([&] {
    need(cfg, "config");
    need(out, "out");
    kcrl::RunOptions ro;
    if (options != nullptr) {
      if (options->resume_path != nullptr) ro.resume_path = options->resume_path;
      ro.stop_after_epoch = options->stop_after_epoch;
      if (options->output_directory != nullptr) ro.output_directory = options->output_directory;
      ro.verbose = options->verbose != 0;
    }
    const kcrl::ExperimentReport r = kcrl::run_experiment(cfg->cfg, ro);
    out->exit_code = r.exit_code;
    out->epochs_completed = static_cast<int>(r.epochs.size());
    out->final_feasible = r.final_feasible ? 1 : 0;
    out->final_max_dist = r.final_max_dist;
  });
}

kcrl_status kcrl_verify_checkpoint(const char* path, int* passed, char* buf, size_t cap,
                                   size_t* needed) {
  std::string text;
  const kcrl_status st = guarded([&] {
    need(path, "path");
    const kcrl::VerificationReport rep = kcrl::verify_checkpoint(path);
    std::ostringstream os;
    for (const kcrl::AuditItem& item : rep.items) {
      os << (item.passed ? "PASS " : "FAIL ") << item.name << ": " << item.detail << "\n";
    }
    os << (rep.passed ? "checkpoint OK" : "checkpoint FAILED verification") << "\n";
    text = os.str();
    if (passed != nullptr) *passed = rep.passed ? 1 : 0;
  });
  return st != KCRL_OK ? st : emit_status(text, buf, cap, needed);
}

kcrl_status kcrl_plants_describe(char* buf, size_t cap, size_t* needed) {
  std::string text;
  const kcrl_status st = guarded([&] { text = describe_plants(); });
  return st != KCRL_OK ? st : emit_status(text, buf, cap, needed);
}

}  // extern "C"
