#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include "kcrl/errors.hpp"
#include "kcrl/experiment.hpp"

namespace kcrl {

namespace {

constexpr const char* kMagic = "kcrl-checkpoint";
constexpr int kFormatVersion = 1;

class Writer {
 public:
  void key(const char* name) { out_ << name; }
  void str(const std::string& s) { out_ << ' ' << s; }
  void integer(long long v) { out_ << ' ' << v; }
  void uinteger(unsigned long long v) { out_ << ' ' << v; }
  void real(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%a", v);
    out_ << ' ' << buf;
  }
  void end_line() { out_ << '\n'; }

  void scalar(const char* name, double v) { key(name); real(v); end_line(); }
  void count(const char* name, long long v) { key(name); integer(v); end_line(); }
  void text(const char* name, const std::string& s) {
    key(name);
    str(s.empty() ? "-" : s);
    end_line();
  }
  void vector(const char* name, const Eigen::VectorXd& v) {
    key(name);
    integer(v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) real(v(i));
    end_line();
  }
  void matrix(const char* name, const Eigen::MatrixXd& m) {
    key(name);
    integer(m.rows());
    integer(m.cols());
    end_line();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) real(m(i, j));
      end_line();
    }
  }

  std::string result() const { return out_.str(); }

 private:
  std::ostringstream out_;
};

class Reader {
 public:
  explicit Reader(std::string text) : text_(std::move(text)) {}

  std::string token() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    if (pos_ >= text_.size()) fail(ErrorCode::kParse, "checkpoint: unexpected end of file");
    const std::size_t start = pos_;
    while (pos_ < text_.size() && !std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    return text_.substr(start, pos_ - start);
  }

  void expect(const std::string& want) {
    const std::string got = token();
    if (got != want) {
      fail(ErrorCode::kParse, "checkpoint: expected '" + want + "', found '" + got + "'");
    }
  }

  double real() {
    const std::string t = token();
    errno = 0;
    char* end = nullptr;
    const double v = std::strtod(t.c_str(), &end);
    if (end == t.c_str() || *end != '\0') {
      fail(ErrorCode::kParse, "checkpoint: bad number '" + t + "'");
    }
    return v;
  }

  long long integer() {
    const std::string t = token();
    char* end = nullptr;
    const long long v = std::strtoll(t.c_str(), &end, 10);
    if (end == t.c_str() || *end != '\0') {
      fail(ErrorCode::kParse, "checkpoint: bad integer '" + t + "'");
    }
    return v;
  }

  unsigned long long uinteger() {
    const std::string t = token();
    char* end = nullptr;
    const unsigned long long v = std::strtoull(t.c_str(), &end, 10);
    if (end == t.c_str() || *end != '\0' || t[0] == '-') {
      fail(ErrorCode::kParse, "checkpoint: bad unsigned integer '" + t + "'");
    }
    return v;
  }

  double scalar(const char* name) { expect(name); return real(); }
  long long count(const char* name) { expect(name); return integer(); }
  std::string text(const char* name) {
    expect(name);
    std::string s = token();
    return s == "-" ? std::string() : s;
  }

  Eigen::Index dimension(long long limit = 1 << 24) {
    const long long v = integer();
    if (v < 0 || v > limit) fail(ErrorCode::kParse, "checkpoint: implausible dimension");
    return static_cast<Eigen::Index>(v);
  }

  Eigen::VectorXd vector(const char* name) {
    expect(name);
    Eigen::VectorXd v(dimension());
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = real();
    return v;
  }

  Eigen::MatrixXd matrix(const char* name) {
    expect(name);
    const Eigen::Index r = dimension();
    const Eigen::Index c = dimension();
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
      for (Eigen::Index j = 0; j < c; ++j) m(i, j) = real();
    return m;
  }

 private:
  std::string text_;
  std::size_t pos_ = 0;
};

void write_record(Writer& w, const EpochRecord& r) {
  w.key("record");
  w.integer(r.epoch);
  w.integer(r.transitions);
  w.str(r.status);
  for (double v : {r.model_error, r.hessian_bound, r.fd_step, r.jacobian_error,
                   r.true_jacobian_error, r.margin_model, r.margin_batch,
                   r.margin_assumed, r.fill_distance, r.metric_norm, r.excitation})
    w.real(v);
  w.integer(r.iterations);
  w.real(r.multiplier);
  w.real(r.constraint_value);
  w.integer(r.feasible ? 1 : 0);
  w.real(r.cost);
  w.str(r.policy_id);
  const EvaluationSummary& e = r.evaluation;
  w.real(e.max_final_dist);
  w.real(e.mean_final_dist);
  w.real(e.max_decay_rate);
  w.integer(e.lyapunov_violations);
  w.integer(e.lyapunov_checked);
  w.integer(e.diverged);
  w.integer(e.reached);
  w.end_line();
}

EpochRecord read_record(Reader& rd) {
  rd.expect("record");
  EpochRecord r;
  r.epoch = static_cast<int>(rd.integer());
  r.transitions = rd.integer();
  r.status = rd.token();
  for (double* v : {&r.model_error, &r.hessian_bound, &r.fd_step, &r.jacobian_error,
                    &r.true_jacobian_error, &r.margin_model, &r.margin_batch,
                    &r.margin_assumed, &r.fill_distance, &r.metric_norm, &r.excitation})
    *v = rd.real();
  r.iterations = static_cast<int>(rd.integer());
  r.multiplier = rd.real();
  r.constraint_value = rd.real();
  r.feasible = rd.integer() != 0;
  r.cost = rd.real();
  r.policy_id = rd.token();
  EvaluationSummary& e = r.evaluation;
  e.max_final_dist = rd.real();
  e.mean_final_dist = rd.real();
  e.max_decay_rate = rd.real();
  e.lyapunov_violations = static_cast<int>(rd.integer());
  e.lyapunov_checked = static_cast<int>(rd.integer());
  e.diverged = static_cast<int>(rd.integer());
  e.reached = static_cast<int>(rd.integer());
  return r;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "checkpoint: cannot open '" + path + "'");
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

}  // namespace

void save_checkpoint(const Checkpoint& c, const std::string& path) {
  require(c.feature_map && c.model && c.policy,
          "checkpoint: feature map, model and policy are required");
  Writer w;
  w.key(kMagic);
  w.integer(kFormatVersion);
  w.end_line();

  w.key("[meta]");
  w.end_line();
  w.text("code_version", kCodeVersion);
  w.text("settings_hash", c.settings_hash);
  w.text("plant", c.plant);
  w.count("epochs_completed", c.epochs_completed);
  w.count("metrics_bytes", static_cast<long long>(c.metrics_bytes));
  w.count("epochs_bytes", static_cast<long long>(c.epochs_bytes));

  const FeatureMap& fm = *c.feature_map;
  w.key("[feature_map]");
  w.end_line();
  w.scalar("bandwidth", fm.bandwidth());
  w.key("seed");
  w.uinteger(fm.seed());
  w.end_line();
  w.text("fingerprint", fm.fingerprint());
  w.matrix("frequencies", fm.frequencies());
  w.vector("phases", fm.phases());

  const ModelEstimate& m = *c.model;
  w.key("[model]");
  w.end_line();
  w.scalar("regularizer", m.regularizer());
  w.count("sample_count", m.sample_count());
  w.text("feature_map_ref", m.feature_map_ref());
  w.matrix("weights", m.weights());
  w.matrix("gram", m.gram());
  w.matrix("cross", m.cross());

  const Policy& p = *c.policy;
  w.key("[policy]");
  w.end_line();
  w.text("architecture", to_string(p.architecture()));
  w.count("state_dim", p.state_dim());
  w.count("input_dim", p.input_dim());
  w.count("hidden", p.hidden());
  w.scalar("lipschitz_cap", p.lipschitz_cap());
  w.vector("parameters", p.parameters());

  w.key("[dual]");
  w.end_line();
  w.scalar("multiplier", c.dual.multiplier);
  w.scalar("step_primal", c.dual.step_primal);
  w.scalar("step_dual", c.dual.step_dual);
  w.count("iteration", c.dual.iteration);

  w.key("[certificate]");
  w.end_line();
  w.count("present", c.certificate ? 1 : 0);
  if (c.certificate) {
    const StabilityCertificate& s = *c.certificate;
    w.matrix("metric", s.metric);
    w.scalar("metric_norm", s.metric_norm);
    w.scalar("margin_model", s.margin_model);
    w.scalar("margin_batch", s.margin_batch);
    w.scalar("margin_assumed", s.margin_assumed);
    w.scalar("lipschitz_policy", s.lipschitz_policy);
    w.scalar("lipschitz_dynamics", s.lipschitz_dynamics);
    w.scalar("jacobian_error", s.jacobian_error);
    w.scalar("g_bound", s.g_bound);
    w.scalar("g_grad_bound", s.g_grad_bound);
    w.text("mode", to_string(s.mode));
    w.count("feasible", s.feasible ? 1 : 0);
  }

  w.key("[plant_state]");
  w.end_line();
  w.vector("state", c.plant_state);
  w.count("time", c.plant_time);

  w.key("[records]");
  w.end_line();
  w.count("count", static_cast<long long>(c.records.size()));
  for (const EpochRecord& r : c.records) write_record(w, r);
  w.key("end");
  w.end_line();

  const std::filesystem::path target(path);
  if (target.has_parent_path()) std::filesystem::create_directories(target.parent_path());
  // Write then rename so a crash never leaves a half-written checkpoint behind.
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::kIo, "checkpoint: cannot write '" + tmp + "'");
    out << w.result();
    out.flush();
    if (!out) fail(ErrorCode::kIo, "checkpoint: write failed for '" + tmp + "'");
  }
  std::filesystem::rename(tmp, target);
}

Checkpoint load_checkpoint(const std::string& path) {
  Reader rd(read_file(path));
  rd.expect(kMagic);
  if (rd.integer() != kFormatVersion) fail(ErrorCode::kParse, "checkpoint: unsupported format version");

  Checkpoint c;
  rd.expect("[meta]");
  rd.text("code_version");
  c.settings_hash = rd.text("settings_hash");
  c.plant = rd.text("plant");
  c.epochs_completed = static_cast<int>(rd.count("epochs_completed"));
  c.metrics_bytes = static_cast<std::uint64_t>(rd.count("metrics_bytes"));
  c.epochs_bytes = static_cast<std::uint64_t>(rd.count("epochs_bytes"));

  rd.expect("[feature_map]");
  const double bandwidth = rd.scalar("bandwidth");
  rd.expect("seed");
  const std::uint64_t seed = rd.uinteger();
  rd.text("fingerprint");
  Eigen::MatrixXd freq = rd.matrix("frequencies");
  Eigen::VectorXd phases = rd.vector("phases");

  rd.expect("[model]");
  const double reg = rd.scalar("regularizer");
  const long long count = rd.count("sample_count");
  std::string ref = rd.text("feature_map_ref");
  Eigen::MatrixXd weights = rd.matrix("weights");
  Eigen::MatrixXd gram = rd.matrix("gram");
  Eigen::MatrixXd cross = rd.matrix("cross");

  rd.expect("[policy]");
  const std::string arch = rd.text("architecture");
  const int n = static_cast<int>(rd.count("state_dim"));
  const int p = static_cast<int>(rd.count("input_dim"));
  const int hidden = static_cast<int>(rd.count("hidden"));
  const double cap = rd.scalar("lipschitz_cap");
  Eigen::VectorXd theta = rd.vector("parameters");

  rd.expect("[dual]");
  c.dual.multiplier = rd.scalar("multiplier");
  c.dual.step_primal = rd.scalar("step_primal");
  c.dual.step_dual = rd.scalar("step_dual");
  c.dual.iteration = rd.count("iteration");

  rd.expect("[certificate]");
  if (rd.count("present") != 0) {
    StabilityCertificate s;
    s.metric = rd.matrix("metric");
    s.metric_norm = rd.scalar("metric_norm");
    s.margin_model = rd.scalar("margin_model");
    s.margin_batch = rd.scalar("margin_batch");
    s.margin_assumed = rd.scalar("margin_assumed");
    s.lipschitz_policy = rd.scalar("lipschitz_policy");
    s.lipschitz_dynamics = rd.scalar("lipschitz_dynamics");
    s.jacobian_error = rd.scalar("jacobian_error");
    s.g_bound = rd.scalar("g_bound");
    s.g_grad_bound = rd.scalar("g_grad_bound");
    const std::string mode = rd.text("mode");
    s.feasible = rd.count("feasible") != 0;
    try {
      s.mode = parse_margin_mode(mode);
    } catch (const Error&) {
      fail(ErrorCode::kParse, "checkpoint: unknown margin mode '" + mode + "'");
    }
    c.certificate = std::move(s);
  }

  rd.expect("[plant_state]");
  c.plant_state = rd.vector("state");
  c.plant_time = rd.count("time");

  rd.expect("[records]");
  const long long nrec = rd.count("count");
  if (nrec < 0) fail(ErrorCode::kParse, "checkpoint: negative record count");
  for (long long i = 0; i < nrec; ++i) c.records.push_back(read_record(rd));
  rd.expect("end");

  // Object construction re-validates shapes; map those failures to parse errors.
  try {
    c.feature_map.emplace(std::move(freq), std::move(phases), bandwidth, seed);
    c.model.emplace(std::move(weights), std::move(gram), std::move(cross), reg,
                    count, std::move(ref));
    c.policy = Policy::from_parameters(parse_policy_architecture(arch), n, p,
                                       hidden, cap, std::move(theta));
  } catch (const Error& e) {
    fail(ErrorCode::kParse, std::string("checkpoint: inconsistent contents: ") + e.what());
  }
  return c;
}

VerificationReport verify_checkpoint(const std::string& path) {
  VerificationReport rep;
  auto add = [&](const std::string& name, bool ok, const std::string& detail) {
    rep.items.push_back({name, ok, detail});
  };
  Checkpoint c;
  try {
    c = load_checkpoint(path);
  } catch (const Error& e) {
    add("parse", false, e.what());
    rep.passed = false;
    return rep;
  }
  add("parse", true, "loaded " + std::to_string(c.epochs_completed) + " completed epochs");

  const ModelEstimate& m = *c.model;
  const Eigen::MatrixXd& g = m.gram();
  {
    const double asym = (g - g.transpose()).cwiseAbs().maxCoeff();
    const double scale = std::max(1.0, g.cwiseAbs().maxCoeff());
    std::ostringstream os;
    os << "max |G - G'| = " << asym;
    add("gram_symmetric", asym <= 1e-12 * scale, os.str());
  }
  {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (g + g.transpose()),
                                                      Eigen::EigenvaluesOnly);
    const double lo = es.eigenvalues()(0);
    Eigen::LLT<Eigen::MatrixXd> llt(g);
    std::ostringstream os;
    os << "min eigenvalue " << lo;
    add("gram_positive_definite", llt.info() == Eigen::Success && lo > 0.0, os.str());
  }
  {
    // Stored weights, not a fresh solve.
    const Eigen::MatrixXd& w = m.weights();
    const double cn = m.cross().norm();
    const double res = cn > 0.0 ? (g * w - m.cross()).norm() / cn : (g * w).norm();
    std::ostringstream os;
    os << "relative residual " << res;
    add("closed_form_residual", std::isfinite(res) && res <= 1e-8, os.str());
  }
  {
    const std::string fp = c.feature_map->fingerprint();
    add("feature_map_reference", fp == m.feature_map_ref(),
        "model references " + m.feature_map_ref() + ", map is " + fp);
  }
  {
    const double bound = c.policy->lipschitz_bound();
    const double cap = c.policy->lipschitz_cap();
    std::ostringstream os;
    os << "Lipschitz bound " << bound << " vs cap " << cap;
    add("policy_lipschitz_cap", bound <= cap * (1.0 + 1e-12), os.str());
  }
  if (c.certificate) {
    const Eigen::MatrixXd& mm = c.certificate->metric;
    const double asym = (mm - mm.transpose()).cwiseAbs().maxCoeff();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (mm + mm.transpose()),
                                                      Eigen::EigenvaluesOnly);
    std::ostringstream os;
    os << "min eigenvalue " << es.eigenvalues()(0) << ", asymmetry " << asym;
    add("metric_positive_definite",
        asym <= 1e-10 * std::max(1.0, mm.cwiseAbs().maxCoeff()) && es.eigenvalues()(0) > 0.0,
        os.str());
  } else {
    add("metric_positive_definite", true, "no certificate stored (infeasible epoch)");
  }
  {
    std::ostringstream os;
    os << "multiplier " << c.dual.multiplier;
    add("multiplier_nonnegative", c.dual.multiplier >= 0.0, os.str());
  }
  rep.passed = true;
  for (const auto& item : rep.items) rep.passed = rep.passed && item.passed;
  return rep;
}

}  // namespace kcrl
