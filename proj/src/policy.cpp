#include "kcrl/policy.hpp"

#include <Eigen/SVD>
#include <cmath>

#include "kcrl/errors.hpp"
#include "kcrl/rng.hpp"

namespace kcrl {

const char* to_string(PolicyArchitecture arch) {
  return arch == PolicyArchitecture::kAffine ? "affine" : "mlp";
}

PolicyArchitecture parse_policy_architecture(const std::string& name) {
  if (name == "affine") return PolicyArchitecture::kAffine;
  if (name == "mlp") return PolicyArchitecture::kMlp;
  fail(ErrorCode::kInvalidArgument, "unknown policy architecture '" + name + "'");
}

double spectral_norm(const Eigen::Ref<const Eigen::MatrixXd>& m) {
  if (m.size() == 0) return 0.0;
  if (m.rows() == 1 || m.cols() == 1) return m.norm();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  return svd.singularValues()(0);
}

namespace {

int parameter_count_for(PolicyArchitecture arch, int n, int p, int h) {
  return arch == PolicyArchitecture::kAffine ? p * n + p
                                             : h * n + h + p * h + p;
}

}  // namespace

Policy::Policy(PolicyArchitecture arch, int n, int p, int hidden, double cap,
               Eigen::VectorXd theta)
    : arch_(arch), n_(n), p_(p), hidden_(hidden), cap_(cap),
      theta_(std::move(theta)) {
  require(n > 0 && p > 0, "policy: dimensions must be positive");
  require(std::isfinite(cap) && cap > 0.0, "policy: Lipschitz cap must be positive");
  require(arch == PolicyArchitecture::kAffine || hidden > 0,
          "policy: hidden width must be positive");
  require(theta_.size() == parameter_count_for(arch, n, p, hidden),
          "policy: parameter vector has the wrong length");
  require(theta_.allFinite(), "policy: non-finite parameters");
}

Policy Policy::affine(Eigen::MatrixXd gain, Eigen::VectorXd bias,
                      double lipschitz_cap) {
  require(bias.size() == gain.rows(), "policy: bias length must equal gain rows");
  const int p = static_cast<int>(gain.rows());
  const int n = static_cast<int>(gain.cols());
  Eigen::VectorXd theta(p * n + p);
  theta << Eigen::Map<const Eigen::VectorXd>(gain.data(), p * n), bias;
  return Policy(PolicyArchitecture::kAffine, n, p, 0, lipschitz_cap,
                std::move(theta));
}

Policy Policy::mlp(int state_dim, int input_dim, int hidden,
                   double lipschitz_cap, std::uint64_t seed, double init_scale) {
  const int q = parameter_count_for(PolicyArchitecture::kMlp, state_dim,
                                    input_dim, hidden);
  Rng rng = Rng::stream(seed, streams::kPolicyInit);
  Eigen::VectorXd theta(q);
  for (int i = 0; i < q; ++i) theta(i) = init_scale * rng.normal();
  Policy out(PolicyArchitecture::kMlp, state_dim, input_dim, hidden,
             lipschitz_cap, std::move(theta));
  out.project();
  return out;
}

Policy Policy::from_parameters(PolicyArchitecture arch, int state_dim,
                               int input_dim, int hidden, double lipschitz_cap,
                               Eigen::VectorXd parameters) {
  return Policy(arch, state_dim, input_dim, hidden, lipschitz_cap,
                std::move(parameters));
}

Policy Policy::with_parameters(Eigen::VectorXd parameters) const {
  return Policy(arch_, n_, p_, hidden_, cap_, std::move(parameters));
}

void Policy::check_state(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (x.size() != n_) {
    fail(ErrorCode::kInvalidArgument,
         "policy: expected state of length " + std::to_string(n_));
  }
  if (!x.allFinite()) fail(ErrorCode::kInvalidArgument, "policy: non-finite state");
}

Eigen::MatrixXd Policy::gain() const {
  require(arch_ == PolicyArchitecture::kAffine, "policy: gain() on a non-affine policy");
  return Eigen::Map<const Eigen::MatrixXd>(theta_.data(), p_, n_);
}

Eigen::VectorXd Policy::bias() const {
  require(arch_ == PolicyArchitecture::kAffine, "policy: bias() on a non-affine policy");
  return theta_.tail(p_);
}

Eigen::VectorXd Policy::evaluate(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  check_state(x);
  if (arch_ == PolicyArchitecture::kAffine) {
    Eigen::Map<const Eigen::MatrixXd> k(theta_.data(), p_, n_);
    return k * x + theta_.tail(p_);
  }
  const int h = hidden_;
  Eigen::Map<const Eigen::MatrixXd> w1(theta_.data(), h, n_);
  Eigen::Map<const Eigen::VectorXd> b1(theta_.data() + h * n_, h);
  Eigen::Map<const Eigen::MatrixXd> w2(theta_.data() + h * n_ + h, p_, h);
  Eigen::Map<const Eigen::VectorXd> b2(theta_.data() + h * n_ + h + p_ * h, p_);
  const Eigen::VectorXd s = (w1 * x + b1).array().tanh().matrix();
  return w2 * s + b2;
}

Eigen::MatrixXd Policy::state_jacobian(
    const Eigen::Ref<const Eigen::VectorXd>& x) const {
  check_state(x);
  if (arch_ == PolicyArchitecture::kAffine) {
    return Eigen::Map<const Eigen::MatrixXd>(theta_.data(), p_, n_);
  }
  const int h = hidden_;
  Eigen::Map<const Eigen::MatrixXd> w1(theta_.data(), h, n_);
  Eigen::Map<const Eigen::VectorXd> b1(theta_.data() + h * n_, h);
  Eigen::Map<const Eigen::MatrixXd> w2(theta_.data() + h * n_ + h, p_, h);
  const Eigen::ArrayXd s = (w1 * x + b1).array().tanh();
  const Eigen::VectorXd d = (1.0 - s.square()).matrix();
  return w2 * d.asDiagonal() * w1;
}

Eigen::MatrixXd Policy::parameter_jacobian(
    const Eigen::Ref<const Eigen::VectorXd>& x) const {
  check_state(x);
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(p_, theta_.size());
  if (arch_ == PolicyArchitecture::kAffine) {
    for (int k = 0; k < n_; ++k)
      for (int r = 0; r < p_; ++r) out(r, r + k * p_) = x(k);
    out.rightCols(p_).setIdentity();
    return out;
  }
  const int h = hidden_;
  Eigen::Map<const Eigen::MatrixXd> w1(theta_.data(), h, n_);
  Eigen::Map<const Eigen::VectorXd> b1(theta_.data() + h * n_, h);
  Eigen::Map<const Eigen::MatrixXd> w2(theta_.data() + h * n_ + h, p_, h);
  const Eigen::ArrayXd s = (w1 * x + b1).array().tanh();
  const Eigen::ArrayXd d = 1.0 - s.square();
  const int off_b1 = h * n_;
  const int off_w2 = off_b1 + h;
  const int off_b2 = off_w2 + p_ * h;
  for (int i = 0; i < h; ++i) {
    const Eigen::VectorXd col = w2.col(i) * d(i);
    for (int k = 0; k < n_; ++k) out.col(i + k * h) = col * x(k);
    out.col(off_b1 + i) = col;
    for (int r = 0; r < p_; ++r) out(r, off_w2 + r + i * p_) = s(i);
  }
  out.middleCols(off_b2, p_).setIdentity();
  return out;
}

double Policy::lipschitz_bound() const {
  if (arch_ == PolicyArchitecture::kAffine) {
    return spectral_norm(Eigen::Map<const Eigen::MatrixXd>(theta_.data(), p_, n_));
  }
  const int h = hidden_;
  Eigen::Map<const Eigen::MatrixXd> w1(theta_.data(), h, n_);
  Eigen::Map<const Eigen::MatrixXd> w2(theta_.data() + h * n_ + h, p_, h);
  return spectral_norm(w1) * spectral_norm(w2);
}

bool Policy::project() {
  const double bound = lipschitz_bound();
  if (bound <= cap_) return false;
  if (arch_ == PolicyArchitecture::kAffine) {
    theta_.head(p_ * n_) *= cap_ / bound;
    return true;
  }
  const int h = hidden_;
  const double s = std::sqrt(cap_ / bound);
  theta_.head(h * n_) *= s;
  theta_.segment(h * n_ + h, p_ * h) *= s;
  return true;
}

void CostSpec::validate(int state_dim, int input_dim) const {
  require(q.rows() == state_dim && q.cols() == state_dim, "cost: Q must be n x n");
  require(r.rows() == input_dim && r.cols() == input_dim, "cost: R must be p x p");
  require(discount > 0.0 && discount < 1.0, "cost: discount must lie in (0, 1)");
  require(horizon > 0, "cost: horizon must be positive");
  require((q - q.transpose()).norm() <= 1e-12 * (1.0 + q.norm()) &&
              (r - r.transpose()).norm() <= 1e-12 * (1.0 + r.norm()),
          "cost: Q and R must be symmetric");
  if (initial_states.empty()) {
    require(initial_lower.size() == state_dim && initial_upper.size() == state_dim,
            "cost: initial state box must have state dimension");
    require((initial_lower.array() <= initial_upper.array()).all(),
            "cost: initial state box lower > upper");
  }
  for (const auto& x : initial_states)
    require(x.size() == state_dim, "cost: initial state has the wrong length");
}

std::vector<Eigen::VectorXd> sample_initial_states(const CostSpec& cost,
                                                   int n_rollouts,
                                                   std::uint64_t seed) {
  if (!cost.initial_states.empty()) return cost.initial_states;
  require(n_rollouts > 0, "cost: rollout count must be positive");
  Rng rng = Rng::stream(seed, streams::kCostInitialStates);
  std::vector<Eigen::VectorXd> out;
  out.reserve(n_rollouts);
  const auto n = cost.initial_lower.size();
  for (int i = 0; i < n_rollouts; ++i) {
    Eigen::VectorXd x(n);
    for (Eigen::Index k = 0; k < n; ++k)
      x(k) = rng.uniform(cost.initial_lower(k), cost.initial_upper(k));
    out.push_back(std::move(x));
  }
  return out;
}

namespace {

CostGradient rollout_cost(const Policy& policy, const DynamicsModel& model,
                          const CostSpec& cost, int n_rollouts,
                          std::uint64_t seed, bool with_gradient) {
  const int n = model.state_dim();
  const int p = model.input_dim();
  require(policy.state_dim() == n && policy.input_dim() == p,
          "cost gradient: policy and model dimensions differ");
  cost.validate(n, p);
  const auto starts = sample_initial_states(cost, n_rollouts, seed);
  const int q = policy.parameter_count();

  CostGradient out;
  out.gradient = Eigen::VectorXd::Zero(q);
  Eigen::VectorXd phi(n + p);
  for (const Eigen::VectorXd& x0 : starts) {
    Eigen::VectorXd x = x0;
    Eigen::MatrixXd sens = Eigen::MatrixXd::Zero(n, q);  // dx/dtheta
    double disc = 1.0;
    for (int t = 0; t < cost.horizon; ++t) {
      const Eigen::VectorXd u = policy.evaluate(x);
      out.cost += disc * (x.dot(cost.q * x) + u.dot(cost.r * u));
      phi << x, u;
      if (with_gradient) {
        const Eigen::MatrixXd du =
            policy.state_jacobian(x) * sens + policy.parameter_jacobian(x);
        out.gradient.noalias() += disc * 2.0 *
            (sens.transpose() * (cost.q * x) + du.transpose() * (cost.r * u));
        const Eigen::MatrixXd jf = model.jacobian(phi);
        sens = jf.leftCols(n) * sens + jf.rightCols(p) * du;
      }
      x = model.next_state(phi);
      disc *= cost.discount;
      if (!x.allFinite() || x.norm() > kDivergenceThreshold) {
        throw RolloutDivergence("cost rollout diverged at step " +
                                    std::to_string(t + 1) + " (seed " +
                                    std::to_string(seed) + ")",
                                seed);
      }
    }
  }
  const double inv = 1.0 / static_cast<double>(starts.size());
  out.cost *= inv;
  out.gradient *= inv;
  return out;
}

}  // namespace

CostGradient estimate_cost_gradient(const Policy& policy,
                                    const DynamicsModel& model,
                                    const CostSpec& cost, int n_rollouts,
                                    std::uint64_t seed) {
  return rollout_cost(policy, model, cost, n_rollouts, seed, true);
}

double evaluate_cost(const Policy& policy, const DynamicsModel& model,
                     const CostSpec& cost, int n_rollouts, std::uint64_t seed) {
  return rollout_cost(policy, model, cost, n_rollouts, seed, false).cost;
}

}  // namespace kcrl
