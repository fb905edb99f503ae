#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "kcrl/dynamics.hpp"

namespace kcrl {

enum class PolicyArchitecture { kAffine, kMlp };

const char* to_string(PolicyArchitecture arch);
PolicyArchitecture parse_policy_architecture(const std::string& name);

/// Deterministic state feedback u = g_theta(x).
///
/// kAffine: u = K x + k0, theta = [vec(K) (column-major); k0].
/// kMlp:    u = W2 tanh(W1 x + b1) + b2, theta = [vec(W1); b1; vec(W2); b2].
///
/// The state Jacobian is bounded by the product of the layer spectral norms
/// (tanh' <= 1); `project()` rescales weights so that product is <= the cap.
class Policy {
 public:
  static Policy affine(Eigen::MatrixXd gain, Eigen::VectorXd bias,
                       double lipschitz_cap);
  static Policy mlp(int state_dim, int input_dim, int hidden, double lipschitz_cap,
                    std::uint64_t seed, double init_scale = 0.5);
  /// Rebuilds a policy from a flat parameter vector (no projection).
  static Policy from_parameters(PolicyArchitecture arch, int state_dim,
                                int input_dim, int hidden, double lipschitz_cap,
                                Eigen::VectorXd parameters);

  Eigen::VectorXd evaluate(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  /// du/dx, p x n.
  Eigen::MatrixXd state_jacobian(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  /// du/dtheta, p x q.
  Eigen::MatrixXd parameter_jacobian(
      const Eigen::Ref<const Eigen::VectorXd>& x) const;

  /// Upper bound on |du/dx|_2 valid for every x.
  double lipschitz_bound() const;
  /// Rescales the weights so lipschitz_bound() <= cap. Returns true if it did.
  bool project();

  /// Same architecture with new parameters; not projected.
  Policy with_parameters(Eigen::VectorXd parameters) const;

  const Eigen::VectorXd& parameters() const { return theta_; }
  PolicyArchitecture architecture() const { return arch_; }
  int state_dim() const { return n_; }
  int input_dim() const { return p_; }
  int hidden() const { return hidden_; }
  double lipschitz_cap() const { return cap_; }
  int parameter_count() const { return static_cast<int>(theta_.size()); }

  /// Affine-only views.
  Eigen::MatrixXd gain() const;
  Eigen::VectorXd bias() const;

 private:
  Policy(PolicyArchitecture arch, int n, int p, int hidden, double cap,
         Eigen::VectorXd theta);
  void check_state(const Eigen::Ref<const Eigen::VectorXd>& x) const;

  PolicyArchitecture arch_;
  int n_;
  int p_;
  int hidden_;
  double cap_;
  Eigen::VectorXd theta_;
};

/// Spectral norm.
double spectral_norm(const Eigen::Ref<const Eigen::MatrixXd>& m);

/// Discounted quadratic cost sum_t gamma^t (x'Qx + u'Ru), truncated at the
/// horizon, averaged over initial states. Initial states are `initial_states`
/// when non-empty, otherwise sampled uniformly in [initial_lower, initial_upper].
struct CostSpec {
  Eigen::MatrixXd q;
  Eigen::MatrixXd r;
  double discount = 0.97;
  int horizon = 50;
  Eigen::VectorXd initial_lower;
  Eigen::VectorXd initial_upper;
  std::vector<Eigen::VectorXd> initial_states;

  void validate(int state_dim, int input_dim) const;
};

std::vector<Eigen::VectorXd> sample_initial_states(const CostSpec& cost,
                                                   int n_rollouts,
                                                   std::uint64_t seed);

struct CostGradient {
  double cost = 0.0;
  Eigen::VectorXd gradient;
};

/// Exact gradient of the truncated rollout cost under `model` by forward-mode
/// chain rule through the model's analytic Jacobian and the policy.
/// Throws RolloutDivergence (carrying `seed`) when |x| exceeds 1e6.
CostGradient estimate_cost_gradient(const Policy& policy,
                                    const DynamicsModel& model,
                                    const CostSpec& cost, int n_rollouts,
                                    std::uint64_t seed);

/// Cost only, same rollouts as estimate_cost_gradient.
double evaluate_cost(const Policy& policy, const DynamicsModel& model,
                     const CostSpec& cost, int n_rollouts, std::uint64_t seed);

inline constexpr double kDivergenceThreshold = 1e6;

}  // namespace kcrl
