#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "kcrl/dynamics.hpp"
#include "kcrl/model.hpp"
#include "kcrl/policy.hpp"

namespace kcrl {

struct PlantConstants {
  double lipschitz_dynamics = 1.0;       // L_F
  std::optional<double> hessian_bound;   // F_H; absent -> estimated from the model
  double phi_bound = 1.0;                // Gamma_phi
  double stability_margin = 0.1;         // eps_bar of the witness
  double g_grad_bound = 1.0;             // M_G declared for synthesis
  double lipschitz_policy = 1.0;         // default L_u cap
};

enum class EquilibriumKind { kPoint, kFixedPointSet };

/// S_e: either a single point, or {x : f(x, g(x)) = x} measured through the
/// fixed-point residual.
struct EquilibriumSpec {
  EquilibriumKind kind = EquilibriumKind::kPoint;
  Eigen::VectorXd point;
};

/// Ground-truth discrete-time plant x+ = f(x, u). The step map is private to
/// the simulator; controller synthesis only ever sees learned models.
class Plant {
 public:
  using StepFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&,
                                               const Eigen::VectorXd&)>;
  using JacobianFn = std::function<Eigen::MatrixXd(const Eigen::VectorXd&,
                                                   const Eigen::VectorXd&)>;

  struct Spec {
    std::string name;
    std::string description;
    int state_dim = 1;
    int input_dim = 1;
    StepFn step;
    JacobianFn jacobian;  // analytic dF/dphi, simulator-only
    PlantConstants constants;
    EquilibriumSpec equilibrium;
    Eigen::VectorXd box_lower;  // declared state region
    Eigen::VectorXd box_upper;
    Eigen::MatrixXd witness_gain;  // reference stabilizing affine policy
    Eigen::MatrixXd witness_metric;
    Eigen::MatrixXd initial_gain;  // g_theta0 for data collection
    double dither_amplitude = 1.0;
    Eigen::VectorXd data_start;
  };

  explicit Plant(Spec spec);

  const std::string& name() const { return spec_.name; }
  const std::string& description() const { return spec_.description; }
  int state_dim() const { return spec_.state_dim; }
  int input_dim() const { return spec_.input_dim; }
  const PlantConstants& constants() const { return spec_.constants; }
  const EquilibriumSpec& equilibrium() const { return spec_.equilibrium; }
  const Eigen::VectorXd& box_lower() const { return spec_.box_lower; }
  const Eigen::VectorXd& box_upper() const { return spec_.box_upper; }
  const Eigen::MatrixXd& witness_metric() const { return spec_.witness_metric; }
  double dither_amplitude() const { return spec_.dither_amplitude; }
  const Eigen::VectorXd& data_start() const { return spec_.data_start; }

  Policy witness_policy() const;
  Policy initial_policy(double lipschitz_cap) const;
  const Eigen::MatrixXd& initial_gain() const { return spec_.initial_gain; }

  Eigen::VectorXd step(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const;
  Eigen::MatrixXd true_jacobian(const Eigen::VectorXd& x,
                                const Eigen::VectorXd& u) const;

  /// dist(x, S_e) under the given policy.
  double distance_to_equilibrium(const Eigen::VectorXd& x,
                                 const Policy& policy) const;

 private:
  Spec spec_;
};

/// Exposes a plant as a DynamicsModel for simulator-only diagnostics
/// (true-Jacobian audits, oracles). Never handed to the synthesis path.
class PlantDynamics final : public DynamicsModel {
 public:
  explicit PlantDynamics(const Plant& plant) : plant_(plant) {}
  int state_dim() const override { return plant_.state_dim(); }
  int input_dim() const override { return plant_.input_dim(); }
  Eigen::VectorXd next_state(
      const Eigen::Ref<const Eigen::VectorXd>& phi) const override;
  Eigen::MatrixXd jacobian(
      const Eigen::Ref<const Eigen::VectorXd>& phi) const override;

 private:
  const Plant& plant_;
};

struct AuditItem {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Equilibrium residual under the witness (<= 1e-10), L_F audit on 1000
/// finite-difference probes (within 5%), and the witness margin
/// G' M G - M <= -eps_bar I over a grid of the declared box.
std::vector<AuditItem> audit_plant(const Plant& plant);

/// The three shipped plants:
///   P1 scalar x+ = 1.2 tanh(x) + u (open-loop unstable linearization),
///   P2 damped pendulum, explicit Euler, dt 0.05, g/l 9.81, damping 0.1,
///   P3 stable linear x+ = A x + B u.
/// Audits run on construction; a failing audit throws kInvalidConfig.
const std::vector<Plant>& builtin_plants();
const Plant& find_plant(const std::string& name);

/// Deterministic exploration signal: per input channel, a sum of sinusoids at
/// mutually incommensurate frequencies, scaled so |d_j(t)| <= amplitude.
Eigen::VectorXd dither_signal(double amplitude, int input_dim, std::int64_t t);

struct Trajectory {
  std::vector<Transition> transitions;
  std::string policy_id;
  int epoch = 0;
  std::uint64_t seed = 0;
};

struct RolloutOptions {
  double dither_amplitude = 0.0;
  std::int64_t start_time = 0;
  int epoch = 0;
  std::uint64_t seed = 0;
};

/// Steps the true plant under u_t = g(x_t) (+ dither). Throws Divergence with
/// the step index when |x| exceeds 1e6.
Trajectory rollout(const Plant& plant, const Policy& policy,
                   const Eigen::VectorXd& x0, std::int64_t steps,
                   const RolloutOptions& options = {});

struct StabilityMetrics {
  double final_dist = 0.0;
  double decay_rate = 0.0;  // fitted geometric rate over the last half
  int lyapunov_violations = 0;
  int lyapunov_checked = 0;  // steps with fixed-point residual > neighborhood
  bool diverging = false;    // decay_rate > 1 + 1e-6 with non-vanishing distance
};

/// Distances are measured with the plant's S_e description. Lyapunov
/// violations (V(x_{t+1}) >= V(x_t), V from the true closed loop) are counted
/// only when `metric` is given, at steps whose closed-loop fixed-point
/// residual |x_t - f(x_t, g(x_t))| exceeds the neighborhood.
StabilityMetrics stability_metrics(const Trajectory& traj, const Plant& plant,
                                   const Policy& policy,
                                   const std::optional<Eigen::MatrixXd>& metric,
                                   double neighborhood = 1e-6);

std::string policy_id(const Policy& policy);

}  // namespace kcrl
