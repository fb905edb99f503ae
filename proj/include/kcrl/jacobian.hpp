#pragma once

#include <Eigen/Dense>
#include <optional>
#include <span>

#include "kcrl/dynamics.hpp"

namespace kcrl {

struct JacobianEstimate {
  Eigen::MatrixXd d_state;  // n x n
  Eigen::MatrixXd d_input;  // n x p
  Eigen::VectorXd eval_point;
  double step = 0.0;
  bool region_breach = false;  // |phi| exceeded the configured bound

  Eigen::MatrixXd full() const;
};

/// Smallest admissible central-difference step at `phi`:
/// 1e4 * machine epsilon * (1 + |phi|_inf).
double step_floor(const Eigen::Ref<const Eigen::VectorXd>& phi);
double step_floor(double phi_inf_norm);

/// Central differences of the model's next_state, column by column:
///   J(i, j) = (F_i(phi + h e_j) - F_i(phi - h e_j)) / (2 h).
/// Throws kStepUnderflow when `step` is below step_floor(phi).
JacobianEstimate finite_difference_jacobian(
    const DynamicsModel& model, const Eigen::Ref<const Eigen::VectorXd>& phi,
    double step, std::optional<double> region_bound = std::nullopt);

/// Step minimizing F_H h^2 + delta / h, i.e. (delta / (2 F_H))^(1/3), floored
/// at step_floor(phi_inf_norm).
double optimal_step(double model_error, double hessian_bound,
                    double phi_inf_norm = 0.0);

/// Max over probes of |FD - analytic|_F, plus the model-error budget
/// delta / step. Stand-in for the unobservable true-Jacobian error.
double jacobian_error_proxy(const DynamicsModel& model,
                            std::span<const Eigen::VectorXd> probes,
                            double step, double model_error);

/// Twice the largest mixed second central difference of any output over the
/// probes. Fallback when no Hessian bound is declared for the plant.
double estimate_hessian_bound(const DynamicsModel& model,
                              std::span<const Eigen::VectorXd> probes,
                              double step);

}  // namespace kcrl
