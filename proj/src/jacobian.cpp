#include "kcrl/jacobian.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "kcrl/errors.hpp"

namespace kcrl {

Eigen::MatrixXd JacobianEstimate::full() const {
  Eigen::MatrixXd j(d_state.rows(), d_state.cols() + d_input.cols());
  j << d_state, d_input;
  return j;
}

double step_floor(double phi_inf_norm) {
  return 1e4 * std::numeric_limits<double>::epsilon() * (1.0 + phi_inf_norm);
}

double step_floor(const Eigen::Ref<const Eigen::VectorXd>& phi) {
  return step_floor(phi.size() ? phi.lpNorm<Eigen::Infinity>() : 0.0);
}

JacobianEstimate finite_difference_jacobian(
    const DynamicsModel& model, const Eigen::Ref<const Eigen::VectorXd>& phi,
    double step, std::optional<double> region_bound) {
  const int n = model.state_dim();
  const int p = model.input_dim();
  if (phi.size() != n + p) {
    fail(ErrorCode::kInvalidArgument,
         "finite difference: expected phi of length " + std::to_string(n + p));
  }
  if (!(step >= step_floor(phi))) {
    fail(ErrorCode::kStepUnderflow, "finite difference: step " +
                                        std::to_string(step) +
                                        " is below the round-off floor");
  }

  Eigen::MatrixXd full(n, n + p);
  Eigen::VectorXd probe = phi;
  for (int j = 0; j < n + p; ++j) {
    probe(j) = phi(j) + step;
    const Eigen::VectorXd plus = model.next_state(probe);
    probe(j) = phi(j) - step;
    const Eigen::VectorXd minus = model.next_state(probe);
    probe(j) = phi(j);
    full.col(j) = (plus - minus) / (2.0 * step);
  }

  JacobianEstimate out;
  out.d_state = full.leftCols(n);
  out.d_input = full.rightCols(p);
  out.eval_point = phi;
  out.step = step;
  out.region_breach = region_bound && phi.norm() > *region_bound;
  return out;
}

double optimal_step(double model_error, double hessian_bound,
                    double phi_inf_norm) {
  require(std::isfinite(hessian_bound) && hessian_bound > 0.0,
          "optimal step: Hessian bound must be positive");
  require(std::isfinite(model_error) && model_error >= 0.0,
          "optimal step: model error must be non-negative");
  const double step = std::cbrt(model_error / (2.0 * hessian_bound));
  return std::max(step, step_floor(phi_inf_norm));
}

double jacobian_error_proxy(const DynamicsModel& model,
                            std::span<const Eigen::VectorXd> probes,
                            double step, double model_error) {
  require(!probes.empty(), "jacobian error proxy: probes must be non-empty");
  double worst = 0.0;
  for (const Eigen::VectorXd& phi : probes) {
    const JacobianEstimate fd = finite_difference_jacobian(model, phi, step);
    worst = std::max(worst, (fd.full() - model.jacobian(phi)).norm());
  }
  return worst + model_error / step;
}

double estimate_hessian_bound(const DynamicsModel& model,
                              std::span<const Eigen::VectorXd> probes,
                              double step) {
  require(!probes.empty(), "hessian estimate: probes must be non-empty");
  const int d = model.phi_dim();
  double worst = 0.0;
  for (const Eigen::VectorXd& phi : probes) {
    for (int j = 0; j < d; ++j) {
      for (int k = j; k < d; ++k) {
        Eigen::VectorXd a = phi, b = phi, c = phi, e = phi;
        a(j) += step; a(k) += step;
        b(j) += step; b(k) -= step;
        c(j) -= step; c(k) += step;
        e(j) -= step; e(k) -= step;
        const Eigen::VectorXd h =
            (model.next_state(a) - model.next_state(b) - model.next_state(c) +
             model.next_state(e)) / (4.0 * step * step);
        worst = std::max(worst, h.lpNorm<Eigen::Infinity>());
      }
    }
  }
  return 2.0 * worst;
}

}  // namespace kcrl
