#include "kcrl/primal_dual.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include "kcrl/errors.hpp"

namespace kcrl {

StepResult primal_dual_step(const Policy& policy, const DualState& dual,
                            const StabilityCertificate& cert,
                            const RepresentativeBatch& batch,
                            const DynamicsModel& model, const CostSpec& cost,
                            const PrimalDualConfig& config) {
  if (!cert.feasible) {
    fail(ErrorCode::kInfeasibleBatch,
         "primal-dual: certificate is infeasible (eps_bar <= eps_pd)");
  }
  const BatchSup sup = batch_sup(cert, batch, policy, model, config.fd_step);
  const CostGradient cg =
      estimate_cost_gradient(policy, model, cost, config.n_rollouts, config.seed);

  Eigen::VectorXd direction = cg.gradient;
  if (dual.multiplier > 0.0) {
    direction += dual.multiplier *
                 eigenvalue_gradient_wrt_policy(cert, batch.points[sup.index],
                                                policy, model, config.fd_step);
  }

  Policy next = policy.with_parameters(policy.parameters() -
                                       dual.step_primal * direction);
  const bool projected = next.project();
  if (!next.parameters().allFinite() ||
      next.parameters().norm() > config.theta_limit) {
    fail(ErrorCode::kNumeric, "primal-dual: policy parameters diverged");
  }

  DualState next_dual = dual;
  next_dual.multiplier =
      std::max(0.0, dual.multiplier + dual.step_dual * (sup.value + cert.margin_batch));
  ++next_dual.iteration;

  IterationDiagnostics d;
  d.iteration = dual.iteration;
  d.cost = cg.cost;
  d.sup_value = sup.value;
  d.constraint_value = sup.value + cert.margin_batch;
  d.multiplier = next_dual.multiplier;
  d.argmax = sup.index;
  d.cost_grad_norm = cg.gradient.norm();
  d.step_norm = (next.parameters() - policy.parameters()).norm();
  d.degenerate_count = sup.degenerate_count;
  d.projected = projected;
  return {std::move(next), next_dual, d};
}

SolveResult solve_constrained_policy(
    const Policy& policy, const DualState& dual,
    const StabilityCertificate& cert, const RepresentativeBatch& batch,
    const DynamicsModel& model, const CostSpec& cost,
    const PrimalDualConfig& config, const StopRule& stop,
    const std::function<void(const IterationDiagnostics&)>& observer) {
  require(stop.max_iters > 0, "solve: max_iters must be positive");
  require(dual.multiplier >= 0.0 && dual.step_primal > 0.0 && dual.step_dual > 0.0,
          "solve: invalid dual state");

  Policy current = policy;
  DualState current_dual = dual;
  std::optional<Policy> best;
  SolveReport best_report;
  double best_cost = std::numeric_limits<double>::infinity();

  for (int it = 0; it < stop.max_iters; ++it) {
    StepResult step = primal_dual_step(current, current_dual, cert, batch, model,
                                       cost, config);
    const IterationDiagnostics& d = step.diagnostics;
    if (observer) observer(d);

    // The diagnostics describe `current` (pre-update).
    const bool feasible = d.constraint_value <= stop.tol_feas;
    if (feasible && d.step_norm <= stop.tol_grad) {
      SolveReport r;
      r.converged = true;
      r.feasible = true;
      r.iterations = it + 1;
      r.final_multiplier = step.dual.multiplier;
      r.constraint_value = d.constraint_value;
      r.cost = d.cost;
      r.returned_iteration = d.iteration;
      return {std::move(current), step.dual, r};
    }
    if (feasible && d.cost < best_cost) {
      best_cost = d.cost;
      best = current;
      best_report.constraint_value = d.constraint_value;
      best_report.cost = d.cost;
      best_report.returned_iteration = d.iteration;
    }
    current = std::move(step.policy);
    current_dual = step.dual;
  }

  if (!best) {
    fail(ErrorCode::kInfeasibleResult,
         "solve: no feasible iterate within " + std::to_string(stop.max_iters) +
             " iterations");
  }
  best_report.converged = false;
  best_report.feasible = true;
  best_report.iterations = stop.max_iters;
  best_report.final_multiplier = current_dual.multiplier;
  return {std::move(*best), current_dual, best_report};
}

}  // namespace kcrl
