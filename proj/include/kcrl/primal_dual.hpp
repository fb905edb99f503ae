#pragma once

#include <cstdint>
#include <functional>

#include "kcrl/certificate.hpp"
#include "kcrl/dynamics.hpp"
#include "kcrl/policy.hpp"

namespace kcrl {

struct DualState {
  double multiplier = 0.0;     // mu >= 0
  double step_primal = 1e-3;   // eta_1
  double step_dual = 1e-2;     // eta_2
  std::int64_t iteration = 0;
};

struct PrimalDualConfig {
  int n_rollouts = 8;
  std::uint64_t seed = 0;
  double fd_step = 1e-3;
  double theta_limit = 1e6;  // divergence guard on |theta|
};

struct IterationDiagnostics {
  std::int64_t iteration = 0;
  double cost = 0.0;
  double sup_value = 0.0;         // sup_i lambda_max(K(x_i, theta))
  double constraint_value = 0.0;  // sup_value + eps_pd
  double multiplier = 0.0;        // mu after the update
  int argmax = 0;
  double cost_grad_norm = 0.0;
  double step_norm = 0.0;         // |theta' - theta|
  int degenerate_count = 0;
  bool projected = false;
};

struct StepResult {
  Policy policy;
  DualState dual;
  IterationDiagnostics diagnostics;
};

/// One simultaneous update:
///   theta <- theta - eta_1 [grad J + mu grad_theta lambda_max(K(x*, theta))]
///   mu    <- max(0, mu + eta_2 (sup_i lambda_max(K(x_i, theta)) + eps_pd))
/// where x* is the batch argmax. theta is re-projected onto the L_u cap.
StepResult primal_dual_step(const Policy& policy, const DualState& dual,
                            const StabilityCertificate& cert,
                            const RepresentativeBatch& batch,
                            const DynamicsModel& model, const CostSpec& cost,
                            const PrimalDualConfig& config);

struct StopRule {
  int max_iters = 5000;
  double tol_grad = 1e-6;  // on |theta' - theta|
  double tol_feas = 0.0;   // feasible when sup + eps_pd <= tol_feas
};

struct SolveReport {
  bool converged = false;
  bool feasible = false;
  int iterations = 0;
  double final_multiplier = 0.0;
  double constraint_value = 0.0;  // sup + eps_pd at the returned policy
  double cost = 0.0;              // J at the returned policy
  std::int64_t returned_iteration = -1;
};

struct SolveResult {
  Policy policy;
  DualState dual;
  SolveReport report;
};

/// Iterates primal_dual_step until |delta theta| <= tol_grad at a feasible
/// iterate, or max_iters. On running out of iterations returns the lowest-cost
/// feasible iterate seen; throws kInfeasibleResult if there was none.
/// A returned policy was feasible when it was evaluated.
SolveResult solve_constrained_policy(
    const Policy& policy, const DualState& dual,
    const StabilityCertificate& cert, const RepresentativeBatch& batch,
    const DynamicsModel& model, const CostSpec& cost,
    const PrimalDualConfig& config, const StopRule& stop,
    const std::function<void(const IterationDiagnostics&)>& observer = {});

}  // namespace kcrl
