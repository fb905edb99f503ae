#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "kcrl/dynamics.hpp"
#include "kcrl/jacobian.hpp"
#include "kcrl/policy.hpp"

namespace kcrl {

/// How the constraint margin epsilon_i is set.
///   kModelError:  2 Gbar |M| (1+L_u) eps_J + |M| (1+L_u)^2 eps_J^2
///   kBudgetSplit: eps_bar - eps_pd (the tau = D^2 sample-complexity regime)
///   kFixed:       a user-supplied constant
enum class MarginMode { kModelError, kBudgetSplit, kFixed };

const char* to_string(MarginMode mode);
MarginMode parse_margin_mode(const std::string& name);

struct MarginInputs {
  double lipschitz_policy = 1.0;    // L_u
  double lipschitz_dynamics = 1.0;  // L_F
  double jacobian_error = 0.0;      // eps_J, must be < 1
  Eigen::MatrixXd metric;           // M
  double g_grad_bound = 1.0;        // M_G, bound on |dG/dx| (spectral)
  double fill_distance = 1.0;       // h
  double margin_assumed = 1.0;      // eps_bar
  MarginMode mode = MarginMode::kModelError;
  double fixed_margin = 0.0;
  /// Batch margin: negative means compute 2 Gbar |M| M_G h.
  double batch_margin_override = -1.0;
};

struct StabilityCertificate {
  Eigen::MatrixXd metric;
  double metric_norm = 0.0;
  double margin_model = 0.0;    // eps_i
  double margin_batch = 0.0;    // eps_pd
  double margin_assumed = 0.0;  // eps_bar
  double lipschitz_policy = 0.0;
  double lipschitz_dynamics = 0.0;
  double jacobian_error = 0.0;
  double g_bound = 0.0;       // Gbar = (1 + L_u)(L_F + eps_J)
  double g_grad_bound = 0.0;  // M_G
  MarginMode mode = MarginMode::kModelError;
  bool feasible = false;      // eps_bar - eps_pd > 0

  /// Metric symmetric within 1e-10 and positive definite; eps_J in [0, 1).
  void validate() const;
};

/// Throws kInfeasibleMargin when eps_J >= 1 and kInfeasibleBatch when
/// eps_bar <= eps_pd.
StabilityCertificate compute_margins(const MarginInputs& in);

/// Unsized margin formulas, exposed for diagnostics.
double model_error_margin(double g_bound, double metric_norm,
                          double lipschitz_policy, double jacobian_error);
double batch_margin(double g_bound, double metric_norm, double g_grad_bound,
                    double fill_distance);

struct RepresentativeBatch {
  std::vector<Eigen::VectorXd> points;
  double fill_distance = 0.0;
  double region_radius = 0.0;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
};

/// Axis-aligned grid with `points_per_axis[k] >= 2` points on axis k.
/// Fill distance is half the diagonal of one grid cell.
RepresentativeBatch make_grid_batch(const Eigen::VectorXd& lower,
                                    const Eigen::VectorXd& upper,
                                    const std::vector<int>& points_per_axis);

/// Halton points in the box. The fill distance is estimated as the largest
/// nearest-point distance over `audit_samples` uniform probes (plus the
/// box corners), so it is an estimate and not a certified bound.
RepresentativeBatch make_halton_batch(const Eigen::VectorXd& lower,
                                      const Eigen::VectorXd& upper, int count,
                                      int audit_samples, std::uint64_t seed);

/// G = dF/dx + dF/du * du/dx.
Eigen::MatrixXd closed_loop_jacobian(const JacobianEstimate& jac,
                                     const Eigen::Ref<const Eigen::MatrixXd>& policy_jac);

/// K = G' M G - M + eps_i I, symmetrized.
Eigen::MatrixXd constraint_matrix(const StabilityCertificate& cert,
                                  const Eigen::Ref<const Eigen::MatrixXd>& g_hat);

struct TopEigen {
  double value = 0.0;
  Eigen::VectorXd vector;
  bool degenerate = false;  // top eigenvalue not simple within 1e-8
};

/// Largest eigenvalue and unit eigenvector (sign fixed so the largest-magnitude
/// entry is positive). On a repeated top eigenvalue the first eigenvector of
/// the tied group in solver order is returned and `degenerate` is set.
TopEigen max_eigenvalue(const Eigen::Ref<const Eigen::MatrixXd>& k);

/// K(x, theta) with the model Jacobian obtained by finite differences at
/// phi = [x; g_theta(x)].
Eigen::MatrixXd constraint_at(const StabilityCertificate& cert,
                              const Eigen::Ref<const Eigen::VectorXd>& x,
                              const Policy& policy, const DynamicsModel& model,
                              double step);

struct BatchSup {
  double value = 0.0;
  int index = 0;
  Eigen::VectorXd vector;
  int degenerate_count = 0;
};

/// Max over the batch of lambda_max(K(x_i, theta)); ties go to the lowest index.
BatchSup batch_sup(const StabilityCertificate& cert,
                   const RepresentativeBatch& batch, const Policy& policy,
                   const DynamicsModel& model, double step);

/// grad_theta of v' K(x, theta) v with v the top eigenvector at theta held
/// fixed. The whole map theta -> K is differenced (central, step
/// 1e-5 (1 + |theta|_inf)), so both the policy Jacobian and the shift of the
/// evaluation point phi(theta) contribute.
Eigen::VectorXd eigenvalue_gradient_wrt_policy(
    const StabilityCertificate& cert, const Eigen::Ref<const Eigen::VectorXd>& x,
    const Policy& policy, const DynamicsModel& model, double step,
    bool* degenerate = nullptr);

/// V(x) = (x - F(x, g(x)))' M (x - F(x, g(x))).
double lyapunov_value(const DynamicsModel& dynamics, const Policy& policy,
                      const Eigen::Ref<const Eigen::MatrixXd>& metric,
                      const Eigen::Ref<const Eigen::VectorXd>& x);

/// M = sum_k (A')^k Q A^k, truncated once the term norm drops below `tol`;
/// solves A' M A - M = -Q for Schur-stable A. Throws kNumeric otherwise.
Eigen::MatrixXd discrete_lyapunov_series(const Eigen::Ref<const Eigen::MatrixXd>& a,
                                         const Eigen::Ref<const Eigen::MatrixXd>& q,
                                         double tol = 1e-14,
                                         int max_terms = 200000);

/// Twice the largest directional change |G(x + s e_k) - G(x - s e_k)| / (2 s)
/// over the probes; fallback estimate of M_G.
double estimate_g_grad_bound(const Policy& policy, const DynamicsModel& model,
                             const std::vector<Eigen::VectorXd>& probes,
                             double fd_step, double probe_step);

}  // namespace kcrl
