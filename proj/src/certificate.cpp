#include "kcrl/certificate.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>

#include "kcrl/errors.hpp"
#include "kcrl/rng.hpp"

namespace kcrl {

const char* to_string(MarginMode mode) {
  switch (mode) {
    case MarginMode::kModelError: return "model_error";
    case MarginMode::kBudgetSplit: return "budget_split";
    case MarginMode::kFixed: return "fixed";
  }
  return "unknown";
}

MarginMode parse_margin_mode(const std::string& name) {
  if (name == "model_error") return MarginMode::kModelError;
  if (name == "budget_split") return MarginMode::kBudgetSplit;
  if (name == "fixed") return MarginMode::kFixed;
  fail(ErrorCode::kInvalidArgument, "unknown margin mode '" + name + "'");
}

namespace {

void check_metric(const Eigen::MatrixXd& m) {
  require(m.rows() > 0 && m.rows() == m.cols(), "certificate: metric must be square");
  require(m.allFinite(), "certificate: metric has non-finite entries");
  const double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
  require(asym <= 1e-10 * std::max(1.0, m.cwiseAbs().maxCoeff()),
          "certificate: metric is not symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
  require(es.eigenvalues()(0) > 0.0, "certificate: metric is not positive definite");
}

}  // namespace

void StabilityCertificate::validate() const {
  check_metric(metric);
  if (!(jacobian_error >= 0.0 && jacobian_error < 1.0)) {
    fail(ErrorCode::kInfeasibleMargin, "certificate: eps_J must lie in [0, 1)");
  }
  require(margin_model >= 0.0 && margin_batch >= 0.0,
          "certificate: margins must be non-negative");
}

double model_error_margin(double g_bound, double metric_norm,
                          double lipschitz_policy, double jacobian_error) {
  const double a = 1.0 + lipschitz_policy;
  return 2.0 * g_bound * metric_norm * a * jacobian_error +
         metric_norm * a * a * jacobian_error * jacobian_error;
}

double batch_margin(double g_bound, double metric_norm, double g_grad_bound,
                    double fill_distance) {
  return 2.0 * g_bound * metric_norm * g_grad_bound * fill_distance;
}

StabilityCertificate compute_margins(const MarginInputs& in) {
  check_metric(in.metric);
  require(in.lipschitz_policy > 0.0 && in.lipschitz_dynamics > 0.0,
          "margins: Lipschitz constants must be positive");
  require(in.g_grad_bound >= 0.0, "margins: M_G must be non-negative");
  require(in.fill_distance > 0.0, "margins: fill distance must be positive");
  require(in.margin_assumed > 0.0, "margins: eps_bar must be positive");
  require(in.jacobian_error >= 0.0, "margins: eps_J must be non-negative");
  if (in.jacobian_error >= 1.0) {
    fail(ErrorCode::kInfeasibleMargin,
         "margins: Jacobian error eps_J = " + std::to_string(in.jacobian_error) +
             " must be < 1");
  }

  StabilityCertificate c;
  c.metric = in.metric;
  c.metric_norm = spectral_norm(in.metric);
  c.lipschitz_policy = in.lipschitz_policy;
  c.lipschitz_dynamics = in.lipschitz_dynamics;
  c.jacobian_error = in.jacobian_error;
  c.g_grad_bound = in.g_grad_bound;
  c.margin_assumed = in.margin_assumed;
  c.mode = in.mode;
  c.g_bound = (1.0 + in.lipschitz_policy) *
              (in.lipschitz_dynamics + in.jacobian_error);
  c.margin_batch = in.batch_margin_override >= 0.0
                       ? in.batch_margin_override
                       : batch_margin(c.g_bound, c.metric_norm, in.g_grad_bound,
                                      in.fill_distance);
  if (!(in.margin_assumed - c.margin_batch > 0.0)) {
    fail(ErrorCode::kInfeasibleBatch,
         "margins: eps_pd = " + std::to_string(c.margin_batch) +
             " >= eps_bar = " + std::to_string(in.margin_assumed) +
             "; use a denser batch (smaller fill distance h)");
  }
  c.feasible = true;
  switch (in.mode) {
    case MarginMode::kModelError:
      c.margin_model = model_error_margin(c.g_bound, c.metric_norm,
                                          in.lipschitz_policy, in.jacobian_error);
      break;
    case MarginMode::kBudgetSplit:
      c.margin_model = in.margin_assumed - c.margin_batch;
      break;
    case MarginMode::kFixed:
      require(in.fixed_margin >= 0.0, "margins: fixed eps_i must be non-negative");
      c.margin_model = in.fixed_margin;
      break;
  }
  return c;
}

RepresentativeBatch make_grid_batch(const Eigen::VectorXd& lower,
                                    const Eigen::VectorXd& upper,
                                    const std::vector<int>& points_per_axis) {
  const auto n = lower.size();
  require(n > 0 && upper.size() == n &&
              static_cast<Eigen::Index>(points_per_axis.size()) == n,
          "grid batch: dimension mismatch");
  Eigen::VectorXd spacing(n);
  std::size_t total = 1;
  for (Eigen::Index k = 0; k < n; ++k) {
    require(upper(k) > lower(k), "grid batch: upper must exceed lower");
    require(points_per_axis[k] >= 2, "grid batch: need >= 2 points per axis");
    spacing(k) = (upper(k) - lower(k)) / (points_per_axis[k] - 1);
    total *= static_cast<std::size_t>(points_per_axis[k]);
  }
  RepresentativeBatch b;
  b.lower = lower;
  b.upper = upper;
  b.points.reserve(total);
  std::vector<int> idx(n, 0);
  for (std::size_t i = 0; i < total; ++i) {
    Eigen::VectorXd x(n);
    for (Eigen::Index k = 0; k < n; ++k) {
      // Hit the upper face exactly instead of accumulating spacing.
      x(k) = idx[k] == points_per_axis[k] - 1 ? upper(k)
                                              : lower(k) + idx[k] * spacing(k);
    }
    b.points.push_back(std::move(x));
    for (Eigen::Index k = 0; k < n; ++k) {
      if (++idx[k] < points_per_axis[k]) break;
      idx[k] = 0;
    }
  }
  b.fill_distance = 0.5 * spacing.norm();
  b.region_radius = lower.cwiseAbs().cwiseMax(upper.cwiseAbs()).norm();
  return b;
}

namespace {

double radical_inverse(std::uint64_t i, int base) {
  double f = 1.0, r = 0.0;
  while (i > 0) {
    f /= base;
    r += f * static_cast<double>(i % base);
    i /= base;
  }
  return r;
}

}  // namespace

RepresentativeBatch make_halton_batch(const Eigen::VectorXd& lower,
                                      const Eigen::VectorXd& upper, int count,
                                      int audit_samples, std::uint64_t seed) {
  static constexpr int kPrimes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37};
  const auto n = lower.size();
  require(n > 0 && upper.size() == n && n <= 12, "halton batch: bad dimension");
  require(count > 0 && audit_samples > 0, "halton batch: counts must be positive");
  RepresentativeBatch b;
  b.lower = lower;
  b.upper = upper;
  for (int i = 1; i <= count; ++i) {
    Eigen::VectorXd x(n);
    for (Eigen::Index k = 0; k < n; ++k)
      x(k) = lower(k) + (upper(k) - lower(k)) * radical_inverse(i, kPrimes[k]);
    b.points.push_back(std::move(x));
  }
  auto nearest = [&b](const Eigen::VectorXd& y) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& p : b.points) best = std::min(best, (p - y).norm());
    return best;
  };
  Rng rng = Rng::stream(seed, streams::kBatch);
  double h = 0.0;
  for (int s = 0; s < audit_samples; ++s) {
    Eigen::VectorXd y(n);
    for (Eigen::Index k = 0; k < n; ++k) y(k) = rng.uniform(lower(k), upper(k));
    h = std::max(h, nearest(y));
  }
  for (std::uint64_t c = 0; c < (1ULL << n); ++c) {
    Eigen::VectorXd y(n);
    for (Eigen::Index k = 0; k < n; ++k) y(k) = (c >> k) & 1 ? upper(k) : lower(k);
    h = std::max(h, nearest(y));
  }
  b.fill_distance = h;
  b.region_radius = lower.cwiseAbs().cwiseMax(upper.cwiseAbs()).norm();
  return b;
}

Eigen::MatrixXd closed_loop_jacobian(const JacobianEstimate& jac,
                                     const Eigen::Ref<const Eigen::MatrixXd>& policy_jac) {
  if (policy_jac.rows() != jac.d_input.cols() ||
      policy_jac.cols() != jac.d_state.cols() ||
      jac.d_state.rows() != jac.d_state.cols()) {
    fail(ErrorCode::kInvalidArgument, "closed-loop Jacobian: dimension mismatch");
  }
  return jac.d_state + jac.d_input * policy_jac;
}

Eigen::MatrixXd constraint_matrix(const StabilityCertificate& cert,
                                  const Eigen::Ref<const Eigen::MatrixXd>& g_hat) {
  require(g_hat.allFinite(), "constraint matrix: non-finite closed-loop Jacobian");
  require(g_hat.rows() == cert.metric.rows() && g_hat.cols() == cert.metric.cols(),
          "constraint matrix: dimension mismatch with the metric");
  Eigen::MatrixXd k = g_hat.transpose() * cert.metric * g_hat - cert.metric;
  k.diagonal().array() += cert.margin_model;
  return 0.5 * (k + k.transpose());
}

TopEigen max_eigenvalue(const Eigen::Ref<const Eigen::MatrixXd>& k) {
  require(k.rows() > 0 && k.rows() == k.cols(), "eigen: matrix must be square");
  if (!k.allFinite()) fail(ErrorCode::kNumeric, "eigen: non-finite matrix");
  const double asym = (k - k.transpose()).cwiseAbs().maxCoeff();
  require(asym <= 1e-6, "eigen: matrix asymmetry exceeds 1e-6");
  const Eigen::MatrixXd sym = 0.5 * (k + k.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  if (es.info() != Eigen::Success) fail(ErrorCode::kNumeric, "eigen: solver failed");
  const auto& vals = es.eigenvalues();
  const Eigen::Index last = vals.size() - 1;
  Eigen::Index first_tied = last;
  while (first_tied > 0 && vals(last) - vals(first_tied - 1) <= 1e-8) --first_tied;

  TopEigen out;
  out.value = vals(last);
  out.degenerate = first_tied != last;
  out.vector = es.eigenvectors().col(first_tied);
  Eigen::Index arg = 0;
  out.vector.cwiseAbs().maxCoeff(&arg);
  if (out.vector(arg) < 0.0) out.vector = -out.vector;
  return out;
}

Eigen::MatrixXd constraint_at(const StabilityCertificate& cert,
                              const Eigen::Ref<const Eigen::VectorXd>& x,
                              const Policy& policy, const DynamicsModel& model,
                              double step) {
  const int n = model.state_dim();
  Eigen::VectorXd phi(model.phi_dim());
  phi << x, policy.evaluate(x);
  const JacobianEstimate jac = finite_difference_jacobian(model, phi, step);
  require(jac.d_state.rows() == n, "constraint: model state dimension mismatch");
  return constraint_matrix(cert, closed_loop_jacobian(jac, policy.state_jacobian(x)));
}

BatchSup batch_sup(const StabilityCertificate& cert,
                   const RepresentativeBatch& batch, const Policy& policy,
                   const DynamicsModel& model, double step) {
  require(!batch.points.empty(), "batch sup: batch must be non-empty");
  BatchSup out;
  out.value = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < batch.points.size(); ++i) {
    const TopEigen top =
        max_eigenvalue(constraint_at(cert, batch.points[i], policy, model, step));
    if (top.degenerate) ++out.degenerate_count;
    if (top.value > out.value) {
      out.value = top.value;
      out.index = static_cast<int>(i);
      out.vector = top.vector;
    }
  }
  return out;
}

Eigen::VectorXd eigenvalue_gradient_wrt_policy(
    const StabilityCertificate& cert, const Eigen::Ref<const Eigen::VectorXd>& x,
    const Policy& policy, const DynamicsModel& model, double step,
    bool* degenerate) {
  const TopEigen top = max_eigenvalue(constraint_at(cert, x, policy, model, step));
  if (degenerate) *degenerate = top.degenerate;
  const Eigen::VectorXd& v = top.vector;
  const Eigen::VectorXd theta = policy.parameters();
  const double h = 1e-5 * (1.0 + theta.lpNorm<Eigen::Infinity>());
  Eigen::VectorXd grad(theta.size());
  Eigen::VectorXd probe = theta;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    probe(i) = theta(i) + h;
    const double plus =
        v.dot(constraint_at(cert, x, policy.with_parameters(probe), model, step) * v);
    probe(i) = theta(i) - h;
    const double minus =
        v.dot(constraint_at(cert, x, policy.with_parameters(probe), model, step) * v);
    probe(i) = theta(i);
    grad(i) = (plus - minus) / (2.0 * h);
  }
  if (!grad.allFinite()) fail(ErrorCode::kNumeric, "eigen gradient: non-finite result");
  return grad;
}

double lyapunov_value(const DynamicsModel& dynamics, const Policy& policy,
                      const Eigen::Ref<const Eigen::MatrixXd>& metric,
                      const Eigen::Ref<const Eigen::VectorXd>& x) {
  require(x.size() == dynamics.state_dim() && metric.rows() == x.size() &&
              metric.cols() == x.size(),
          "lyapunov value: dimension mismatch");
  Eigen::VectorXd phi(dynamics.phi_dim());
  phi << x, policy.evaluate(x);
  const Eigen::VectorXd r = x - dynamics.next_state(phi);
  return r.dot(metric * r);
}

Eigen::MatrixXd discrete_lyapunov_series(const Eigen::Ref<const Eigen::MatrixXd>& a,
                                         const Eigen::Ref<const Eigen::MatrixXd>& q,
                                         double tol, int max_terms) {
  require(a.rows() == a.cols() && q.rows() == a.rows() && q.cols() == a.cols(),
          "lyapunov series: dimension mismatch");
  Eigen::MatrixXd m = q;
  Eigen::MatrixXd power = a;
  for (int k = 1; k < max_terms; ++k) {
    const Eigen::MatrixXd term = power.transpose() * q * power;
    m += term;
    const double size = term.norm();
    if (!std::isfinite(size)) break;
    if (size < tol) return 0.5 * (m + m.transpose());
    power = power * a;
  }
  fail(ErrorCode::kNumeric, "lyapunov series: did not converge (A not Schur stable?)");
}

double estimate_g_grad_bound(const Policy& policy, const DynamicsModel& model,
                             const std::vector<Eigen::VectorXd>& probes,
                             double fd_step, double probe_step) {
  require(!probes.empty() && probe_step > 0.0, "M_G estimate: bad arguments");
  auto g_at = [&](const Eigen::VectorXd& x) {
    Eigen::VectorXd phi(model.phi_dim());
    phi << x, policy.evaluate(x);
    return closed_loop_jacobian(finite_difference_jacobian(model, phi, fd_step),
                                policy.state_jacobian(x));
  };
  double worst = 0.0;
  for (const auto& x : probes) {
    for (Eigen::Index k = 0; k < x.size(); ++k) {
      Eigen::VectorXd xp = x, xm = x;
      xp(k) += probe_step;
      xm(k) -= probe_step;
      worst = std::max(worst, spectral_norm(g_at(xp) - g_at(xm)) / (2.0 * probe_step));
    }
  }
  return 2.0 * worst;
}

}  // namespace kcrl
