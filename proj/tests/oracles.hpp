#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <vector>

#include "kcrl/dynamics.hpp"
#include "kcrl/errors.hpp"
#include "kcrl/rng.hpp"

namespace kcrl::testing {

inline double gaussian_kernel(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                              double bandwidth = 1.0) {
  return std::exp(-(x - y).squaredNorm() / (2.0 * bandwidth * bandwidth));
}

/// Uniform sample in the Euclidean ball of the given radius.
inline Eigen::VectorXd ball_point(Rng& rng, int dim, double radius) {
  Eigen::VectorXd v(dim);
  for (int i = 0; i < dim; ++i) v(i) = rng.normal();
  const double r = radius * std::pow(rng.uniform(), 1.0 / dim);
  return v.normalized() * r;
}

inline Eigen::VectorXd box_point(Rng& rng, const Eigen::VectorXd& lo,
                                 const Eigen::VectorXd& hi) {
  Eigen::VectorXd v(lo.size());
  for (int i = 0; i < lo.size(); ++i) v(i) = rng.uniform(lo(i), hi(i));
  return v;
}

/// Central differences of a scalar function of a vector.
inline Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                   const Eigen::VectorXd& x, double h) {
  Eigen::VectorXd g(x.size());
  for (int i = 0; i < x.size(); ++i) {
    Eigen::VectorXd a = x, b = x;
    a(i) += h;
    b(i) -= h;
    g(i) = (f(a) - f(b)) / (2.0 * h);
  }
  return g;
}

inline double relative_error(const Eigen::VectorXd& got, const Eigen::VectorXd& want) {
  const double scale = std::max(want.norm(), 1e-12);
  return (got - want).norm() / scale;
}

/// x+ = phi_0^2 (scalar state, zero-width input): second derivative 2 everywhere.
class SquareDynamics final : public DynamicsModel {
 public:
  int state_dim() const override { return 1; }
  int input_dim() const override { return 1; }
  Eigen::VectorXd next_state(const Eigen::Ref<const Eigen::VectorXd>& phi) const override {
    return Eigen::VectorXd::Constant(1, phi(0) * phi(0));
  }
  Eigen::MatrixXd jacobian(const Eigen::Ref<const Eigen::VectorXd>& phi) const override {
    Eigen::MatrixXd j(1, 2);
    j << 2.0 * phi(0), 0.0;
    return j;
  }
};

template <class F>
ErrorCode error_code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode{0};
}

}  // namespace kcrl::testing

#include "kcrl/feature_map.hpp"
#include <algorithm>
#include <utility>

namespace kcrl::testing {

using PointPair = std::pair<Eigen::VectorXd, Eigen::VectorXd>;

inline std::vector<PointPair> kernel_pairs(int count, int dim, double radius,
                                           std::uint64_t seed) {
  Rng rng(seed);
  std::vector<PointPair> pairs;
  for (int i = 0; i < count; ++i) {
    Eigen::VectorXd x = ball_point(rng, dim, radius);
    Eigen::VectorXd y = ball_point(rng, dim, radius);
    pairs.emplace_back(std::move(x), std::move(y));
  }
  return pairs;
}

/// Max over pairs of |z(x)'z(y) - k(x, y)|.
inline double kernel_error(const FeatureMap& map, const std::vector<PointPair>& pairs) {
  double worst = 0.0;
  for (const auto& [x, y] : pairs) {
    const double approx = map.featurize(x).dot(map.featurize(y));
    worst = std::max(worst, std::abs(approx - gaussian_kernel(x, y, map.bandwidth())));
  }
  return worst;
}

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

}  // namespace kcrl::testing

#include "kcrl/model.hpp"

namespace kcrl::testing {

/// Noiseless transitions x+ = W*' z(phi) with phi uniform in a ball.
struct PlantedData {
  FeatureMap map;
  Eigen::MatrixXd w_star;
  std::vector<Transition> transitions;
};

inline PlantedData planted_data(int state_dim, int input_dim, int features, int samples,
                                double radius, std::uint64_t seed) {
  PlantedData out{FeatureMap::generate(state_dim + input_dim, features, 1.0, seed),
                  Eigen::MatrixXd(features, state_dim), {}};
  Rng rng = Rng::stream(seed, 100);
  for (int i = 0; i < features; ++i)
    for (int k = 0; k < state_dim; ++k) out.w_star(i, k) = rng.normal();
  for (int s = 0; s < samples; ++s) {
    const Eigen::VectorXd phi = ball_point(rng, state_dim + input_dim, radius);
    Transition tr;
    tr.state = phi.head(state_dim);
    tr.action = phi.tail(input_dim);
    tr.next_state = out.w_star.transpose() * out.map.featurize(phi);
    tr.time_index = s;
    out.transitions.push_back(std::move(tr));
  }
  return out;
}

}  // namespace kcrl::testing

#include "kcrl/jacobian.hpp"

namespace kcrl::testing {

/// Least-squares slope of log(err) against log(step).
inline double loglog_slope(const std::vector<double>& steps, const std::vector<double>& errs) {
  const int n = static_cast<int>(steps.size());
  double mx = 0, my = 0;
  for (int i = 0; i < n; ++i) {
    mx += std::log(steps[i]);
    my += std::log(errs[i]);
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0;
  for (int i = 0; i < n; ++i) {
    const double dx = std::log(steps[i]) - mx;
    sxy += dx * (std::log(errs[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

/// Max over points of |FD - analytic|_F at each step.
inline std::vector<double> fd_errors(const DynamicsModel& model,
                                     const std::vector<Eigen::VectorXd>& points,
                                     const std::vector<double>& steps) {
  std::vector<double> errs;
  for (double h : steps) {
    double worst = 0.0;
    for (const auto& phi : points)
      worst = std::max(worst, (finite_difference_jacobian(model, phi, h).full() -
                               model.jacobian(phi)).norm());
    errs.push_back(worst);
  }
  return errs;
}

}  // namespace kcrl::testing

#include "kcrl/certificate.hpp"
#include "kcrl/policy.hpp"

namespace kcrl::testing {

/// Relative error of the top-eigenvalue policy gradient against central
/// differences of lambda_max itself.
inline double eigen_gradient_check(const StabilityCertificate& cert, const Eigen::VectorXd& x,
                                   const Policy& policy, const DynamicsModel& model,
                                   double fd_step) {
  const Eigen::VectorXd analytic =
      eigenvalue_gradient_wrt_policy(cert, x, policy, model, fd_step);
  auto lambda = [&](const Eigen::VectorXd& theta) {
    return max_eigenvalue(constraint_at(cert, x, policy.with_parameters(theta), model, fd_step))
        .value;
  };
  const Eigen::VectorXd fd = fd_gradient(lambda, policy.parameters(), 1e-6);
  return relative_error(analytic, fd);
}

inline double cost_gradient_check(const Policy& policy, const DynamicsModel& model,
                                  const CostSpec& cost, int rollouts, std::uint64_t seed) {
  const CostGradient g = estimate_cost_gradient(policy, model, cost, rollouts, seed);
  auto j = [&](const Eigen::VectorXd& theta) {
    return evaluate_cost(policy.with_parameters(theta), model, cost, rollouts, seed);
  };
  const Eigen::VectorXd fd = fd_gradient(
      j, policy.parameters(), 1e-6 * (1.0 + policy.parameters().lpNorm<Eigen::Infinity>()));
  return relative_error(g.gradient, fd);
}

inline StabilityCertificate plain_certificate(const Eigen::MatrixXd& metric, double margin_model,
                                              double margin_batch = 0.0) {
  StabilityCertificate c;
  c.metric = metric;
  c.metric_norm = spectral_norm(metric);
  c.margin_model = margin_model;
  c.margin_batch = margin_batch;
  c.margin_assumed = margin_model + margin_batch + 1.0;
  c.lipschitz_policy = 1.0;
  c.lipschitz_dynamics = 1.0;
  c.feasible = true;
  return c;
}

}  // namespace kcrl::testing

#include "kcrl/primal_dual.hpp"

namespace kcrl::testing {

/// x+ = 1.2 x + u with u = theta x + k0, unit metric, eps_i 0.1, eps_pd 0.05.
/// Feasible gains: (1.2 + theta)^2 <= 0.85.
struct ScalarInstance {
  double a = 1.2;
  double b = 1.0;
  LinearDynamics model{Eigen::MatrixXd::Constant(1, 1, 1.2), Eigen::MatrixXd::Constant(1, 1, 1.0)};
  StabilityCertificate cert = plain_certificate(Eigen::MatrixXd::Identity(1, 1), 0.1, 0.05);
  RepresentativeBatch batch = make_grid_batch(Eigen::VectorXd::Constant(1, -1.0),
                                              Eigen::VectorXd::Constant(1, 1.0), {11});
  CostSpec cost;
  ScalarInstance() {
    cost.q = Eigen::MatrixXd::Identity(1, 1);
    cost.r = Eigen::MatrixXd::Identity(1, 1);
    cost.discount = 0.97;
    cost.horizon = 50;
    for (double x : {-1.0, -0.5, 0.5, 1.0}) cost.initial_states.push_back(Eigen::VectorXd::Constant(1, x));
  }
  Policy policy(double gain, double bias = 0.0) const {
    return Policy::affine(Eigen::MatrixXd::Constant(1, 1, gain), Eigen::VectorXd::Constant(1, bias), 2.0);
  }
  bool gain_feasible(double gain) const {
    const double c = a + b * gain;
    return c * c - 1.0 + cert.margin_model + cert.margin_batch <= 0.0;
  }
};

}  // namespace kcrl::testing
