#include "kcrl/plants.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>

#include "kcrl/certificate.hpp"
#include "kcrl/errors.hpp"
#include "kcrl/jacobian.hpp"
#include "kcrl/rng.hpp"

namespace kcrl {

Plant::Plant(Spec spec) : spec_(std::move(spec)) {
  const int n = spec_.state_dim;
  const int p = spec_.input_dim;
  require(n > 0 && p > 0, "plant: dimensions must be positive");
  require(static_cast<bool>(spec_.step) && static_cast<bool>(spec_.jacobian),
          "plant: step and Jacobian maps are required");
  require(spec_.box_lower.size() == n && spec_.box_upper.size() == n,
          "plant: state box must have state dimension");
  require(spec_.witness_gain.rows() == p && spec_.witness_gain.cols() == n,
          "plant: witness gain must be p x n");
  require(spec_.initial_gain.rows() == p && spec_.initial_gain.cols() == n,
          "plant: initial gain must be p x n");
  require(spec_.witness_metric.rows() == n && spec_.witness_metric.cols() == n,
          "plant: witness metric must be n x n");
  require(spec_.equilibrium.point.size() == n, "plant: equilibrium must have length n");
  require(spec_.data_start.size() == n, "plant: data start must have length n");
}

Policy Plant::witness_policy() const {
  return Policy::affine(spec_.witness_gain, Eigen::VectorXd::Zero(spec_.input_dim),
                        std::max(spec_.constants.lipschitz_policy,
                                 spectral_norm(spec_.witness_gain)));
}

Policy Plant::initial_policy(double lipschitz_cap) const {
  Policy p = Policy::affine(spec_.initial_gain,
                            Eigen::VectorXd::Zero(spec_.input_dim), lipschitz_cap);
  p.project();
  return p;
}

Eigen::VectorXd Plant::step(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const {
  require(x.size() == spec_.state_dim && u.size() == spec_.input_dim,
          "plant step: dimension mismatch");
  return spec_.step(x, u);
}

Eigen::MatrixXd Plant::true_jacobian(const Eigen::VectorXd& x,
                                     const Eigen::VectorXd& u) const {
  require(x.size() == spec_.state_dim && u.size() == spec_.input_dim,
          "plant Jacobian: dimension mismatch");
  return spec_.jacobian(x, u);
}

double Plant::distance_to_equilibrium(const Eigen::VectorXd& x,
                                      const Policy& policy) const {
  if (spec_.equilibrium.kind == EquilibriumKind::kPoint) {
    return (x - spec_.equilibrium.point).norm();
  }
  return (x - step(x, policy.evaluate(x))).norm();
}

Eigen::VectorXd PlantDynamics::next_state(
    const Eigen::Ref<const Eigen::VectorXd>& phi) const {
  const int n = plant_.state_dim();
  return plant_.step(phi.head(n), phi.tail(plant_.input_dim()));
}

Eigen::MatrixXd PlantDynamics::jacobian(
    const Eigen::Ref<const Eigen::VectorXd>& phi) const {
  const int n = plant_.state_dim();
  return plant_.true_jacobian(phi.head(n), phi.tail(plant_.input_dim()));
}

std::vector<AuditItem> audit_plant(const Plant& plant) {
  std::vector<AuditItem> items;
  const int n = plant.state_dim();
  const int p = plant.input_dim();
  const Policy witness = plant.witness_policy();

  {
    const Eigen::VectorXd& xe = plant.equilibrium().point;
    const double residual = (plant.step(xe, witness.evaluate(xe)) - xe).norm();
    std::ostringstream os;
    os << "residual " << residual;
    items.push_back({"equilibrium_residual", residual <= 1e-10, os.str()});
  }

  {
    const PlantDynamics dyn(plant);
    Rng rng = Rng::stream(0x9a11, streams::kProbes);
    const double gamma = plant.constants().phi_bound;
    double worst = 0.0;
    for (int s = 0; s < 1000; ++s) {
      Eigen::VectorXd dir(n + p);
      for (int k = 0; k < n + p; ++k) dir(k) = rng.normal();
      const double radius = gamma * std::pow(rng.uniform(), 1.0 / (n + p));
      const Eigen::VectorXd phi = radius * dir.normalized();
      worst = std::max(worst,
                       spectral_norm(finite_difference_jacobian(dyn, phi, 1e-6).full()));
    }
    const double lf = plant.constants().lipschitz_dynamics;
    std::ostringstream os;
    os << "max probed |J_F| " << worst << " vs L_F " << lf;
    items.push_back({"lipschitz_dynamics", worst <= 1.05 * lf, os.str()});
  }

  {
    const Eigen::MatrixXd& m = plant.witness_metric();
    const Eigen::VectorXd lo = plant.box_lower();
    const Eigen::VectorXd hi = plant.box_upper();
    const RepresentativeBatch grid =
        make_grid_batch(lo, hi, std::vector<int>(n, n == 1 ? 201 : 41));
    double worst = -std::numeric_limits<double>::infinity();
    for (const auto& x : grid.points) {
      const Eigen::MatrixXd j = plant.true_jacobian(x, witness.evaluate(x));
      const Eigen::MatrixXd g =
          j.leftCols(n) + j.rightCols(p) * witness.state_jacobian(x);
      Eigen::MatrixXd k = g.transpose() * m * g - m;
      worst = std::max(worst, max_eigenvalue(0.5 * (k + k.transpose())).value);
    }
    const double eps_bar = plant.constants().stability_margin;
    std::ostringstream os;
    os << "max lambda(G'MG - M) " << worst << " vs -eps_bar " << -eps_bar;
    items.push_back({"witness_margin", worst <= -eps_bar + 1e-12, os.str()});
  }
  return items;
}

namespace {

constexpr double kTanhGain = 1.2;
constexpr double kTanhInput = 1.0;
constexpr double kPendulumDt = 0.05;
constexpr double kPendulumGravity = 9.81;
constexpr double kPendulumDamping = 0.1;

Plant make_tanh_plant() {
  constexpr double a = kTanhGain;
  constexpr double b = kTanhInput;
  Plant::Spec s;
  s.name = "P1";
  s.description = "scalar saturating map x+ = 1.2 tanh(x) + u";
  s.state_dim = 1;
  s.input_dim = 1;
  s.step = [](const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
    Eigen::VectorXd out(1);
    out(0) = kTanhGain * std::tanh(x(0)) + kTanhInput * u(0);
    return out;
  };
  s.jacobian = [](const Eigen::VectorXd& x, const Eigen::VectorXd&) {
    const double sech = 1.0 / std::cosh(x(0));
    Eigen::MatrixXd j(1, 2);
    j << kTanhGain * sech * sech, kTanhInput;
    return j;
  };
  // |J_F| <= sqrt(a^2 + b^2); |d2/dx2 a tanh| <= a * 4 / (3 sqrt 3).
  s.constants.lipschitz_dynamics = std::sqrt(a * a + b * b) + 1e-9;
  s.constants.hessian_bound = a * 4.0 / (3.0 * std::sqrt(3.0)) + 1e-9;
  s.constants.phi_bound = 8.0;
  s.constants.stability_margin = 0.5;
  s.constants.g_grad_bound = 1.0;
  s.constants.lipschitz_policy = 1.0;
  s.equilibrium = {EquilibriumKind::kFixedPointSet, Eigen::VectorXd::Zero(1)};
  s.box_lower = Eigen::VectorXd::Constant(1, -2.0);
  s.box_upper = Eigen::VectorXd::Constant(1, 2.0);
  s.witness_gain = Eigen::MatrixXd::Constant(1, 1, -0.6);
  s.witness_metric = Eigen::MatrixXd::Identity(1, 1);
  s.initial_gain = Eigen::MatrixXd::Constant(1, 1, -0.5);
  s.dither_amplitude = 3.0;
  s.data_start = Eigen::VectorXd::Constant(1, 0.5);
  return Plant(std::move(s));
}

Plant make_pendulum_plant() {
  Plant::Spec s;
  s.name = "P2";
  s.description = "damped pendulum (angle, rate), explicit Euler dt=0.05, torque input";
  s.state_dim = 2;
  s.input_dim = 1;
  s.step = [](const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
    Eigen::VectorXd out(2);
    out(0) = x(0) + kPendulumDt * x(1);
    out(1) = x(1) + kPendulumDt * (-kPendulumGravity * std::sin(x(0)) -
                                   kPendulumDamping * x(1) + u(0));
    return out;
  };
  s.jacobian = [](const Eigen::VectorXd& x, const Eigen::VectorXd&) {
    Eigen::MatrixXd j(2, 3);
    j << 1.0, kPendulumDt, 0.0,
        -kPendulumDt * kPendulumGravity * std::cos(x(0)), 1.0 - kPendulumDt * kPendulumDamping,
        kPendulumDt;
    return j;
  };
  s.constants.lipschitz_dynamics = 1.2925;
  s.constants.hessian_bound = kPendulumDt * kPendulumGravity;
  s.constants.phi_bound = 6.0;
  s.constants.stability_margin = 0.9;
  s.constants.g_grad_bound = 0.25;
  s.constants.lipschitz_policy = 10.0;
  s.equilibrium = {EquilibriumKind::kPoint, Eigen::VectorXd::Zero(2)};
  s.box_lower = (Eigen::VectorXd(2) << -0.5, -1.0).finished();
  s.box_upper = (Eigen::VectorXd(2) << 0.5, 1.0).finished();
  s.witness_gain = (Eigen::MatrixXd(1, 2) << -5.0, -8.0).finished();
  // Lyapunov metric of the witness closed loop linearized at the origin.
  const Eigen::MatrixXd j0 = s.jacobian(Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(1));
  const Eigen::MatrixXd a0 = j0.leftCols(2) + j0.rightCols(1) * s.witness_gain;
  s.witness_metric = discrete_lyapunov_series(a0, Eigen::MatrixXd::Identity(2, 2));
  s.initial_gain = s.witness_gain;
  s.dither_amplitude = 2.0;
  s.data_start = (Eigen::VectorXd(2) << 0.2, 0.0).finished();
  return Plant(std::move(s));
}

Plant make_linear_plant() {
  Plant::Spec s;
  s.name = "P3";
  s.description = "stable linear x+ = A x + B u, A = [[0.6, 0.3], [-0.2, 0.7]], B = [0; 1]";
  s.state_dim = 2;
  s.input_dim = 1;
  const Eigen::MatrixXd a = (Eigen::MatrixXd(2, 2) << 0.6, 0.3, -0.2, 0.7).finished();
  const Eigen::MatrixXd b = (Eigen::MatrixXd(2, 1) << 0.0, 1.0).finished();
  s.step = [a, b](const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
    return Eigen::VectorXd(a * x + b * u);
  };
  s.jacobian = [a, b](const Eigen::VectorXd&, const Eigen::VectorXd&) {
    Eigen::MatrixXd j(2, 3);
    j << a, b;
    return j;
  };
  Eigen::MatrixXd ab(2, 3);
  ab << a, b;
  s.constants.lipschitz_dynamics = spectral_norm(ab) + 1e-9;
  s.constants.phi_bound = 4.0;
  s.constants.stability_margin = 0.45;
  s.constants.g_grad_bound = 0.1;
  s.constants.lipschitz_policy = 1.0;
  s.equilibrium = {EquilibriumKind::kPoint, Eigen::VectorXd::Zero(2)};
  s.box_lower = Eigen::VectorXd::Constant(2, -1.0);
  s.box_upper = Eigen::VectorXd::Constant(2, 1.0);
  s.witness_gain = (Eigen::MatrixXd(1, 2) << 0.1, -0.4).finished();
  s.witness_metric = Eigen::MatrixXd::Identity(2, 2);
  s.initial_gain = Eigen::MatrixXd::Zero(1, 2);
  s.dither_amplitude = 1.5;
  s.data_start = Eigen::VectorXd::Zero(2);
  return Plant(std::move(s));
}

std::vector<Plant> make_plants() {
  std::vector<Plant> plants;
  plants.push_back(make_tanh_plant());
  plants.push_back(make_pendulum_plant());
  plants.push_back(make_linear_plant());
  for (const Plant& p : plants) {
    for (const AuditItem& item : audit_plant(p)) {
      if (!item.passed) {
        fail(ErrorCode::kInvalidConfig,
             "plant " + p.name() + " failed audit " + item.name + ": " + item.detail);
      }
    }
  }
  return plants;
}

}  // namespace

const std::vector<Plant>& builtin_plants() {
  static const std::vector<Plant> plants = make_plants();
  return plants;
}

const Plant& find_plant(const std::string& name) {
  for (const Plant& p : builtin_plants())
    if (p.name() == name) return p;
  fail(ErrorCode::kInvalidConfig, "unknown plant '" + name + "'");
}

Eigen::VectorXd dither_signal(double amplitude, int input_dim, std::int64_t t) {
  // Fractional parts of sqrt(prime) are rationally independent, so sampled at
  // integer t the tones do not collapse onto harmonics of one frequency.
  constexpr int kComponents = 6;
  constexpr int kPrimes[kComponents] = {2, 3, 5, 7, 11, 13};
  const double two_pi = 2.0 * std::numbers::pi;
  Eigen::VectorXd d = Eigen::VectorXd::Zero(input_dim);
  if (amplitude == 0.0) return d;
  const double td = static_cast<double>(t);
  for (int j = 0; j < input_dim; ++j) {
    for (int k = 0; k < kComponents; ++k) {
      const double root = std::sqrt(static_cast<double>(kPrimes[(k + j) % kComponents]));
      const double freq = two_pi * (root - std::floor(root));
      const double phase = two_pi * std::fmod((j + 1) * (k + 1) * std::numbers::sqrt2, 1.0);
      d(j) += std::sin(std::fmod(freq * td, two_pi) + phase);
    }
  }
  return (amplitude / kComponents) * d;
}

std::string policy_id(const Policy& policy) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  const auto* bytes = reinterpret_cast<const unsigned char*>(policy.parameters().data());
  for (std::size_t i = 0; i < sizeof(double) * policy.parameters().size(); ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << to_string(policy.architecture()) << '-' << std::hex << std::setw(16)
     << std::setfill('0') << h;
  return os.str();
}

Trajectory rollout(const Plant& plant, const Policy& policy,
                   const Eigen::VectorXd& x0, std::int64_t steps,
                   const RolloutOptions& options) {
  require(steps >= 1, "rollout: steps must be >= 1");
  require(x0.size() == plant.state_dim(), "rollout: initial state has the wrong length");
  Trajectory traj;
  traj.policy_id = policy_id(policy);
  traj.epoch = options.epoch;
  traj.seed = options.seed;
  traj.transitions.reserve(static_cast<std::size_t>(steps));
  Eigen::VectorXd x = x0;
  for (std::int64_t k = 0; k < steps; ++k) {
    const std::int64_t t = options.start_time + k;
    Eigen::VectorXd u = policy.evaluate(x);
    if (options.dither_amplitude != 0.0)
      u += dither_signal(options.dither_amplitude, plant.input_dim(), t);
    Eigen::VectorXd next = plant.step(x, u);
    if (!next.allFinite() || next.norm() > kDivergenceThreshold) {
      throw Divergence("rollout diverged at step " + std::to_string(k + 1) +
                           " (t=" + std::to_string(t + 1) + ")",
                       k + 1);
    }
    traj.transitions.push_back({x, std::move(u), next, t, options.epoch});
    x = std::move(next);
  }
  return traj;
}

StabilityMetrics stability_metrics(const Trajectory& traj, const Plant& plant,
                                   const Policy& policy,
                                   const std::optional<Eigen::MatrixXd>& metric,
                                   double neighborhood) {
  StabilityMetrics out;
  if (traj.transitions.empty()) return out;
  std::vector<Eigen::VectorXd> states;
  states.reserve(traj.transitions.size() + 1);
  for (const auto& tr : traj.transitions) states.push_back(tr.state);
  states.push_back(traj.transitions.back().next_state);

  std::vector<double> dist(states.size());
  for (std::size_t t = 0; t < states.size(); ++t)
    dist[t] = plant.distance_to_equilibrium(states[t], policy);
  out.final_dist = dist.back();

  // Least-squares slope of log dist over the second half.
  const std::size_t start = states.size() / 2;
  double st = 0, sl = 0, stt = 0, stl = 0;
  int cnt = 0;
  for (std::size_t t = start; t < states.size(); ++t) {
    if (!(dist[t] > 0.0) || !std::isfinite(dist[t])) continue;
    const double tt = static_cast<double>(t);
    const double l = std::log(dist[t]);
    st += tt; sl += l; stt += tt * tt; stl += tt * l;
    ++cnt;
  }
  if (cnt >= 2) {
    const double denom = cnt * stt - st * st;
    out.decay_rate = denom > 0.0 ? std::exp((cnt * stl - st * sl) / denom) : 0.0;
  }
  // A trajectory parked at a constant offset fits a rate of 1 up to rounding;
  // only measurable growth counts.
  out.diverging = out.decay_rate > 1.0 + 1e-6 && out.final_dist > neighborhood;

  if (metric) {
    // V vanishes on the closed-loop fixed-point set, so steps are checked by
    // their fixed-point residual even when S_e is a single point.
    std::vector<double> residual(states.size()), v(states.size());
    for (std::size_t t = 0; t < states.size(); ++t) {
      const Eigen::VectorXd r = states[t] - plant.step(states[t], policy.evaluate(states[t]));
      residual[t] = r.norm();
      v[t] = r.dot(*metric * r);
    }
    for (std::size_t t = 0; t + 1 < states.size(); ++t) {
      const double v_prev = v[t], v_next = v[t + 1];
      if (residual[t] > neighborhood) {
        ++out.lyapunov_checked;
        if (v_next >= v_prev) ++out.lyapunov_violations;
      }
    }
  }
  return out;
}

}  // namespace kcrl
