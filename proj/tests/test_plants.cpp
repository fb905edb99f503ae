#include <doctest.h>

#include <cmath>

#include "kcrl/certificate.hpp"
#include "kcrl/plants.hpp"
#include "oracles.hpp"

using namespace kcrl;
using namespace kcrl::testing;

namespace {

Policy zero_policy(const Plant& p) {
  return Policy::affine(Eigen::MatrixXd::Zero(p.input_dim(), p.state_dim()),
                        Eigen::VectorXd::Zero(p.input_dim()), 1.0);
}

Eigen::MatrixXd p3_a() {
  Eigen::MatrixXd a(2, 2);
  a << 0.6, 0.3, -0.2, 0.7;
  return a;
}

}  // namespace

TEST_CASE("at least three built-in plants, each passing its audits") {
  const auto& plants = builtin_plants();
  CHECK(plants.size() >= 3);
  for (const Plant& p : plants) {
    for (const AuditItem& item : audit_plant(p)) {
      INFO(p.name() << " " << item.name << ": " << item.detail);
      CHECK(item.passed);
    }
  }
  CHECK(error_code_of([] { find_plant("P9"); }) == ErrorCode::kInvalidConfig);
}

TEST_CASE("linear plant without input follows powers of A") {
  const Plant& p3 = find_plant("P3");
  Eigen::VectorXd x0(2);
  x0 << 1.0, -0.5;
  const Trajectory tr = rollout(p3, zero_policy(p3), x0, 20);
  Eigen::MatrixXd power = Eigen::MatrixXd::Identity(2, 2);
  for (int t = 0; t < 20; ++t) {
    power = p3_a() * power;
    CHECK((tr.transitions[t].next_state - power * x0).norm() <= 1e-14);
  }
}

TEST_CASE("tanh plant: equilibrium, Jacobian and the uncontrolled fixed point") {
  const Plant& p1 = find_plant("P1");
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(1);
  CHECK(p1.step(zero, zero)(0) == 0.0);
  CHECK(p1.true_jacobian(zero, zero)(0, 0) == doctest::Approx(1.2).epsilon(1e-15));
  CHECK(p1.true_jacobian(zero, zero)(0, 1) == doctest::Approx(1.0).epsilon(1e-15));

  // Positive root of x = 1.2 tanh(x) by bisection.
  double lo = 0.1, hi = 2.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (1.2 * std::tanh(mid) - mid > 0.0 ? lo : hi) = mid;
  }
  const Trajectory tr = rollout(p1, zero_policy(p1), Eigen::VectorXd::Constant(1, 0.5), 400);
  CHECK(tr.transitions.back().next_state(0) == doctest::Approx(lo).epsilon(1e-10));
  // The fixed point belongs to the equilibrium set under u = 0.
  CHECK(p1.distance_to_equilibrium(Eigen::VectorXd::Constant(1, lo), zero_policy(p1)) <= 1e-12);
}

TEST_CASE("rollout bookkeeping") {
  const Plant& p2 = find_plant("P2");
  const Policy pol = p2.witness_policy();
  Eigen::VectorXd x0(2);
  x0 << 0.3, -0.2;
  RolloutOptions opt;
  opt.start_time = 100;
  opt.epoch = 3;
  opt.seed = 9;
  opt.dither_amplitude = 0.5;
  const Trajectory tr = rollout(p2, pol, x0, 50, opt);
  REQUIRE(tr.transitions.size() == 50);
  CHECK(tr.epoch == 3);
  CHECK(tr.seed == 9);
  CHECK(tr.policy_id == policy_id(pol));
  CHECK(tr.transitions[0].state == x0);
  for (std::size_t k = 0; k < tr.transitions.size(); ++k) {
    const Transition& t = tr.transitions[k];
    CHECK(t.time_index == 100 + static_cast<std::int64_t>(k));
    CHECK(t.epoch_index == 3);
    CHECK(t.next_state == p2.step(t.state, t.action));
    if (k + 1 < tr.transitions.size()) CHECK(tr.transitions[k + 1].state == t.next_state);
    CHECK((t.action - pol.evaluate(t.state)).cwiseAbs().maxCoeff() <= 0.5 + 1e-15);
  }
  const Trajectory one = rollout(p2, pol, x0, 1);
  CHECK(one.transitions.size() == 1);
  CHECK(error_code_of([&] { rollout(p2, pol, x0, 0); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("divergent rollout reports the step") {
  const Plant& p3 = find_plant("P3");
  Eigen::MatrixXd k(1, 2);
  k << 0.0, 20.0;
  const Policy wild = Policy::affine(k, Eigen::VectorXd::Zero(1), 100.0);
  try {
    rollout(p3, wild, Eigen::VectorXd::Constant(2, 1.0), 1000);
    FAIL("expected divergence");
  } catch (const Divergence& e) {
    CHECK(e.step() > 1);
    CHECK(e.step() < 1000);
    CHECK(e.code() == ErrorCode::kDivergence);
  }
}

TEST_CASE("stabilized linear plant stays under the closed-loop power bound") {
  const Plant& p3 = find_plant("P3");
  const Policy pol = p3.witness_policy();
  Eigen::MatrixXd b(2, 1);
  b << 0.0, 1.0;
  const Eigen::MatrixXd closed = p3_a() + b * pol.gain();
  Eigen::VectorXd x0(2);
  x0 << -0.8, 0.9;
  const Trajectory tr = rollout(p3, pol, x0, 60);
  Eigen::MatrixXd power = Eigen::MatrixXd::Identity(2, 2);
  for (const auto& t : tr.transitions) {
    power = closed * power;
    CHECK(t.next_state.norm() <= spectral_norm(power) * x0.norm() + 1e-14);
  }
}

TEST_CASE("stability metrics") {
  const Plant& p3 = find_plant("P3");
  const Policy pol = p3.witness_policy();
  const Eigen::MatrixXd m = p3.witness_metric();

  const Trajectory rest = rollout(p3, pol, Eigen::VectorXd::Zero(2), 50);
  const StabilityMetrics r = stability_metrics(rest, p3, pol, m);
  CHECK(r.final_dist == 0.0);
  CHECK(r.lyapunov_violations == 0);
  CHECK(r.lyapunov_checked == 0);
  CHECK_FALSE(r.diverging);

  Eigen::VectorXd x0(2);
  x0 << 1.0, 1.0;
  const Trajectory conv = rollout(p3, pol, x0, 500);
  const StabilityMetrics c = stability_metrics(conv, p3, pol, m);
  CHECK(c.lyapunov_violations == 0);
  CHECK(c.lyapunov_checked > 0);
  CHECK(c.final_dist <= 1e-10);
  CHECK(c.decay_rate < 1.0);
  CHECK_FALSE(c.diverging);

  Eigen::MatrixXd k(1, 2);
  k << 0.0, 1.5;
  const Policy bad = Policy::affine(k, Eigen::VectorXd::Zero(1), 10.0);
  const Trajectory grow = rollout(p3, bad, Eigen::VectorXd::Constant(2, 0.01), 10);
  const StabilityMetrics g = stability_metrics(grow, p3, bad, std::nullopt);
  CHECK(g.decay_rate >= 1.0);
  CHECK(g.diverging);
  CHECK(g.lyapunov_checked == 0);

  // A constant input parks the state away from the origin: not diverging,
  // and V is flat there, so no steps are checked once it settles.
  const Policy offset = Policy::affine(Eigen::MatrixXd::Zero(1, 2), Eigen::VectorXd::Constant(1, 0.1), 1.0);
  const Trajectory park = rollout(p3, offset, Eigen::VectorXd::Zero(2), 400);
  const StabilityMetrics pm = stability_metrics(park, p3, offset, m);
  CHECK(pm.final_dist > 0.01);
  CHECK_FALSE(pm.diverging);
  CHECK(pm.lyapunov_violations == 0);
}

TEST_CASE("dither is bounded and deterministic") {
  for (std::int64_t t = 0; t < 5000; ++t) {
    const Eigen::VectorXd d = dither_signal(2.0, 2, t);
    CHECK(d.cwiseAbs().maxCoeff() <= 2.0);
    CHECK(d == dither_signal(2.0, 2, t));
  }
  CHECK(dither_signal(0.0, 1, 17).isZero(0.0));
  // Channels differ.
  CHECK(dither_signal(1.0, 2, 3)(0) != dither_signal(1.0, 2, 3)(1));
}

TEST_CASE("witness margins on the linear plant are exact") {
  const Plant& p3 = find_plant("P3");
  Eigen::MatrixXd b(2, 1);
  b << 0.0, 1.0;
  const Eigen::MatrixXd g = p3_a() + b * p3.witness_policy().gain();
  const Eigen::MatrixXd m = p3.witness_metric();
  const double top = max_eigenvalue(g.transpose() * m * g - m).value;
  CHECK(top <= -p3.constants().stability_margin);
}

TEST_CASE("policy ids depend only on the parameters") {
  const Plant& p2 = find_plant("P2");
  const Policy a = p2.witness_policy();
  const Policy b = p2.witness_policy();
  CHECK(policy_id(a) == policy_id(b));
  Eigen::VectorXd theta = a.parameters();
  theta(0) += 1e-12;
  CHECK(policy_id(a) != policy_id(a.with_parameters(theta)));
  CHECK(policy_id(a).rfind("affine-", 0) == 0);
}
