#include <doctest.h>

#include <cmath>

#include "kcrl/plants.hpp"
#include "kcrl/primal_dual.hpp"
#include "oracles.hpp"

using namespace kcrl;
using namespace kcrl::testing;

namespace {

/// d/dtheta of sum_{t<H} gamma^t (1 + theta^2) c^{2t} x0^2 with c = a + b theta.
double scalar_cost_derivative(double a, double b, double theta, double gamma, int horizon,
                              const std::vector<double>& starts) {
  const double c = a + b * theta;
  double sum = 0.0, disc = 1.0;
  for (int t = 0; t < horizon; ++t) {
    const double c2t = std::pow(c, 2 * t);
    const double dc2t = t == 0 ? 0.0 : 2.0 * t * std::pow(c, 2 * t - 1) * b;
    sum += disc * (2.0 * theta * c2t + (1.0 + theta * theta) * dc2t);
    disc *= gamma;
  }
  double mean_sq = 0.0;
  for (double x : starts) mean_sq += x * x;
  return sum * mean_sq / starts.size();
}

}  // namespace

TEST_CASE("affine policy examples") {
  const Policy zero = Policy::affine(Eigen::MatrixXd::Zero(1, 2), Eigen::VectorXd::Zero(1), 1.0);
  Eigen::VectorXd x(2);
  x << 2.0, 5.0;
  CHECK(zero.evaluate(x)(0) == 0.0);
  Eigen::MatrixXd k(1, 2);
  k << 1.0, 0.0;
  const Policy pick = Policy::affine(k, Eigen::VectorXd::Zero(1), 1.0);
  CHECK(pick.evaluate(x)(0) == 2.0);
  CHECK(error_code_of([&] { pick.evaluate(Eigen::VectorXd::Constant(2, NAN)); }) ==
        ErrorCode::kInvalidArgument);
  CHECK(pick.gain() == k);
  CHECK(parse_policy_architecture(to_string(PolicyArchitecture::kMlp)) == PolicyArchitecture::kMlp);
}

TEST_CASE("projected policies respect the Lipschitz cap") {
  Rng rng(3);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Policy net = Policy::mlp(2, 1, 8, 0.7, seed, 3.0);
    net.project();
    CHECK(net.lipschitz_bound() <= 0.7 + 1e-12);
    Eigen::MatrixXd gain(2, 3);
    for (int i = 0; i < 6; ++i) gain(i / 3, i % 3) = 5.0 * rng.normal();
    Policy aff = Policy::affine(gain, Eigen::VectorXd::Zero(2), 0.7);
    CHECK(aff.project());
    for (int i = 0; i < 100; ++i) {
      const Eigen::VectorXd x = ball_point(rng, 2, 5.0);
      Eigen::MatrixXd fd(1, 2);
      for (int k = 0; k < 2; ++k) {
        Eigen::VectorXd a = x, b = x;
        a(k) += 1e-6;
        b(k) -= 1e-6;
        fd.col(k) = (net.evaluate(a) - net.evaluate(b)) / 2e-6;
      }
      CHECK(spectral_norm(fd) <= 0.7 + 1e-6);
      CHECK(spectral_norm(aff.state_jacobian(ball_point(rng, 3, 1.0))) <= 0.7 + 1e-6);
    }
  }
}

TEST_CASE("policy Jacobians match central differences") {
  const Policy net = Policy::mlp(2, 2, 5, 3.0, 4);
  Rng rng(8);
  const Eigen::VectorXd x = ball_point(rng, 2, 1.0);
  const Eigen::MatrixXd js = net.state_jacobian(x);
  const Eigen::MatrixXd jp = net.parameter_jacobian(x);
  for (int k = 0; k < 2; ++k) {
    Eigen::VectorXd a = x, b = x;
    a(k) += 1e-6;
    b(k) -= 1e-6;
    CHECK(((net.evaluate(a) - net.evaluate(b)) / 2e-6 - js.col(k)).norm() <= 1e-8);
  }
  for (int i = 0; i < net.parameter_count(); ++i) {
    Eigen::VectorXd a = net.parameters(), b = a;
    a(i) += 1e-6;
    b(i) -= 1e-6;
    const Eigen::VectorXd col =
        (net.with_parameters(a).evaluate(x) - net.with_parameters(b).evaluate(x)) / 2e-6;
    CHECK((col - jp.col(i)).norm() <= 1e-8);
  }
}

TEST_CASE("zero cost gives a zero gradient") {
  ScalarInstance s;
  s.cost.q.setZero();
  s.cost.r.setZero();
  const CostGradient g = estimate_cost_gradient(s.policy(-0.5), s.model, s.cost, 4, 0);
  CHECK(g.cost == 0.0);
  CHECK(g.gradient.isZero(0.0));
}

TEST_CASE("scalar cost gradient matches the geometric-series closed form") {
  const ScalarInstance s;
  for (double theta : {-1.5, -0.8, -0.3, 0.0}) {
    const CostGradient g = estimate_cost_gradient(s.policy(theta), s.model, s.cost, 4, 0);
    const double expected =
        scalar_cost_derivative(s.a, s.b, theta, 0.97, 50, {-1.0, -0.5, 0.5, 1.0});
    CHECK(g.gradient(0) == doctest::Approx(expected).epsilon(1e-4));
    // Symmetric starting states: zero bias gradient at zero bias.
    CHECK(std::abs(g.gradient(1)) <= 1e-10 * (1.0 + std::abs(expected)));
  }
}

TEST_CASE("cost gradient matches central differences on every plant") {
  for (const Plant& plant : builtin_plants()) {
    const PlantDynamics f(plant);
    CostSpec cost;
    cost.q = Eigen::MatrixXd::Identity(plant.state_dim(), plant.state_dim());
    cost.r = Eigen::MatrixXd::Identity(plant.input_dim(), plant.input_dim());
    cost.horizon = 30;
    cost.initial_lower = plant.box_lower();
    cost.initial_upper = plant.box_upper();
    CHECK(cost_gradient_check(plant.witness_policy(), f, cost, 4, 1) <= 1e-3);
    const Policy net = Policy::mlp(plant.state_dim(), plant.input_dim(), 4,
                                   plant.constants().lipschitz_policy, 2);
    CHECK(cost_gradient_check(net, f, cost, 4, 1) <= 1e-3);
  }
}

TEST_CASE("divergent cost rollout carries its seed") {
  const ScalarInstance s;
  try {
    estimate_cost_gradient(s.policy(2.0), s.model, s.cost, 4, 42);
    FAIL("expected a divergence");
  } catch (const RolloutDivergence& e) {
    CHECK(e.seed() == 42);
  }
}

TEST_CASE("dual update rules") {
  const ScalarInstance s;
  // Feasible, mu = 0: pure cost descent.
  const Policy feasible = s.policy(-1.0);
  DualState dual;
  const StepResult r = primal_dual_step(feasible, dual, s.cert, s.batch, s.model, s.cost, {});
  CHECK(r.diagnostics.constraint_value < 0.0);
  CHECK(r.dual.multiplier == 0.0);
  const CostGradient g = estimate_cost_gradient(feasible, s.model, s.cost, 8, 0);
  CHECK((r.policy.parameters() - (feasible.parameters() - 1e-3 * g.gradient)).norm() <= 1e-15);

  // Violated constraint: mu grows by eta_2 times the violation.
  dual.multiplier = 0.3;
  const StepResult v = primal_dual_step(s.policy(0.0), dual, s.cert, s.batch, s.model, s.cost, {});
  CHECK(v.diagnostics.constraint_value > 0.0);
  CHECK(v.dual.multiplier == 0.3 + 1e-2 * v.diagnostics.constraint_value);
  CHECK(v.dual.iteration == 1);
}

TEST_CASE("scalar instance reaches feasibility with mu never negative") {
  const ScalarInstance s;
  double min_mu = INFINITY;
  const SolveResult res = solve_constrained_policy(
      s.policy(0.0), {}, s.cert, s.batch, s.model, s.cost, {}, {},
      [&](const IterationDiagnostics& d) { min_mu = std::min(min_mu, d.multiplier); });
  CHECK(res.report.feasible);
  CHECK(res.report.iterations <= 5000);
  CHECK(min_mu >= 0.0);
  const double gain = res.policy.gain()(0, 0);
  CHECK(s.gain_feasible(gain));
  const BatchSup audit = batch_sup(s.cert, s.batch, res.policy, s.model, 1e-3);
  CHECK(audit.value + s.cert.margin_batch <= 1e-9);
  CHECK(res.policy.lipschitz_bound() <= 2.0 + 1e-12);
  // The returned gain stabilizes the plant.
  double x = 1.0;
  for (int t = 0; t < 200; ++t) x = s.a * x + s.b * res.policy.evaluate(Eigen::VectorXd::Constant(1, x))(0);
  CHECK(std::abs(x) <= 1e-6);
}

TEST_CASE("solve is bit-for-bit deterministic") {
  const ScalarInstance s;
  StopRule stop;
  stop.max_iters = 300;
  const SolveResult a = solve_constrained_policy(s.policy(-0.5), {}, s.cert, s.batch, s.model, s.cost, {}, stop);
  const SolveResult b = solve_constrained_policy(s.policy(-0.5), {}, s.cert, s.batch, s.model, s.cost, {}, stop);
  CHECK(a.policy.parameters() == b.policy.parameters());
  CHECK(a.dual.multiplier == b.dual.multiplier);
}

TEST_CASE("a feasible optimum for a trivial cost is a fixed point") {
  ScalarInstance s;
  s.cost.q.setZero();
  s.cost.r.setZero();
  const Policy start = s.policy(-1.2, 0.0);
  const SolveResult res = solve_constrained_policy(start, {}, s.cert, s.batch, s.model, s.cost, {}, {});
  CHECK(res.report.converged);
  CHECK(res.report.iterations <= 2);
  CHECK((res.policy.parameters() - start.parameters()).norm() <= 1e-8);
}

TEST_CASE("an unreachable margin ends in infeasible-result") {
  ScalarInstance s;
  s.cert.margin_model = 5.0;
  StopRule stop;
  stop.max_iters = 50;
  CHECK(error_code_of([&] {
          solve_constrained_policy(s.policy(-1.0), {}, s.cert, s.batch, s.model, s.cost, {}, stop);
        }) == ErrorCode::kInfeasibleResult);
  s.cert.feasible = false;
  CHECK(error_code_of([&] {
          primal_dual_step(s.policy(-1.0), {}, s.cert, s.batch, s.model, s.cost, {});
        }) == ErrorCode::kInfeasibleBatch);
}
