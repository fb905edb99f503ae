#pragma once

#include <Eigen/Dense>

namespace kcrl {

/// One-step dynamics x+ = F(phi) with phi = [x; u].
///
/// The controller-synthesis path only ever sees learned models through this
/// interface. Test code and simulator diagnostics plug in exact maps.
class DynamicsModel {
 public:
  virtual ~DynamicsModel() = default;

  virtual int state_dim() const = 0;
  virtual int input_dim() const = 0;
  int phi_dim() const { return state_dim() + input_dim(); }

  virtual Eigen::VectorXd next_state(
      const Eigen::Ref<const Eigen::VectorXd>& phi) const = 0;

  /// Analytic dF/dphi, n x (n + p).
  virtual Eigen::MatrixXd jacobian(
      const Eigen::Ref<const Eigen::VectorXd>& phi) const = 0;
};

/// x+ = A x + B u. Used as an exact oracle in tests and for linear plants.
class LinearDynamics final : public DynamicsModel {
 public:
  LinearDynamics(Eigen::MatrixXd a, Eigen::MatrixXd b)
      : a_(std::move(a)), b_(std::move(b)) {}

  int state_dim() const override { return static_cast<int>(a_.rows()); }
  int input_dim() const override { return static_cast<int>(b_.cols()); }

  Eigen::VectorXd next_state(
      const Eigen::Ref<const Eigen::VectorXd>& phi) const override {
    return a_ * phi.head(a_.cols()) + b_ * phi.tail(b_.cols());
  }

  Eigen::MatrixXd jacobian(
      const Eigen::Ref<const Eigen::VectorXd>&) const override {
    Eigen::MatrixXd j(a_.rows(), a_.cols() + b_.cols());
    j << a_, b_;
    return j;
  }

  const Eigen::MatrixXd& a() const { return a_; }
  const Eigen::MatrixXd& b() const { return b_; }

 private:
  Eigen::MatrixXd a_;
  Eigen::MatrixXd b_;
};

}  // namespace kcrl
