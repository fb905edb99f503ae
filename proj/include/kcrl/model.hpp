#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <string>

#include "kcrl/dynamics.hpp"
#include "kcrl/feature_map.hpp"

namespace kcrl {

struct Transition {
  Eigen::VectorXd state;
  Eigen::VectorXd action;
  Eigen::VectorXd next_state;
  std::int64_t time_index = 0;
  int epoch_index = 0;

  Eigen::VectorXd phi() const;
};

/// Ridge-regression estimate W of x+ ~ W^T z(phi).
///
/// Keeps the sufficient statistics gram = Z Z^T + lambda I and cross = Z X^T
/// exactly; the weights are refreshed by a Cholesky solve on first read after
/// an update. Single writer. Hand `snapshot()` copies to concurrent readers.
class ModelEstimate {
 public:
  ModelEstimate(const FeatureMap& map, int state_dim, double regularizer);

  /// Restores a model from stored statistics (checkpoint load). The weights
  /// are taken as given; call `refresh()` to recompute them.
  ModelEstimate(Eigen::MatrixXd weights, Eigen::MatrixXd gram,
                Eigen::MatrixXd cross, double regularizer,
                std::int64_t sample_count, std::string feature_map_ref);

  void absorb(const FeatureMap& map, const Transition& tr);

  /// Adds `weight` copies of the transition to the statistics.
  void absorb_weighted(const FeatureMap& map, const Transition& tr,
                       double weight);

  /// Absorbs transitions in blocks with one symmetric rank-k update each.
  void absorb_all(const FeatureMap& map, std::span<const Transition> trs);

  /// Solves gram * W = cross (with one step of iterative refinement).
  void refresh() const;

  /// Frozen copy with refreshed weights, safe to share read-only.
  ModelEstimate snapshot() const;

  Eigen::VectorXd predict(const FeatureMap& map,
                          const Eigen::Ref<const Eigen::VectorXd>& phi) const;

  /// Analytic dF/dphi = W^T dz/dphi.
  Eigen::MatrixXd jacobian(const FeatureMap& map,
                           const Eigen::Ref<const Eigen::VectorXd>& phi) const;

  const Eigen::MatrixXd& weights() const;
  const Eigen::MatrixXd& gram() const { return gram_; }
  const Eigen::MatrixXd& cross() const { return cross_; }
  double regularizer() const { return regularizer_; }
  std::int64_t sample_count() const { return sample_count_; }
  const std::string& feature_map_ref() const { return feature_map_ref_; }
  int state_dim() const { return static_cast<int>(cross_.cols()); }
  int feature_count() const { return static_cast<int>(gram_.rows()); }

  /// ||gram W - cross||_F / ||cross||_F, or 0 when cross is zero.
  double closed_form_residual() const;

  /// Smallest eigenvalue of (gram - lambda I) / sample_count; the persistent
  /// excitation diagnostic. Zero for an empty model.
  double excitation() const;

 private:
  void check_transition(const FeatureMap& map, const Transition& tr) const;

  mutable Eigen::MatrixXd weights_;
  mutable bool dirty_ = false;
  Eigen::MatrixXd gram_;
  Eigen::MatrixXd cross_;
  double regularizer_;
  std::int64_t sample_count_ = 0;
  std::string feature_map_ref_;
};

/// Max over the holdout of |x+ - predict(phi)|_2.
double empirical_model_error(const ModelEstimate& model, const FeatureMap& map,
                             std::span<const Transition> holdout);

/// The learned map F(phi) = W^T z(phi) as a DynamicsModel. Holds references;
/// both objects must outlive it and must not be mutated while it is in use.
class LearnedDynamics final : public DynamicsModel {
 public:
  LearnedDynamics(const ModelEstimate& model, const FeatureMap& map,
                  int input_dim);

  int state_dim() const override { return model_.state_dim(); }
  int input_dim() const override { return input_dim_; }
  Eigen::VectorXd next_state(
      const Eigen::Ref<const Eigen::VectorXd>& phi) const override;
  Eigen::MatrixXd jacobian(
      const Eigen::Ref<const Eigen::VectorXd>& phi) const override;

  const ModelEstimate& model() const { return model_; }
  const FeatureMap& feature_map() const { return map_; }

 private:
  const ModelEstimate& model_;
  const FeatureMap& map_;
  int input_dim_;
};

}  // namespace kcrl
