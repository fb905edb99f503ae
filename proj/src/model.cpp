#include "kcrl/model.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>

#include "kcrl/errors.hpp"

namespace kcrl {

Eigen::VectorXd Transition::phi() const {
  Eigen::VectorXd out(state.size() + action.size());
  out << state, action;
  return out;
}

ModelEstimate::ModelEstimate(const FeatureMap& map, int state_dim,
                             double regularizer)
    : regularizer_(regularizer), feature_map_ref_(map.fingerprint()) {
  require(state_dim > 0, "model: state dimension must be positive");
  require(std::isfinite(regularizer) && regularizer > 0.0,
          "model: regularizer must be positive");
  const int d = map.feature_count();
  gram_ = regularizer * Eigen::MatrixXd::Identity(d, d);
  cross_ = Eigen::MatrixXd::Zero(d, state_dim);
  weights_ = Eigen::MatrixXd::Zero(d, state_dim);
}

ModelEstimate::ModelEstimate(Eigen::MatrixXd weights, Eigen::MatrixXd gram,
                             Eigen::MatrixXd cross, double regularizer,
                             std::int64_t sample_count,
                             std::string feature_map_ref)
    : weights_(std::move(weights)),
      gram_(std::move(gram)),
      cross_(std::move(cross)),
      regularizer_(regularizer),
      sample_count_(sample_count),
      feature_map_ref_(std::move(feature_map_ref)) {
  require(gram_.rows() == gram_.cols(), "model: gram must be square");
  require(cross_.rows() == gram_.rows() && weights_.rows() == gram_.rows() &&
              weights_.cols() == cross_.cols(),
          "model: inconsistent statistic dimensions");
  require(regularizer_ > 0.0, "model: regularizer must be positive");
  require(sample_count_ >= 0, "model: negative sample count");
}

void ModelEstimate::check_transition(const FeatureMap& map,
                                     const Transition& tr) const {
  if (tr.state.size() + tr.action.size() != map.input_dim() ||
      tr.next_state.size() != cross_.cols()) {
    fail(ErrorCode::kInvalidArgument, "absorb: transition dimension mismatch");
  }
  if (!tr.state.allFinite() || !tr.action.allFinite() ||
      !tr.next_state.allFinite()) {
    fail(ErrorCode::kDataQuality,
         "absorb: non-finite transition at t=" + std::to_string(tr.time_index));
  }
  if (map.feature_count() != gram_.rows()) {
    fail(ErrorCode::kInvalidArgument, "absorb: feature map does not match model");
  }
}

void ModelEstimate::absorb(const FeatureMap& map, const Transition& tr) {
  absorb_weighted(map, tr, 1.0);
}

void ModelEstimate::absorb_weighted(const FeatureMap& map, const Transition& tr,
                                    double weight) {
  check_transition(map, tr);
  require(weight > 0.0 && std::isfinite(weight), "absorb: weight must be positive");
  const Eigen::VectorXd z = map.featurize(tr.phi());
  gram_.noalias() += weight * z * z.transpose();
  cross_.noalias() += weight * z * tr.next_state.transpose();
  sample_count_ += static_cast<std::int64_t>(std::llround(weight));
  dirty_ = true;
}

void ModelEstimate::absorb_all(const FeatureMap& map,
                               std::span<const Transition> trs) {
  constexpr std::size_t kBlock = 512;
  const int n = state_dim();
  for (std::size_t start = 0; start < trs.size(); start += kBlock) {
    const std::size_t len = std::min(kBlock, trs.size() - start);
    Eigen::MatrixXd phis(map.input_dim(), static_cast<Eigen::Index>(len));
    Eigen::MatrixXd next(n, static_cast<Eigen::Index>(len));
    for (std::size_t k = 0; k < len; ++k) {
      const Transition& tr = trs[start + k];
      check_transition(map, tr);
      phis.col(static_cast<Eigen::Index>(k)) = tr.phi();
      next.col(static_cast<Eigen::Index>(k)) = tr.next_state;
    }
    const Eigen::MatrixXd z = map.featurize_columns(phis);
    gram_.selfadjointView<Eigen::Lower>().rankUpdate(z);
    cross_.noalias() += z * next.transpose();
    sample_count_ += static_cast<std::int64_t>(len);
  }
  // rankUpdate only writes the lower triangle.
  gram_.triangularView<Eigen::StrictlyUpper>() = gram_.transpose();
  dirty_ = true;
}

void ModelEstimate::refresh() const {
  Eigen::LLT<Eigen::MatrixXd> llt(gram_);
  if (llt.info() != Eigen::Success) {
    fail(ErrorCode::kNumeric, "model: gram matrix is not positive definite");
  }
  weights_ = llt.solve(cross_);
  const Eigen::MatrixXd residual = cross_ - gram_ * weights_;
  weights_ += llt.solve(residual);
  dirty_ = false;
}

ModelEstimate ModelEstimate::snapshot() const {
  if (dirty_) refresh();
  return *this;
}

const Eigen::MatrixXd& ModelEstimate::weights() const {
  if (dirty_) refresh();
  return weights_;
}

Eigen::VectorXd ModelEstimate::predict(
    const FeatureMap& map, const Eigen::Ref<const Eigen::VectorXd>& phi) const {
  require(map.feature_count() == gram_.rows(),
          "predict: feature map does not match model");
  return weights().transpose() * map.featurize(phi);
}

Eigen::MatrixXd ModelEstimate::jacobian(
    const FeatureMap& map, const Eigen::Ref<const Eigen::VectorXd>& phi) const {
  require(map.feature_count() == gram_.rows(),
          "jacobian: feature map does not match model");
  return weights().transpose() * map.featurize_gradient(phi);
}

double ModelEstimate::closed_form_residual() const {
  const double denom = cross_.norm();
  if (denom == 0.0) return 0.0;
  return (gram_ * weights() - cross_).norm() / denom;
}

double ModelEstimate::excitation() const {
  if (sample_count_ == 0) return 0.0;
  Eigen::MatrixXd design = gram_;
  design.diagonal().array() -= regularizer_;
  design /= static_cast<double>(sample_count_);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(design,
                                                    Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

double empirical_model_error(const ModelEstimate& model, const FeatureMap& map,
                             std::span<const Transition> holdout) {
  require(!holdout.empty(), "model error: holdout must be non-empty");
  double worst = 0.0;
  for (const Transition& tr : holdout) {
    const Eigen::VectorXd pred = model.predict(map, tr.phi());
    worst = std::max(worst, (tr.next_state - pred).norm());
  }
  return worst;
}

LearnedDynamics::LearnedDynamics(const ModelEstimate& model,
                                 const FeatureMap& map, int input_dim)
    : model_(model), map_(map), input_dim_(input_dim) {
  require(model.state_dim() + input_dim == map.input_dim(),
          "learned dynamics: state + input dims must equal feature input dim");
  model_.weights();  // settle lazy weights before shared reads
}

Eigen::VectorXd LearnedDynamics::next_state(
    const Eigen::Ref<const Eigen::VectorXd>& phi) const {
  return model_.predict(map_, phi);
}

Eigen::MatrixXd LearnedDynamics::jacobian(
    const Eigen::Ref<const Eigen::VectorXd>& phi) const {
  return model_.jacobian(map_, phi);
}

}  // namespace kcrl
