#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>

namespace kcrl {

/// Frozen Random Fourier Feature basis for the Gaussian kernel
/// k(x, y) = exp(-|x - y|^2 / (2 sigma^2)).
///
/// z_j(phi) = sqrt(2/D) cos(w_j . phi + b_j), with w_j ~ N(0, sigma^-2 I) and
/// b_j ~ U[0, 2 pi). Immutable after construction.
class FeatureMap {
 public:
  /// Samples a new basis. Frequencies come from stream kFrequencies, phases
  /// from stream kPhases of `seed`, so the two never share random draws.
  static FeatureMap generate(int input_dim, int feature_count, double bandwidth,
                             std::uint64_t seed);

  /// Wraps explicit frequencies (D x d) and phases (D). Validates invariants.
  FeatureMap(Eigen::MatrixXd frequencies, Eigen::VectorXd phases,
             double bandwidth, std::uint64_t seed);

  Eigen::VectorXd featurize(const Eigen::Ref<const Eigen::VectorXd>& phi) const;

  /// Featurizes every column of `phis` (d x N) into a D x N matrix.
  Eigen::MatrixXd featurize_columns(
      const Eigen::Ref<const Eigen::MatrixXd>& phis) const;

  /// dz/dphi, a D x d matrix with row j = -sqrt(2/D) sin(w_j . phi + b_j) w_j.
  Eigen::MatrixXd featurize_gradient(
      const Eigen::Ref<const Eigen::VectorXd>& phi) const;

  int input_dim() const { return static_cast<int>(frequencies_.cols()); }
  int feature_count() const { return static_cast<int>(frequencies_.rows()); }
  double bandwidth() const { return bandwidth_; }
  std::uint64_t seed() const { return seed_; }
  const Eigen::MatrixXd& frequencies() const { return frequencies_; }
  const Eigen::VectorXd& phases() const { return phases_; }
  double scale() const { return scale_; }

  /// Content fingerprint (FNV-1a over the raw bits), used as model reference.
  std::string fingerprint() const;

 private:
  void check_input(const Eigen::Ref<const Eigen::VectorXd>& phi) const;

  Eigen::MatrixXd frequencies_;
  Eigen::VectorXd phases_;
  double bandwidth_;
  std::uint64_t seed_;
  double scale_;
};

}  // namespace kcrl
