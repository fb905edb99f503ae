#include "kcrl/feature_map.hpp"

#include <cmath>
#include <cstring>
#include <numbers>
#include <sstream>
#include <iomanip>

#include "kcrl/errors.hpp"
#include "kcrl/rng.hpp"

namespace kcrl {

FeatureMap FeatureMap::generate(int input_dim, int feature_count,
                                double bandwidth, std::uint64_t seed) {
  require(input_dim > 0, "feature map: input dimension must be positive");
  require(feature_count > 0, "feature map: feature count must be positive");
  require(std::isfinite(bandwidth) && bandwidth > 0.0,
          "feature map: bandwidth must be positive and finite");

  Rng freq_rng = Rng::stream(seed, streams::kFrequencies);
  Rng phase_rng = Rng::stream(seed, streams::kPhases);

  Eigen::MatrixXd w(feature_count, input_dim);
  for (int j = 0; j < feature_count; ++j)
    for (int k = 0; k < input_dim; ++k) w(j, k) = freq_rng.normal() / bandwidth;

  Eigen::VectorXd b(feature_count);
  for (int j = 0; j < feature_count; ++j) {
    b(j) = 2.0 * std::numbers::pi * phase_rng.uniform();
    // 2 pi * (1 - 2^-53) can round up to 2 pi.
    if (b(j) >= 2.0 * std::numbers::pi) b(j) = 0.0;
  }

  return FeatureMap(std::move(w), std::move(b), bandwidth, seed);
}

FeatureMap::FeatureMap(Eigen::MatrixXd frequencies, Eigen::VectorXd phases,
                       double bandwidth, std::uint64_t seed)
    : frequencies_(std::move(frequencies)),
      phases_(std::move(phases)),
      bandwidth_(bandwidth),
      seed_(seed) {
  require(frequencies_.rows() > 0 && frequencies_.cols() > 0,
          "feature map: empty frequency matrix");
  require(phases_.size() == frequencies_.rows(),
          "feature map: phase count must equal feature count");
  require(std::isfinite(bandwidth_) && bandwidth_ > 0.0,
          "feature map: bandwidth must be positive and finite");
  require(frequencies_.allFinite(), "feature map: non-finite frequency");
  for (Eigen::Index j = 0; j < phases_.size(); ++j) {
    require(phases_(j) >= 0.0 && phases_(j) < 2.0 * std::numbers::pi,
            "feature map: phase outside [0, 2pi)");
  }
  scale_ = std::sqrt(2.0 / static_cast<double>(frequencies_.rows()));
}

void FeatureMap::check_input(const Eigen::Ref<const Eigen::VectorXd>& phi) const {
  if (phi.size() != frequencies_.cols()) {
    fail(ErrorCode::kInvalidArgument,
         "featurize: expected input of length " +
             std::to_string(frequencies_.cols()) + ", got " +
             std::to_string(phi.size()));
  }
}

Eigen::VectorXd FeatureMap::featurize(
    const Eigen::Ref<const Eigen::VectorXd>& phi) const {
  check_input(phi);
  Eigen::VectorXd arg = frequencies_ * phi + phases_;
  return scale_ * arg.array().cos().matrix();
}

Eigen::MatrixXd FeatureMap::featurize_columns(
    const Eigen::Ref<const Eigen::MatrixXd>& phis) const {
  require(phis.rows() == frequencies_.cols(),
          "featurize: input rows must equal the input dimension");
  Eigen::MatrixXd arg = frequencies_ * phis;
  arg.colwise() += phases_;
  return scale_ * arg.array().cos().matrix();
}

Eigen::MatrixXd FeatureMap::featurize_gradient(
    const Eigen::Ref<const Eigen::VectorXd>& phi) const {
  check_input(phi);
  Eigen::VectorXd s = -scale_ * (frequencies_ * phi + phases_).array().sin();
  return s.asDiagonal() * frequencies_;
}

std::string FeatureMap::fingerprint() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ULL;
    }
  };
  const std::int64_t dims[2] = {frequencies_.rows(), frequencies_.cols()};
  mix(dims, sizeof(dims));
  mix(frequencies_.data(), sizeof(double) * frequencies_.size());
  mix(phases_.data(), sizeof(double) * phases_.size());
  mix(&bandwidth_, sizeof(bandwidth_));
  std::ostringstream os;
  os << "rff-" << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

}  // namespace kcrl
