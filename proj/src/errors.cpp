#include "kcrl/errors.hpp"

#include <cmath>
#include <numbers>

#include "kcrl/rng.hpp"

namespace kcrl {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid-argument";
    case ErrorCode::kDataQuality: return "data-quality";
    case ErrorCode::kStepUnderflow: return "step-underflow";
    case ErrorCode::kNumeric: return "numeric";
    case ErrorCode::kInfeasibleMargin: return "infeasible-margin";
    case ErrorCode::kInfeasibleBatch: return "infeasible-batch";
    case ErrorCode::kInfeasibleResult: return "infeasible-result";
    case ErrorCode::kRolloutDivergence: return "rollout-divergence";
    case ErrorCode::kDivergence: return "divergence";
    case ErrorCode::kInvalidConfig: return "invalid-config";
    case ErrorCode::kParse: return "parse";
    case ErrorCode::kIo: return "io";
  }
  return "unknown";
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(a);
  has_spare_ = true;
  return r * std::cos(a);
}

}  // namespace kcrl
