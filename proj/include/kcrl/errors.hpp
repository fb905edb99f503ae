#pragma once

#include <stdexcept>
#include <string>

namespace kcrl {

enum class ErrorCode {
  kInvalidArgument = 1,
  kDataQuality,
  kStepUnderflow,
  kNumeric,
  kInfeasibleMargin,
  kInfeasibleBatch,
  kInfeasibleResult,
  kRolloutDivergence,
  kDivergence,
  kInvalidConfig,
  kParse,
  kIo,
};

const char* to_string(ErrorCode code);

/// Base exception for every failure raised by the library. The code maps
/// one-to-one onto the C API status values.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Carries the rollout seed so a failing gradient estimate can be replayed.
class RolloutDivergence : public Error {
 public:
  RolloutDivergence(const std::string& what, unsigned long long seed)
      : Error(ErrorCode::kRolloutDivergence, what), seed_(seed) {}
  unsigned long long seed() const noexcept { return seed_; }

 private:
  unsigned long long seed_;
};

/// Raised when a true-plant rollout leaves the divergence threshold.
class Divergence : public Error {
 public:
  Divergence(const std::string& what, long long step)
      : Error(ErrorCode::kDivergence, what), step_(step) {}
  long long step() const noexcept { return step_; }

 private:
  long long step_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

inline void require(bool cond, const std::string& what) {
  if (!cond) throw Error(ErrorCode::kInvalidArgument, what);
}

}  // namespace kcrl
