#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hetdid {

// Every failure the library reports. The CLI maps each code to an exit
// status through error_category().
enum class ErrorCode {
  // input / validation
  MissingColumn,
  DuplicateCell,
  NonFiniteValue,
  NonPositiveWeight,
  ParseError,
  TooFewGroups,
  TooFewPeriods,
  InvalidSpec,
  UnsupportedFeature,
  // design preconditions
  NotBinary,
  NotBinaryStaggered,
  UnbalancedPanel,
  WrongShape,
  PeriodNotFound,
  GroupNotFound,
  HorizonOutOfRange,
  CohortEmpty,
  NoSwitchersIn,
  NoSwitchersOut,
  NoControls,
  NoValidComparisons,
  InsufficientPreperiods,
  EmptyHorizon,
  EmptySelection,
  MissingProxy,
  UnidentifiedFixedEffect,
  InsufficientPretrendData,
  TooFewClusters,
  // numerical
  CollinearRegressor,
  RankDeficient,
  NotConverged,
  ZeroDenominator,
  ZeroVariance,
  DegenerateCovariance,
  AllReplicatesFailed,
};

enum class ErrorCategory { User, Numerical };

std::string_view error_name(ErrorCode code) noexcept;
ErrorCategory error_category(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace hetdid
