#include "hetdid/error.hpp"

namespace hetdid {

std::string_view error_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::DuplicateCell: return "DuplicateCell";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::NonPositiveWeight: return "NonPositiveWeight";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::TooFewGroups: return "TooFewGroups";
    case ErrorCode::TooFewPeriods: return "TooFewPeriods";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::UnsupportedFeature: return "UnsupportedFeature";
    case ErrorCode::NotBinary: return "NotBinary";
    case ErrorCode::NotBinaryStaggered: return "NotBinaryStaggered";
    case ErrorCode::UnbalancedPanel: return "UnbalancedPanel";
    case ErrorCode::WrongShape: return "WrongShape";
    case ErrorCode::PeriodNotFound: return "PeriodNotFound";
    case ErrorCode::GroupNotFound: return "GroupNotFound";
    case ErrorCode::HorizonOutOfRange: return "HorizonOutOfRange";
    case ErrorCode::CohortEmpty: return "CohortEmpty";
    case ErrorCode::NoSwitchersIn: return "NoSwitchersIn";
    case ErrorCode::NoSwitchersOut: return "NoSwitchersOut";
    case ErrorCode::NoControls: return "NoControls";
    case ErrorCode::NoValidComparisons: return "NoValidComparisons";
    case ErrorCode::InsufficientPreperiods: return "InsufficientPreperiods";
    case ErrorCode::EmptyHorizon: return "EmptyHorizon";
    case ErrorCode::EmptySelection: return "EmptySelection";
    case ErrorCode::MissingProxy: return "MissingProxy";
    case ErrorCode::UnidentifiedFixedEffect: return "UnidentifiedFixedEffect";
    case ErrorCode::InsufficientPretrendData: return "InsufficientPretrendData";
    case ErrorCode::TooFewClusters: return "TooFewClusters";
    case ErrorCode::CollinearRegressor: return "CollinearRegressor";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::NotConverged: return "NotConverged";
    case ErrorCode::ZeroDenominator: return "ZeroDenominator";
    case ErrorCode::ZeroVariance: return "ZeroVariance";
    case ErrorCode::DegenerateCovariance: return "DegenerateCovariance";
    case ErrorCode::AllReplicatesFailed: return "AllReplicatesFailed";
  }
  return "Unknown";
}

ErrorCategory error_category(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::CollinearRegressor:
    case ErrorCode::RankDeficient:
    case ErrorCode::NotConverged:
    case ErrorCode::ZeroDenominator:
    case ErrorCode::ZeroVariance:
    case ErrorCode::DegenerateCovariance:
    case ErrorCode::AllReplicatesFailed:
      return ErrorCategory::Numerical;
    default:
      return ErrorCategory::User;
  }
}

}  // namespace hetdid
