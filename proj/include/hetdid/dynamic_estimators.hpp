#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hetdid/lsq.hpp"
#include "hetdid/panel.hpp"

namespace hetdid {

enum class ControlRule { NeverTreated, NotYetTreated, LastTreated };

std::string to_string(ControlRule rule);
std::optional<ControlRule> parse_control_rule(std::string_view text);

/// Long differences compare F-1 with F-l-2 and mimic the effect at horizon l;
/// first differences compare consecutive pre-switch periods.
enum class PlaceboKind { LongDifference, FirstDifference };

/// DID of cohort c against the rule's controls from c-1 to c+horizon. For
/// placebos, `horizon` is the relative time of the early endpoint.
struct CohortHorizonEffect {
  Period cohort = 0;
  int horizon = 0;
  double estimate = 0.0;
  std::size_t n_treated_groups = 0;
  std::size_t n_control_groups = 0;
  double treated_weight = 0.0;  // sum of N_{g,c+l} over the cohort
  ControlRule control_rule = ControlRule::NotYetTreated;
};

CohortHorizonEffect cs_effect(const PanelDataset& data, Period cohort, int horizon, ControlRule rule);

/// Placebo for cohort c. Long difference `index` = l >= 0 compares c-1 with
/// c-l-2 using the controls of the horizon-l effect; first difference
/// `index` = k >= 1 compares c-k with c-k-1 using the horizon-0 controls.
/// The result's horizon is the relative time of the early endpoint minus one
/// for long differences (-(l+2)) and -(k+1) for first differences.
CohortHorizonEffect cs_placebo(const PanelDataset& data, Period cohort, int index, ControlRule rule,
                               PlaceboKind kind = PlaceboKind::LongDifference);

struct AggregateEffect {
  int horizon = 0;
  double estimate = 0.0;
  double weight = 0.0;
  std::size_t n_cohorts = 0;
};

/// Cohort-population-weighted mean of the effects at this horizon.
AggregateEffect cs_aggregate(std::span<const CohortHorizonEffect> effects, int horizon);

struct HorizonEstimate {
  int horizon = 0;  // >= 0 for effects, < 0 for placebos
  std::optional<double> estimate;
  double weight = 0.0;
  std::size_t n_switchers = 0;
  std::string note;  // why the estimate is missing
  std::optional<double> se;
  std::optional<double> ci_lower;
  std::optional<double> ci_upper;
};

struct FirstStage {
  int horizon = 0;
  double value = 0.0;
};

struct NormalizedEffect {
  double estimate = 0.0;
  std::optional<double> se;
  std::optional<double> ci_lower;
  std::optional<double> ci_upper;
};

struct JointTest {
  double statistic = 0.0;
  double p_value = 1.0;
  int rank = 0;
};

struct EventStudyResult {
  std::string estimator;
  std::vector<HorizonEstimate> effects;   // horizons 0..max, gaps carry a note
  std::vector<HorizonEstimate> placebos;  // ordered from the nearest pre-period back
  std::vector<FirstStage> first_stage;
  std::optional<NormalizedEffect> normalized_effect;
  std::optional<JointTest> joint_placebo;
};

/// Aggregated cohort-horizon effects and placebos for horizons 0..max_horizon.
EventStudyResult cs_event_study(const PanelDataset& data, ControlRule rule, int max_horizon, int n_placebos,
                                PlaceboKind kind = PlaceboKind::LongDifference);

// ---------------------------------------------------------------------------
// Imputation

enum class Trends { None, GroupLinear };

/// Predict: fit the fixed effects on untreated cells and impute Y(0).
/// CellDummies: full-sample regression with one indicator per treated cell.
enum class ImputationMethod { Predict, CellDummies };

struct ImputedCell {
  GroupIndex group = 0;
  Period time = 0;
  Period cohort = 0;
  int horizon = 0;
  double effect = 0.0;
  double weight = 0.0;
};

struct ImputationResult {
  Trends trends = Trends::None;
  std::vector<ImputedCell> cells;
  std::map<std::pair<Period, int>, double> by_cohort_horizon;
  std::map<int, double> by_horizon;
  double overall = 0.0;
};

ImputationResult imputation_fit(const PanelDataset& data, Trends trends = Trends::None,
                                ImputationMethod method = ImputationMethod::Predict, const FitOptions& options = {});

/// Lead coefficients from a TWFE regression on the untreated cells. Entry k-1
/// is the coefficient on relative time -k; everything is relative to periods
/// at least K+1 before treatment and to the never-treated.
struct ImputationPlacebo {
  std::vector<int> relative_times;
  Vector estimates;
  Matrix vcov;
};

ImputationPlacebo imputation_placebo(const PanelDataset& data, int leads, const FitOptions& options = {});

/// Imputation estimates by horizon plus lead placebos as an event study.
EventStudyResult imputation_event_study(const PanelDataset& data, int max_horizon, int n_placebos,
                                        Trends trends = Trends::None);

// ---------------------------------------------------------------------------
// First-switch estimators for general designs

/// Y_{g,F_g+l} - Y_{g,F_g-1} minus the same change over groups with the same
/// period-one treatment whose treatment has not changed by F_g+l.
double dcdh_effect(const PanelDataset& data, GroupIndex group, int horizon);

enum class HorizonWeighting { SwitcherCells, Uniform };

struct DcdhOptions {
  int max_horizon = 0;
  int n_placebos = 0;
  HorizonWeighting normalization_weights = HorizonWeighting::SwitcherCells;
};

/// DID_l for l = 0..max_horizon: N_{g,F_g+l}-weighted means of S_g * DID_{g,l}
/// with S_g the sign of the first treatment change; first-stage means of
/// |D_{g,F_g+l} - D_{g,1}|; long-difference placebos; normalized effect.
EventStudyResult dcdh_aggregate(const PanelDataset& data, const DcdhOptions& options);

}  // namespace hetdid
