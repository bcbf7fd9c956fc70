#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hetdid/lsq.hpp"
#include "hetdid/panel.hpp"

namespace hetdid {

/// FeS / FdS are reserved for the constant-effect variants and currently
/// rejected with UnsupportedFeature.
enum class EstimandKind { StaticFe, StaticFd, EventStudy, StaticFeS, StaticFdS };

std::string to_string(EstimandKind kind);

struct WeightEntry {
  GroupIndex group = 0;
  Period time = 0;
  double weight = 0.0;
};

/// Causal weights W_{g,t} of a regression coefficient on the cells with D != 0.
/// Weights within 1e-12 * max|W| of zero are counted as neither sign.
struct WeightTable {
  EstimandKind kind = EstimandKind::StaticFe;
  std::optional<int> horizon;
  double coefficient = 0.0;
  std::vector<WeightEntry> entries;
  int positive_count = 0;
  int negative_count = 0;
  double positive_sum = 0.0;
  double negative_sum = 0.0;

  double total() const { return positive_sum + negative_sum; }
};

WeightTable static_weights(const PanelDataset& data, EstimandKind target = EstimandKind::StaticFe,
                           const FitOptions& options = {});

struct ProxyCorrelation {
  double proxy = 0.0;
  std::optional<double> time;  // absent when every weighted cell sits in one period
};

/// Pearson correlations of W_{g,t} with the proxy and with the period index,
/// weighted by N_{g,t}.
ProxyCorrelation weight_proxy_correlation(const WeightTable& weights, const PanelDataset& data);

/// A timing cohort, the never-treated, or the always-treated.
struct CohortId {
  enum class Kind { Timing, Never, Always };
  Kind kind = Kind::Timing;
  Period period = 0;

  static CohortId timing(Period t) { return {Kind::Timing, t}; }
  static CohortId never() { return {Kind::Never, 0}; }
  static CohortId always() { return {Kind::Always, 0}; }
  std::string label() const;
  friend bool operator==(const CohortId&, const CohortId&) = default;
};

enum class ComparisonKind { VsUntreated, VsNotYetTreated, VsAlreadyTreated };

std::string to_string(ComparisonKind kind);

struct Comparison {
  CohortId treated;
  CohortId control;
  Period window_start = 0;
  Period window_end = 0;
  double weight = 0.0;
  double did = 0.0;
  ComparisonKind kind = ComparisonKind::VsUntreated;
};

struct DecompositionReport {
  std::vector<Comparison> comparisons;
  double forbidden_share = 0.0;
  double reconstruction = 0.0;
  double beta_fe = 0.0;
};

/// Cohort-level 2x2 decomposition of the TWFE coefficient. Population
/// weights must be constant within group.
DecompositionReport decompose_2x2(const PanelDataset& data, const FitOptions& options = {});

struct ContaminationEntry {
  GroupIndex group = 0;
  int relative_time = 0;     // l'
  std::optional<int> bin;    // indicator the cell loads on, if any
  double weight = 0.0;       // w_{g,l'}
};

/// Decomposition of one event-study coefficient into weights on the
/// treated groups' per-horizon effects.
struct ContaminationTable {
  int target_horizon = 0;
  std::string target_term;
  double coefficient = 0.0;
  std::vector<ContaminationEntry> own_weights;
  std::map<int, std::vector<ContaminationEntry>> contamination;  // keyed by l' >= 0
  double own_sum = 0.0;
  std::map<int, double> contamination_sums;
  std::map<int, double> bin_sums;  // per fitted indicator: 1 for the target, 0 otherwise
  std::vector<DroppedTerm> dropped;

  /// Largest deviation of bin_sums from the target indicator.
  double max_invariant_violation() const;
};

ContaminationTable event_study_weights(const EventStudyFit& fit, const PanelDataset& data, int target);
ContaminationTable event_study_weights(const PanelDataset& data, const EventStudySpec& spec, int target,
                                       const FitOptions& options = {});

}  // namespace hetdid
