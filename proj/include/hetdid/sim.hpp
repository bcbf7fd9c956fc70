#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "hetdid/lsq.hpp"
#include "hetdid/panel.hpp"

namespace hetdid {

enum class DgpKind { Fig1EarlyLate, Fig2MoreLess, Staggered, ParallelCustom };

/// Early group e treated at 2 and 3, late group l treated at 3; Y(0) = 0.
struct Fig1Params {
  double te_e2 = 1.0;
  double te_e3 = 4.0;
  double te_l3 = 1.0;
  bool never_treated_group = false;  // adds group n, untreated throughout
};

/// Two periods; m goes from 0 to 2, l from 0 to 1; effect = slope * D.
struct Fig2Params {
  double delta_m = 1.0;
  double delta_l = 3.0;
};

enum class WeightScheme { Uniform, RandomGroup, RandomCell };

/// Binary staggered panel. Cohort shares are keyed by first treated period;
/// the remaining groups are never treated. The effect of cell (g, c + l) is
/// intercept + horizon_slope * l + cohort_slope * (c - first_period) + u_g,
/// u_g ~ N(0, group_effect_sd^2).
struct StaggeredParams {
  int n_groups = 20;
  int n_periods = 10;
  Period first_period = 1;
  std::map<Period, double> cohort_shares;
  double intercept = 1.0;
  double horizon_slope = 1.0;
  double cohort_slope = 0.0;
  double group_effect_sd = 0.0;
  double group_fe_sd = 1.0;
  double time_fe_sd = 1.0;
  double noise_sd = 0.0;
  double trend_gap = 0.0;      // extra linear trend in Y(0) for eventually-treated groups
  double anticipation = 0.0;   // outcome shift at F_g - 1, not part of the treated-cell truth
  WeightScheme weights = WeightScheme::Uniform;
};

/// Explicit G x T treatment and effect matrices; Y = Y(0) + effect.
struct CustomParams {
  Matrix treatment;
  Matrix effects;
  std::optional<Matrix> untreated_outcome;  // default: alpha_g + gamma_t from the seed
  Period first_period = 1;
  double noise_sd = 0.0;
};

struct DgpSpec {
  DgpKind kind = DgpKind::Fig1EarlyLate;
  Fig1Params fig1;
  Fig2Params fig2;
  StaggeredParams staggered;
  CustomParams custom;
  std::uint64_t seed = 0;
};

/// Effect of one treated cell (D != 0).
struct TruthCell {
  GroupIndex group = 0;
  Period time = 0;
  double effect = 0.0;
  double weight = 1.0;
  std::optional<Period> cohort;  // first switch date
  std::optional<int> horizon;
};

struct GroundTruth {
  std::vector<TruthCell> cells;
  std::map<std::pair<Period, int>, double> cohort_horizon;  // population-weighted TE_{c,c+l}
  Matrix untreated_outcome;                                 // G x T, Y(0)
};

struct Simulation {
  PanelDataset data;
  GroundTruth truth;
};

Simulation generate(const DgpSpec& spec);

using TruthSelector = std::function<bool(const TruthCell&)>;

TruthSelector select_all();
TruthSelector select_cohort_horizon(Period cohort, int horizon);
TruthSelector select_horizon(int horizon);

/// Population-weighted mean effect over the selected treated cells.
double ground_truth_att(const GroundTruth& truth, const TruthSelector& selector);

}  // namespace hetdid
