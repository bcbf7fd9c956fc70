#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hetdid/absorb.hpp"
#include "hetdid/panel.hpp"

namespace hetdid {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Weighted least squares problem with absorbed categorical factors.
struct RegressionProblem {
  Vector y;
  Vector w;
  Matrix X;
  std::vector<std::string> terms;
  std::vector<Factor> absorb;
  std::vector<Eigen::Index> cluster;  // empty: no covariance
};

struct FitOptions {
  double tolerance = 1e-12;
  int max_iterations = 10000;
  bool reverse_absorb_order = false;
  /// (G/(G-1)) * ((N-1)/(N-K)) finite-sample factor on the cluster covariance.
  bool small_sample_correction = false;
};

struct DroppedTerm {
  std::string term;
  std::string reason;  // "empty" or "collinear"
};

struct FitResult {
  std::vector<std::string> terms;
  Vector coefficients;
  /// Column j holds c such that coefficients[j] == c . y over the rows the
  /// fit is expressed on (panel rows for the panel-level fits).
  Matrix influence;
  /// Residuals of the estimation sample (one per regression observation).
  Vector residuals;
  Matrix vcov;
  std::size_t n_obs = 0;
  std::size_t n_clusters = 0;
  int sweeps = 0;
  std::vector<DroppedTerm> dropped;

  std::optional<Eigen::Index> term_index(std::string_view term) const;
  double coefficient(std::string_view term) const;
  double std_error(std::string_view term) const;
};

FitResult absorb_and_fit(const RegressionProblem& problem, const FitOptions& options = {});

/// Problem on the panel rows: outcome, weights, group and time factors, and
/// cluster = group.
RegressionProblem panel_problem(const PanelDataset& data);

/// Y on group FE, period FE and D.
FitResult fit_twfe(const PanelDataset& data, const FitOptions& options = {});

/// dY on dD with period FE; influence is mapped back onto panel rows.
FitResult fit_first_difference(const PanelDataset& data, const FitOptions& options = {});

enum class Binning { None, Endpoint };

struct EventStudySpec {
  int leads = 0;  // K
  int lags = 0;   // L
  Binning binning = Binning::None;
  int omitted_relative_time = -1;
};

struct EventStudyFit {
  FitResult fit;
  std::vector<int> horizons;  // aligned with fit.terms; binned ends carry -K / L
  std::vector<std::optional<Period>> first_treated;  // per group; nullopt if never treated
  EventStudySpec spec;

  /// Relative-time indicator column that a cell with this relative time falls in.
  std::optional<int> bin_of(int relative_time) const;
};

EventStudyFit fit_event_study(const PanelDataset& data, const EventStudySpec& spec,
                              const FitOptions& options = {});

/// First period with D == 1 per group (binary staggered designs).
std::vector<std::optional<Period>> first_treated_periods(const PanelDataset& data);

}  // namespace hetdid
