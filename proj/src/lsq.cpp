#include "hetdid/lsq.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "hetdid/error.hpp"

namespace hetdid {

std::optional<Eigen::Index> FitResult::term_index(std::string_view term) const {
  for (std::size_t j = 0; j < terms.size(); ++j) {
    if (terms[j] == term) return static_cast<Eigen::Index>(j);
  }
  return std::nullopt;
}

double FitResult::coefficient(std::string_view term) const {
  const auto j = term_index(term);
  if (!j) fail(ErrorCode::InvalidSpec, "no coefficient named '" + std::string(term) + "'");
  return coefficients[*j];
}

double FitResult::std_error(std::string_view term) const {
  const auto j = term_index(term);
  if (!j) fail(ErrorCode::InvalidSpec, "no coefficient named '" + std::string(term) + "'");
  if (vcov.rows() == 0) return std::numeric_limits<double>::quiet_NaN();
  return std::sqrt(std::max(0.0, vcov(*j, *j)));
}

FitResult absorb_and_fit(const RegressionProblem& problem, const FitOptions& options) {
  const Eigen::Index n = problem.y.size();
  const Eigen::Index k = problem.X.cols();
  if (problem.w.size() != n || problem.X.rows() != n ||
      static_cast<Eigen::Index>(problem.terms.size()) != k) {
    fail(ErrorCode::InvalidSpec, "regression problem dimensions disagree");
  }
  if (k == 0) fail(ErrorCode::RankDeficient, "no regressors to estimate");
  if (n == 0) fail(ErrorCode::RankDeficient, "empty estimation sample");
  if ((problem.w.array() <= 0.0).any()) fail(ErrorCode::NonPositiveWeight, "regression weights must be > 0");
  if (!problem.cluster.empty() && static_cast<Eigen::Index>(problem.cluster.size()) != n) {
    fail(ErrorCode::InvalidSpec, "cluster codes have wrong length");
  }

  Absorber::Options aopt;
  aopt.tolerance = options.tolerance;
  aopt.max_iterations = options.max_iterations;
  aopt.reverse_order = options.reverse_absorb_order;
  const Absorber absorber(problem.absorb, problem.w, aopt);

  Vector y_t = problem.y;
  Matrix X_t = problem.X;
  int sweeps = absorber.demean(y_t);
  sweeps = std::max(sweeps, absorber.demean(X_t));

  const Vector& w = problem.w;
  for (Eigen::Index j = 0; j < k; ++j) {
    const double raw = (w.array() * problem.X.col(j).array().square()).sum();
    const double kept = (w.array() * X_t.col(j).array().square()).sum();
    if (raw == 0.0 || kept <= 1e-10 * raw) {
      fail(ErrorCode::CollinearRegressor,
           "regressor '" + problem.terms[j] + "' has no variation left after absorbing fixed effects");
    }
  }

  const Vector sqrt_w = w.array().sqrt();
  const Matrix Xw = sqrt_w.asDiagonal() * X_t;
  Eigen::ColPivHouseholderQR<Matrix> qr(Xw);
  qr.setThreshold(1e-10);
  if (qr.rank() < k) {
    std::ostringstream msg;
    msg << "regressors are linearly dependent after absorption (rank " << qr.rank() << " of " << k << ")";
    fail(ErrorCode::RankDeficient, msg.str());
  }
  const Matrix gram = X_t.transpose() * w.asDiagonal() * X_t;
  const Matrix gram_inv = gram.ldlt().solve(Matrix::Identity(k, k));

  FitResult out;
  out.terms = problem.terms;
  out.influence = w.asDiagonal() * X_t * gram_inv;
  out.coefficients = out.influence.transpose() * y_t;
  out.residuals = y_t - X_t * out.coefficients;
  out.n_obs = static_cast<std::size_t>(n);
  out.sweeps = sweeps;

  if (!problem.cluster.empty()) {
    std::map<Eigen::Index, Eigen::Index> slot;
    for (Eigen::Index c : problem.cluster) slot.emplace(c, 0);
    Eigen::Index next = 0;
    for (auto& [code, s] : slot) s = next++;
    out.n_clusters = slot.size();
    if (out.n_clusters < 2) fail(ErrorCode::TooFewClusters, "cluster-robust covariance needs at least 2 clusters");
    Matrix scores = Matrix::Zero(static_cast<Eigen::Index>(out.n_clusters), k);
    for (Eigen::Index r = 0; r < n; ++r) {
      scores.row(slot[problem.cluster[r]]) += out.influence.row(r) * out.residuals[r];
    }
    out.vcov = scores.transpose() * scores;
    out.vcov = 0.5 * (out.vcov + out.vcov.transpose()).eval();
    if (options.small_sample_correction) {
      const double G = static_cast<double>(out.n_clusters);
      const double N = static_cast<double>(n);
      const double K = static_cast<double>(k + absorber.absorbed_dof());
      if (N > K) out.vcov *= (G / (G - 1.0)) * ((N - 1.0) / (N - K));
    }
  }
  return out;
}

RegressionProblem panel_problem(const PanelDataset& data) {
  const auto n = static_cast<Eigen::Index>(data.n_rows());
  RegressionProblem p;
  p.y.resize(n);
  p.w.resize(n);
  Factor group{"group", {}, static_cast<Eigen::Index>(data.n_groups()), std::nullopt};
  Factor time{"time", {}, static_cast<Eigen::Index>(data.n_periods()), std::nullopt};
  group.codes.reserve(static_cast<std::size_t>(n));
  time.codes.reserve(static_cast<std::size_t>(n));
  p.cluster.reserve(static_cast<std::size_t>(n));
  Eigen::Index r = 0;
  for (const Cell& c : data.rows()) {
    p.y[r] = c.outcome;
    p.w[r] = c.weight;
    group.codes.push_back(static_cast<Eigen::Index>(c.group));
    time.codes.push_back(static_cast<Eigen::Index>(*data.period_index(c.time)));
    p.cluster.push_back(static_cast<Eigen::Index>(c.group));
    ++r;
  }
  p.absorb = {std::move(group), std::move(time)};
  p.X.resize(n, 0);
  return p;
}

FitResult fit_twfe(const PanelDataset& data, const FitOptions& options) {
  RegressionProblem p = panel_problem(data);
  p.X.resize(p.y.size(), 1);
  Eigen::Index r = 0;
  for (const Cell& c : data.rows()) p.X(r++, 0) = c.treatment;
  p.terms = {"D"};
  try {
    return absorb_and_fit(p, options);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::CollinearRegressor) {
      fail(ErrorCode::CollinearRegressor,
           "treatment has no within-group and within-period variation (" + std::string(e.what()) + ")");
    }
    throw;
  }
}

FitResult fit_first_difference(const PanelDataset& data, const FitOptions& options) {
  struct Diff {
    std::size_t row, prev_row;
  };
  std::vector<Diff> diffs;
  for (GroupIndex g = 0; g < data.n_groups(); ++g) {
    const auto rows = data.group_rows(g);
    bool any = false;
    for (std::size_t i = 1; i < rows.size(); ++i) {
      if (rows[i].time == rows[i - 1].time + 1) {
        const std::size_t base = static_cast<std::size_t>(&rows[0] - data.rows().data());
        diffs.push_back({base + i, base + i - 1});
        any = true;
      }
    }
    if (!any) {
      fail(ErrorCode::WrongShape,
           "group '" + data.group_label(g) + "' is not observed in two consecutive periods");
    }
  }

  const auto m = static_cast<Eigen::Index>(diffs.size());
  RegressionProblem p;
  p.y.resize(m);
  p.w.resize(m);
  p.X.resize(m, 1);
  p.terms = {"dD"};
  Factor time{"time", {}, static_cast<Eigen::Index>(data.n_periods()), std::nullopt};
  const auto rows = data.rows();
  for (Eigen::Index i = 0; i < m; ++i) {
    const Cell& cur = rows[diffs[i].row];
    const Cell& prev = rows[diffs[i].prev_row];
    p.y[i] = cur.outcome - prev.outcome;
    p.X(i, 0) = cur.treatment - prev.treatment;
    p.w[i] = cur.weight;
    time.codes.push_back(static_cast<Eigen::Index>(*data.period_index(cur.time)));
    p.cluster.push_back(static_cast<Eigen::Index>(cur.group));
  }
  p.absorb = {std::move(time)};

  FitResult fd = absorb_and_fit(p, options);
  Matrix cellwise = Matrix::Zero(static_cast<Eigen::Index>(data.n_rows()), fd.influence.cols());
  for (Eigen::Index i = 0; i < m; ++i) {
    cellwise.row(static_cast<Eigen::Index>(diffs[i].row)) += fd.influence.row(i);
    cellwise.row(static_cast<Eigen::Index>(diffs[i].prev_row)) -= fd.influence.row(i);
  }
  fd.influence = std::move(cellwise);
  return fd;
}

// ---------------------------------------------------------------------------
// Event-study regression

std::vector<std::optional<Period>> first_treated_periods(const PanelDataset& data) {
  std::vector<std::optional<Period>> out(data.n_groups());
  for (GroupIndex g = 0; g < data.n_groups(); ++g) {
    for (const Cell& c : data.group_rows(g)) {
      if (c.treatment != 0.0) {
        out[g] = c.time;
        break;
      }
    }
  }
  return out;
}

namespace {

bool low_bin_active(const EventStudySpec& spec) {
  return spec.binning == Binning::Endpoint && spec.leads >= 1 && -spec.leads != spec.omitted_relative_time;
}

bool high_bin_active(const EventStudySpec& spec) {
  return spec.binning == Binning::Endpoint && spec.lags != spec.omitted_relative_time;
}

}  // namespace

std::optional<int> EventStudyFit::bin_of(int relative_time) const {
  int h = relative_time;
  if (low_bin_active(spec) && h < -spec.leads) h = -spec.leads;
  if (high_bin_active(spec) && h > spec.lags) h = spec.lags;
  if (std::find(horizons.begin(), horizons.end(), h) == horizons.end()) return std::nullopt;
  return h;
}

namespace {

std::string event_term_name(int h, const EventStudySpec& spec) {
  std::ostringstream os;
  if (low_bin_active(spec) && h == -spec.leads) {
    os << "rel<=" << h;
  } else if (high_bin_active(spec) && h == spec.lags) {
    os << "rel>=" << h;
  } else {
    os << "rel" << h;
  }
  return os.str();
}

}  // namespace

EventStudyFit fit_event_study(const PanelDataset& data, const EventStudySpec& spec, const FitOptions& options) {
  if (spec.leads < 0 || spec.lags < 0) fail(ErrorCode::InvalidSpec, "leads and lags must be >= 0");
  const DesignInfo design = derive_design(data);
  if (!design.is_binary_staggered()) {
    fail(ErrorCode::NotBinaryStaggered, "event-study regression needs a binary staggered treatment");
  }
  EventStudyFit out;
  out.spec = spec;
  out.first_treated = first_treated_periods(data);

  std::vector<int> candidates;
  for (int h = -spec.leads; h <= spec.lags; ++h) {
    if (h != spec.omitted_relative_time) candidates.push_back(h);
  }

  // relative time per row; nullopt for never-treated groups
  std::vector<std::optional<int>> rel(data.n_rows());
  bool omitted_seen = false;
  for (std::size_t r = 0; r < data.n_rows(); ++r) {
    const Cell& c = data.rows()[r];
    if (const auto& f = out.first_treated[c.group]) {
      rel[r] = c.time - *f;
      if (*rel[r] == spec.omitted_relative_time) omitted_seen = true;
    }
  }
  if (!omitted_seen) {
    fail(ErrorCode::InvalidSpec, "omitted relative time " + std::to_string(spec.omitted_relative_time) +
                                     " does not occur in the data");
  }

  auto column_for = [&](int h) {
    Vector x = Vector::Zero(static_cast<Eigen::Index>(data.n_rows()));
    const bool low_bin = low_bin_active(spec) && h == -spec.leads;
    const bool high_bin = high_bin_active(spec) && h == spec.lags;
    for (std::size_t r = 0; r < rel.size(); ++r) {
      if (!rel[r]) continue;
      const int e = *rel[r];
      if (e == h || (low_bin && e <= h) || (high_bin && e >= h)) x[static_cast<Eigen::Index>(r)] = 1.0;
    }
    return x;
  };

  std::vector<int> active;
  for (int h : candidates) {
    if (column_for(h).sum() == 0.0) {
      out.fit.dropped.push_back({event_term_name(h, spec), "empty"});
    } else {
      active.push_back(h);
    }
  }

  RegressionProblem base = panel_problem(data);
  std::vector<DroppedTerm> dropped = out.fit.dropped;
  while (true) {
    if (active.empty()) fail(ErrorCode::RankDeficient, "no estimable relative-time indicators remain");
    RegressionProblem p = base;
    p.X.resize(p.y.size(), static_cast<Eigen::Index>(active.size()));
    p.terms.clear();
    for (std::size_t j = 0; j < active.size(); ++j) {
      p.X.col(static_cast<Eigen::Index>(j)) = column_for(active[j]);
      p.terms.push_back(event_term_name(active[j], spec));
    }
    try {
      out.fit = absorb_and_fit(p, options);
      out.fit.dropped = dropped;
      out.horizons = active;
      return out;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::CollinearRegressor && e.code() != ErrorCode::RankDeficient) throw;
      // Drop the highest-|h| indicator whose removal restores full rank; the
      // far endpoints are the usual culprits with no never-treated group.
      std::size_t victim = active.size();
      for (std::size_t j = 0; j < active.size(); ++j) {
        Vector xj = p.X.col(static_cast<Eigen::Index>(j));
        Absorber ab(p.absorb, p.w);
        ab.demean(xj);
        const double kept = (p.w.array() * xj.array().square()).sum();
        const double raw = (p.w.array() * p.X.col(static_cast<Eigen::Index>(j)).array().square()).sum();
        if (kept <= 1e-10 * raw) {
          victim = j;
          break;
        }
      }
      if (victim == active.size()) {
        victim = static_cast<std::size_t>(
            std::max_element(active.begin(), active.end(), [](int a, int b) { return std::abs(a) < std::abs(b); }) -
            active.begin());
      }
      dropped.push_back({event_term_name(active[victim], spec), "collinear"});
      active.erase(active.begin() + static_cast<std::ptrdiff_t>(victim));
    }
  }
}

}  // namespace hetdid
