#include "hetdid/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hetdid/error.hpp"

namespace hetdid {

std::string to_string(EstimandKind kind) {
  switch (kind) {
    case EstimandKind::StaticFe: return "static_fe";
    case EstimandKind::StaticFd: return "static_fd";
    case EstimandKind::EventStudy: return "event_study";
    case EstimandKind::StaticFeS: return "static_fes";
    case EstimandKind::StaticFdS: return "static_fds";
  }
  return "unknown";
}

std::string to_string(ComparisonKind kind) {
  switch (kind) {
    case ComparisonKind::VsUntreated: return "vs_untreated";
    case ComparisonKind::VsNotYetTreated: return "vs_not_yet_treated";
    case ComparisonKind::VsAlreadyTreated: return "vs_already_treated";
  }
  return "unknown";
}

std::string CohortId::label() const {
  switch (kind) {
    case Kind::Never: return "never";
    case Kind::Always: return "always";
    case Kind::Timing: break;
  }
  return std::to_string(period);
}

WeightTable static_weights(const PanelDataset& data, EstimandKind target, const FitOptions& options) {
  FitResult fit;
  switch (target) {
    case EstimandKind::StaticFe: fit = fit_twfe(data, options); break;
    case EstimandKind::StaticFd: fit = fit_first_difference(data, options); break;
    case EstimandKind::StaticFeS:
    case EstimandKind::StaticFdS:
      fail(ErrorCode::UnsupportedFeature, "constant-effect weight variants are not implemented");
    case EstimandKind::EventStudy:
      fail(ErrorCode::InvalidSpec, "use event_study_weights for event-study coefficients");
  }

  WeightTable table;
  table.kind = target;
  table.coefficient = fit.coefficients[0];
  const auto rows = data.rows();
  double largest = 0.0;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].treatment == 0.0) continue;
    const double w = fit.influence(static_cast<Eigen::Index>(r), 0) * rows[r].treatment;
    table.entries.push_back({rows[r].group, rows[r].time, w});
    largest = std::max(largest, std::abs(w));
  }
  const double zero = 1e-12 * largest;
  for (const WeightEntry& e : table.entries) {
    if (e.weight > zero) {
      ++table.positive_count;
      table.positive_sum += e.weight;
    } else if (e.weight < -zero) {
      ++table.negative_count;
      table.negative_sum += e.weight;
    }
  }
  return table;
}

namespace {

double weighted_correlation(const std::vector<double>& x, const std::vector<double>& y,
                            const std::vector<double>& w) {
  double sw = 0, mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sw += w[i];
    mx += w[i] * x[i];
    my += w[i] * y[i];
  }
  mx /= sw;
  my /= sw;
  double sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += w[i] * (x[i] - mx) * (x[i] - mx);
    syy += w[i] * (y[i] - my) * (y[i] - my);
    sxy += w[i] * (x[i] - mx) * (y[i] - my);
  }
  const double scale_x = std::max(1.0, mx * mx) * sw;
  const double scale_y = std::max(1.0, my * my) * sw;
  if (sxx <= 1e-24 * scale_x || syy <= 1e-24 * scale_y) return std::numeric_limits<double>::quiet_NaN();
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

}  // namespace

ProxyCorrelation weight_proxy_correlation(const WeightTable& weights, const PanelDataset& data) {
  std::vector<double> W, P, T, N;
  for (const WeightEntry& e : weights.entries) {
    const Cell* cell = data.find(e.group, e.time);
    if (!cell) fail(ErrorCode::InvalidSpec, "weight table does not match the dataset");
    if (!cell->proxy) {
      fail(ErrorCode::MissingProxy, "no proxy value for group '" + data.group_label(e.group) + "' at period " +
                                        std::to_string(e.time));
    }
    W.push_back(e.weight);
    P.push_back(*cell->proxy);
    T.push_back(static_cast<double>(e.time));
    N.push_back(cell->weight);
  }
  if (W.size() < 2) fail(ErrorCode::ZeroVariance, "fewer than two weighted cells");
  ProxyCorrelation out;
  out.proxy = weighted_correlation(W, P, N);
  if (std::isnan(out.proxy)) fail(ErrorCode::ZeroVariance, "weights or proxy are constant over the weighted cells");
  const double t = weighted_correlation(W, T, N);
  if (!std::isnan(t)) out.time = t;
  return out;
}

// ---------------------------------------------------------------------------
// 2x2 decomposition

namespace {

struct SubsampleFit {
  double beta = 0.0;
  double sum_w = 0.0;
  double sum_wx2 = 0.0;  // sum of w * (two-way demeaned D)^2
};

SubsampleFit fit_subsample(const PanelDataset& data, const std::vector<std::size_t>& rows,
                           const FitOptions& options) {
  std::map<GroupIndex, Eigen::Index> gcode;
  std::map<Period, Eigen::Index> tcode;
  for (std::size_t r : rows) {
    gcode.emplace(data.rows()[r].group, 0);
    tcode.emplace(data.rows()[r].time, 0);
  }
  Eigen::Index k = 0;
  for (auto& [g, c] : gcode) c = k++;
  k = 0;
  for (auto& [t, c] : tcode) c = k++;

  const auto n = static_cast<Eigen::Index>(rows.size());
  RegressionProblem p;
  p.y.resize(n);
  p.w.resize(n);
  p.X.resize(n, 1);
  p.terms = {"D"};
  Factor gf{"group", {}, static_cast<Eigen::Index>(gcode.size()), std::nullopt};
  Factor tf{"time", {}, static_cast<Eigen::Index>(tcode.size()), std::nullopt};
  for (Eigen::Index i = 0; i < n; ++i) {
    const Cell& c = data.rows()[rows[static_cast<std::size_t>(i)]];
    p.y[i] = c.outcome;
    p.w[i] = c.weight;
    p.X(i, 0) = c.treatment;
    gf.codes.push_back(gcode[c.group]);
    tf.codes.push_back(tcode[c.time]);
  }
  p.absorb = {std::move(gf), std::move(tf)};
  const FitResult fit = absorb_and_fit(p, options);

  SubsampleFit out;
  out.beta = fit.coefficients[0];
  out.sum_w = p.w.sum();
  // c = w x~ / sum(w x~^2) and sum(c x) = 1, so sum(w x~^2) = 1 / sum(c^2 / w).
  const double inv = (fit.influence.col(0).array().square() / p.w.array()).sum();
  out.sum_wx2 = 1.0 / inv;
  return out;
}

}  // namespace

DecompositionReport decompose_2x2(const PanelDataset& data, const FitOptions& options) {
  const DesignInfo design = derive_design(data);
  if (!design.is_binary_staggered()) {
    fail(ErrorCode::NotBinaryStaggered, "the 2x2 decomposition needs a binary staggered treatment");
  }
  if (!data.is_balanced()) fail(ErrorCode::UnbalancedPanel, "the 2x2 decomposition needs a balanced panel");
  for (GroupIndex g = 0; g < data.n_groups(); ++g) {
    for (const Cell& c : data.group_rows(g)) {
      if (c.weight != data.group_rows(g).front().weight) {
        fail(ErrorCode::UnsupportedFeature, "the 2x2 decomposition needs weights constant within group ('" +
                                                data.group_label(g) + "' varies)");
      }
    }
  }

  DecompositionReport report;
  report.beta_fe = fit_twfe(data, options).coefficients[0];

  std::map<Period, std::vector<GroupIndex>> timing = design.cohorts;
  std::vector<GroupIndex> never, always;
  for (GroupIndex g = 0; g < data.n_groups(); ++g) {
    if (!design.first_switch[g].is_never()) continue;
    (design.baseline_treatment[g] == 0.0 ? never : always).push_back(g);
  }

  const Period first = data.first_period();
  const Period last = data.last_period();
  const double total_w = std::accumulate(data.rows().begin(), data.rows().end(), 0.0,
                                         [](double s, const Cell& c) { return s + c.weight; });

  struct Pending {
    Comparison cmp;
    double raw_weight;
  };
  std::vector<Pending> pending;

  auto add = [&](CohortId treated, const std::vector<GroupIndex>& tg, CohortId control,
                 const std::vector<GroupIndex>& cg, Period start, Period end, ComparisonKind kind) {
    std::vector<std::size_t> rows;
    for (const auto* set : {&tg, &cg}) {
      for (GroupIndex g : *set) {
        for (Period t = start; t <= end; ++t) rows.push_back(*data.row_of(g, t));
      }
    }
    std::sort(rows.begin(), rows.end());
    const SubsampleFit sf = fit_subsample(data, rows, options);
    const double s = sf.sum_w / total_w;
    const double V = sf.sum_wx2 / sf.sum_w;
    pending.push_back({Comparison{treated, control, start, end, 0.0, sf.beta, kind}, s * s * V});
  };

  for (const auto& [k, kg] : timing) {
    if (!never.empty()) {
      add(CohortId::timing(k), kg, CohortId::never(), never, first, last, ComparisonKind::VsUntreated);
    }
    if (!always.empty()) {
      add(CohortId::timing(k), kg, CohortId::always(), always, first, last, ComparisonKind::VsAlreadyTreated);
    }
    for (const auto& [l, lg] : timing) {
      if (l <= k) continue;
      const Period pre_end = *std::prev(std::lower_bound(data.periods().begin(), data.periods().end(), l));
      add(CohortId::timing(k), kg, CohortId::timing(l), lg, first, pre_end, ComparisonKind::VsNotYetTreated);
      add(CohortId::timing(l), lg, CohortId::timing(k), kg, k, last, ComparisonKind::VsAlreadyTreated);
    }
  }
  if (pending.empty()) fail(ErrorCode::NoValidComparisons, "no cohort pair has treatment variation");

  double total = 0.0;
  for (const Pending& p : pending) total += p.raw_weight;
  for (Pending& p : pending) {
    p.cmp.weight = p.raw_weight / total;
    report.reconstruction += p.cmp.weight * p.cmp.did;
    if (p.cmp.kind == ComparisonKind::VsAlreadyTreated) report.forbidden_share += p.cmp.weight;
    report.comparisons.push_back(p.cmp);
  }
  return report;
}

// ---------------------------------------------------------------------------
// Event-study weights

double ContaminationTable::max_invariant_violation() const {
  double worst = 0.0;
  for (const auto& [bin, sum] : bin_sums) {
    worst = std::max(worst, std::abs(sum - (bin == target_horizon ? 1.0 : 0.0)));
  }
  return worst;
}

ContaminationTable event_study_weights(const EventStudyFit& es, const PanelDataset& data, int target) {
  const auto pos = std::find(es.horizons.begin(), es.horizons.end(), target);
  if (pos == es.horizons.end()) {
    fail(ErrorCode::HorizonOutOfRange, "relative time " + std::to_string(target) + " has no fitted coefficient");
  }
  const auto j = static_cast<Eigen::Index>(pos - es.horizons.begin());

  ContaminationTable table;
  table.target_horizon = target;
  table.target_term = es.fit.terms[static_cast<std::size_t>(j)];
  table.coefficient = es.fit.coefficients[j];
  table.dropped = es.fit.dropped;
  for (int h : es.horizons) table.bin_sums[h] = 0.0;

  const auto rows = data.rows();
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& f = es.first_treated[rows[r].group];
    if (!f) continue;
    const int rel = rows[r].time - *f;
    const auto bin = es.bin_of(rel);
    if (rel < 0 && !bin) continue;
    const double w = es.fit.influence(static_cast<Eigen::Index>(r), j);
    const ContaminationEntry entry{rows[r].group, rel, bin, w};
    if (bin) table.bin_sums[*bin] += w;
    if (bin && *bin == target) {
      table.own_weights.push_back(entry);
      table.own_sum += w;
    } else if (rel >= 0) {
      table.contamination[rel].push_back(entry);
      table.contamination_sums[rel] += w;
    }
  }
  return table;
}

ContaminationTable event_study_weights(const PanelDataset& data, const EventStudySpec& spec, int target,
                                       const FitOptions& options) {
  return event_study_weights(fit_event_study(data, spec, options), data, target);
}

}  // namespace hetdid
