#include "hetdid/dynamic_estimators.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hetdid/error.hpp"

namespace hetdid {

std::string to_string(ControlRule rule) {
  switch (rule) {
    case ControlRule::NeverTreated: return "never_treated";
    case ControlRule::NotYetTreated: return "not_yet_treated";
    case ControlRule::LastTreated: return "last_treated";
  }
  return "unknown";
}

std::optional<ControlRule> parse_control_rule(std::string_view text) {
  if (text == "never_treated" || text == "never") return ControlRule::NeverTreated;
  if (text == "not_yet_treated" || text == "notyet" || text == "not_yet") return ControlRule::NotYetTreated;
  if (text == "last_treated" || text == "last") return ControlRule::LastTreated;
  return std::nullopt;
}

namespace {

struct WeightedMean {
  double sum = 0.0;
  double weight = 0.0;
  std::size_t n = 0;

  void add(double x, double w) {
    sum += w * x;
    weight += w;
    ++n;
  }
  double value() const { return sum / weight; }
};

std::string period_text(Period t) { return std::to_string(t); }

// Change of Y from `early` to `late`, weighted by N at `weight_at`, over the
// groups observed at all three dates.
WeightedMean mean_change(const PanelDataset& data, const std::vector<GroupIndex>& groups, Period early, Period late,
                         Period weight_at) {
  WeightedMean m;
  for (GroupIndex g : groups) {
    const Cell* a = data.find(g, early);
    const Cell* b = data.find(g, late);
    const Cell* w = data.find(g, weight_at);
    if (a && b && w) m.add(b->outcome - a->outcome, w->weight);
  }
  return m;
}

struct CsSetup {
  std::vector<GroupIndex> treated;
  std::vector<GroupIndex> controls;
};

// Groups of cohort c and the controls for its effect at c+horizon.
CsSetup cs_setup(const PanelDataset& data, const DesignInfo& design, Period cohort, int horizon, ControlRule rule) {
  const auto it = design.cohorts.find(cohort);
  if (it == design.cohorts.end()) {
    fail(ErrorCode::CohortEmpty, "no group is first treated at period " + period_text(cohort));
  }
  const Period target = cohort + horizon;
  if (!data.has_period(target) || !data.has_period(cohort - 1)) {
    fail(ErrorCode::HorizonOutOfRange, "cohort " + period_text(cohort) + " at horizon " + std::to_string(horizon) +
                                           " needs periods " + period_text(cohort - 1) + " and " +
                                           period_text(target));
  }
  CsSetup s;
  s.treated = it->second;
  switch (rule) {
    case ControlRule::NeverTreated:
      for (GroupIndex g = 0; g < data.n_groups(); ++g) {
        if (design.first_switch[g].is_never() && design.baseline_treatment[g] == 0.0) s.controls.push_back(g);
      }
      break;
    case ControlRule::NotYetTreated:
      for (GroupIndex g = 0; g < data.n_groups(); ++g) {
        if (design.first_switch[g] > target && design.baseline_treatment[g] == 0.0) s.controls.push_back(g);
      }
      break;
    case ControlRule::LastTreated: {
      const Period last = design.cohorts.rbegin()->first;
      if (cohort == last) {
        fail(ErrorCode::NoControls, "cohort " + period_text(cohort) + " is the last-treated cohort");
      }
      if (target >= last) {
        fail(ErrorCode::HorizonOutOfRange, "the last-treated cohort is treated from period " + period_text(last) +
                                               ", so horizon " + std::to_string(horizon) + " of cohort " +
                                               period_text(cohort) + " has no control");
      }
      s.controls = design.cohorts.rbegin()->second;
      break;
    }
  }
  return s;
}

CohortHorizonEffect cs_did(const PanelDataset& data, const CsSetup& s, Period cohort, int reported_horizon,
                           Period early, Period late, Period weight_at, ControlRule rule) {
  const WeightedMean tr = mean_change(data, s.treated, early, late, weight_at);
  if (tr.n == 0) {
    fail(ErrorCode::CohortEmpty, "no group of cohort " + period_text(cohort) + " is observed at periods " +
                                     period_text(early) + " and " + period_text(late));
  }
  const WeightedMean ct = mean_change(data, s.controls, early, late, weight_at);
  if (ct.n == 0) {
    fail(ErrorCode::NoControls, "no " + to_string(rule) + " control for cohort " + period_text(cohort) +
                                    " between periods " + period_text(early) + " and " + period_text(late));
  }
  CohortHorizonEffect e;
  e.cohort = cohort;
  e.horizon = reported_horizon;
  e.estimate = tr.value() - ct.value();
  e.n_treated_groups = tr.n;
  e.n_control_groups = ct.n;
  e.treated_weight = tr.weight;
  e.control_rule = rule;
  return e;
}

DesignInfo binary_staggered_design(const PanelDataset& data) {
  DesignInfo design = derive_design(data);
  if (!design.is_binary_staggered()) {
    fail(ErrorCode::NotBinaryStaggered, "cohort-horizon estimators need a binary staggered treatment");
  }
  return design;
}

}  // namespace

CohortHorizonEffect cs_effect(const PanelDataset& data, Period cohort, int horizon, ControlRule rule) {
  if (horizon < 0) fail(ErrorCode::InvalidSpec, "horizon must be >= 0");
  const DesignInfo design = binary_staggered_design(data);
  const CsSetup s = cs_setup(data, design, cohort, horizon, rule);
  return cs_did(data, s, cohort, horizon, cohort - 1, cohort + horizon, cohort + horizon, rule);
}

CohortHorizonEffect cs_placebo(const PanelDataset& data, Period cohort, int index, ControlRule rule,
                               PlaceboKind kind) {
  const DesignInfo design = binary_staggered_design(data);
  if (kind == PlaceboKind::LongDifference) {
    if (index < 0) fail(ErrorCode::InvalidSpec, "long-difference placebo index must be >= 0");
    const CsSetup s = cs_setup(data, design, cohort, index, rule);
    const Period early = cohort - index - 2;
    if (!data.has_period(early)) {
      fail(ErrorCode::InsufficientPreperiods,
           "cohort " + period_text(cohort) + " has no period " + period_text(early) + " for placebo " +
               std::to_string(index));
    }
    return cs_did(data, s, cohort, -(index + 2), early, cohort - 1, cohort + index, rule);
  }
  if (index < 1) fail(ErrorCode::InvalidSpec, "first-difference placebo index must be >= 1");
  const CsSetup s = cs_setup(data, design, cohort, 0, rule);
  const Period early = cohort - index - 1;
  if (!data.has_period(early) || !data.has_period(cohort - index)) {
    fail(ErrorCode::InsufficientPreperiods,
         "cohort " + period_text(cohort) + " has no period " + period_text(early) + " for placebo " +
             std::to_string(index));
  }
  return cs_did(data, s, cohort, -(index + 1), early, cohort - index, cohort, rule);
}

AggregateEffect cs_aggregate(std::span<const CohortHorizonEffect> effects, int horizon) {
  AggregateEffect out;
  out.horizon = horizon;
  double num = 0.0;
  for (const CohortHorizonEffect& e : effects) {
    if (e.horizon != horizon) continue;
    num += e.treated_weight * e.estimate;
    out.weight += e.treated_weight;
    ++out.n_cohorts;
  }
  if (out.n_cohorts == 0) {
    fail(ErrorCode::EmptyHorizon, "no cohort effect at horizon " + std::to_string(horizon));
  }
  out.estimate = num / out.weight;
  return out;
}

namespace {

bool recoverable(const Error& e) {
  switch (e.code()) {
    case ErrorCode::NoControls:
    case ErrorCode::HorizonOutOfRange:
    case ErrorCode::CohortEmpty:
    case ErrorCode::InsufficientPreperiods: return true;
    default: return false;
  }
}

template <typename Fn>
HorizonEstimate aggregate_cohorts(const DesignInfo& design, int reported, Fn&& effect_for) {
  HorizonEstimate h;
  h.horizon = reported;
  std::vector<CohortHorizonEffect> effects;
  std::string last_reason;
  for (const auto& [c, groups] : design.cohorts) {
    try {
      effects.push_back(effect_for(c));
    } catch (const Error& e) {
      if (!recoverable(e)) throw;
      last_reason = std::string(error_name(e.code()));
    }
  }
  if (effects.empty()) {
    h.note = last_reason.empty() ? "no cohort" : last_reason;
    return h;
  }
  const AggregateEffect a = cs_aggregate(effects, reported);
  h.estimate = a.estimate;
  h.weight = a.weight;
  for (const auto& e : effects) h.n_switchers += e.n_treated_groups;
  return h;
}

}  // namespace

EventStudyResult cs_event_study(const PanelDataset& data, ControlRule rule, int max_horizon, int n_placebos,
                                PlaceboKind kind) {
  if (max_horizon < 0 || n_placebos < 0) fail(ErrorCode::InvalidSpec, "horizons must be >= 0");
  const DesignInfo design = binary_staggered_design(data);
  EventStudyResult out;
  out.estimator = "cs_" + to_string(rule);
  for (int l = 0; l <= max_horizon; ++l) {
    out.effects.push_back(aggregate_cohorts(design, l, [&](Period c) { return cs_effect(data, c, l, rule); }));
  }
  for (int p = 0; p < n_placebos; ++p) {
    const int index = kind == PlaceboKind::LongDifference ? p : p + 1;
    const int reported = kind == PlaceboKind::LongDifference ? -(index + 2) : -(index + 1);
    out.placebos.push_back(
        aggregate_cohorts(design, reported, [&](Period c) { return cs_placebo(data, c, index, rule, kind); }));
  }
  if (std::none_of(out.effects.begin(), out.effects.end(), [](const auto& h) { return h.estimate.has_value(); })) {
    fail(ErrorCode::EmptyHorizon, "no cohort effect is estimable at any requested horizon");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Imputation

namespace {

struct UnionFind {
  std::vector<std::size_t> parent;
  explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(std::size_t a, std::size_t b) { parent[find(a)] = find(b); }
};

void require_binary(const PanelDataset& data) {
  for (const Cell& c : data.rows()) {
    if (c.treatment != 0.0 && c.treatment != 1.0) {
      fail(ErrorCode::NotBinary, "treatment of group '" + data.group_label(c.group) + "' at period " +
                                     period_text(c.time) + " is not 0/1");
    }
  }
}

void check_identification(const PanelDataset& data, Trends trends) {
  const std::size_t G = data.n_groups();
  UnionFind uf(G + data.n_periods());
  std::vector<int> untreated_in_group(G, 0);
  std::vector<int> untreated_in_period(data.n_periods(), 0);
  for (const Cell& c : data.rows()) {
    if (c.treatment != 0.0) continue;
    const std::size_t ti = *data.period_index(c.time);
    uf.unite(c.group, G + ti);
    ++untreated_in_group[c.group];
    ++untreated_in_period[ti];
  }
  for (const Cell& c : data.rows()) {
    if (c.treatment == 0.0) continue;
    const std::size_t ti = *data.period_index(c.time);
    if (untreated_in_group[c.group] == 0) {
      fail(ErrorCode::UnidentifiedFixedEffect,
           "group '" + data.group_label(c.group) + "' has no untreated period, so its effect is not identified");
    }
    if (untreated_in_period[ti] == 0) {
      fail(ErrorCode::UnidentifiedFixedEffect,
           "period " + period_text(c.time) + " has no untreated group, so its effect is not identified");
    }
    if (uf.find(c.group) != uf.find(G + ti)) {
      fail(ErrorCode::UnidentifiedFixedEffect, "group '" + data.group_label(c.group) + "' and period " +
                                                   period_text(c.time) +
                                                   " are not connected through untreated cells");
    }
    if (trends == Trends::GroupLinear && untreated_in_group[c.group] < 2) {
      fail(ErrorCode::InsufficientPretrendData,
           "group '" + data.group_label(c.group) + "' needs at least two untreated periods for a linear trend");
    }
  }
}

double centered_time(const PanelDataset& data, Period t) {
  return static_cast<double>(t) - 0.5 * (static_cast<double>(data.first_period()) + data.last_period());
}

std::vector<double> impute_by_prediction(const PanelDataset& data, Trends trends,
                                         const std::vector<std::size_t>& untreated,
                                         const std::vector<std::size_t>& treated, const FitOptions& options) {
  const auto n = static_cast<Eigen::Index>(untreated.size());
  Vector y(n), w(n), z(n);
  Factor gf{"group", {}, static_cast<Eigen::Index>(data.n_groups()), std::nullopt};
  Factor tf{"time", {}, static_cast<Eigen::Index>(data.n_periods()), std::nullopt};
  for (Eigen::Index i = 0; i < n; ++i) {
    const Cell& c = data.rows()[untreated[static_cast<std::size_t>(i)]];
    y[i] = c.outcome;
    w[i] = c.weight;
    z[i] = centered_time(data, c.time);
    gf.codes.push_back(static_cast<Eigen::Index>(c.group));
    tf.codes.push_back(static_cast<Eigen::Index>(*data.period_index(c.time)));
  }
  if (trends == Trends::GroupLinear) gf.slope = z;
  Absorber::Options aopt;
  aopt.tolerance = options.tolerance;
  aopt.max_iterations = options.max_iterations;
  aopt.reverse_order = options.reverse_absorb_order;
  const Absorber absorber({std::move(gf), std::move(tf)}, w, aopt);
  const Absorber::Effects fx = absorber.demean_recording(y);

  std::vector<double> te;
  te.reserve(treated.size());
  for (std::size_t r : treated) {
    const Cell& c = data.rows()[r];
    const auto g = static_cast<Eigen::Index>(c.group);
    const auto ti = static_cast<Eigen::Index>(*data.period_index(c.time));
    double y0 = fx.intercept[0][g] + fx.intercept[1][ti];
    if (trends == Trends::GroupLinear) y0 += fx.slope[0][g] * centered_time(data, c.time);
    te.push_back(c.outcome - y0);
  }
  return te;
}

std::vector<double> impute_by_dummies(const PanelDataset& data, Trends trends, const std::vector<std::size_t>& treated,
                                      const FitOptions& options) {
  RegressionProblem p = panel_problem(data);
  p.cluster.clear();
  if (trends == Trends::GroupLinear) {
    Vector z(p.y.size());
    for (std::size_t r = 0; r < data.n_rows(); ++r) {
      z[static_cast<Eigen::Index>(r)] = centered_time(data, data.rows()[r].time);
    }
    p.absorb[0].slope = z;
  }
  p.X = Matrix::Zero(p.y.size(), static_cast<Eigen::Index>(treated.size()));
  for (std::size_t j = 0; j < treated.size(); ++j) {
    p.X(static_cast<Eigen::Index>(treated[j]), static_cast<Eigen::Index>(j)) = 1.0;
    p.terms.push_back("cell" + std::to_string(j));
  }
  const FitResult fit = absorb_and_fit(p, options);
  return {fit.coefficients.data(), fit.coefficients.data() + fit.coefficients.size()};
}

}  // namespace

ImputationResult imputation_fit(const PanelDataset& data, Trends trends, ImputationMethod method,
                                const FitOptions& options) {
  require_binary(data);
  std::vector<std::size_t> untreated, treated;
  for (std::size_t r = 0; r < data.n_rows(); ++r) {
    (data.rows()[r].treatment == 0.0 ? untreated : treated).push_back(r);
  }
  if (treated.empty()) fail(ErrorCode::NoValidComparisons, "no treated cell to impute");
  check_identification(data, trends);

  const std::vector<double> te = method == ImputationMethod::Predict
                                     ? impute_by_prediction(data, trends, untreated, treated, options)
                                     : impute_by_dummies(data, trends, treated, options);

  const auto first = first_treated_periods(data);
  ImputationResult out;
  out.trends = trends;
  std::map<std::pair<Period, int>, WeightedMean> by_ch;
  std::map<int, WeightedMean> by_h;
  WeightedMean overall;
  for (std::size_t j = 0; j < treated.size(); ++j) {
    const Cell& c = data.rows()[treated[j]];
    ImputedCell ic;
    ic.group = c.group;
    ic.time = c.time;
    ic.cohort = *first[c.group];
    ic.horizon = c.time - ic.cohort;
    ic.effect = te[j];
    ic.weight = c.weight;
    by_ch[{ic.cohort, ic.horizon}].add(ic.effect, ic.weight);
    by_h[ic.horizon].add(ic.effect, ic.weight);
    overall.add(ic.effect, ic.weight);
    out.cells.push_back(ic);
  }
  for (const auto& [k, m] : by_ch) out.by_cohort_horizon[k] = m.value();
  for (const auto& [k, m] : by_h) out.by_horizon[k] = m.value();
  out.overall = overall.value();
  return out;
}

ImputationPlacebo imputation_placebo(const PanelDataset& data, int leads, const FitOptions& options) {
  if (leads < 0) fail(ErrorCode::InvalidSpec, "number of leads must be >= 0");
  ImputationPlacebo out;
  if (leads == 0) return out;
  require_binary(data);
  const auto first = first_treated_periods(data);

  std::vector<std::size_t> rows;
  for (std::size_t r = 0; r < data.n_rows(); ++r) {
    if (data.rows()[r].treatment == 0.0) rows.push_back(r);
  }
  const auto n = static_cast<Eigen::Index>(rows.size());
  RegressionProblem p;
  p.y.resize(n);
  p.w.resize(n);
  p.X = Matrix::Zero(n, leads);
  Factor gf{"group", {}, static_cast<Eigen::Index>(data.n_groups()), std::nullopt};
  Factor tf{"time", {}, static_cast<Eigen::Index>(data.n_periods()), std::nullopt};
  for (Eigen::Index i = 0; i < n; ++i) {
    const Cell& c = data.rows()[rows[static_cast<std::size_t>(i)]];
    p.y[i] = c.outcome;
    p.w[i] = c.weight;
    gf.codes.push_back(static_cast<Eigen::Index>(c.group));
    tf.codes.push_back(static_cast<Eigen::Index>(*data.period_index(c.time)));
    p.cluster.push_back(static_cast<Eigen::Index>(c.group));
    if (const auto& f = first[c.group]) {
      const int rel = c.time - *f;
      if (rel < 0 && -rel <= leads) p.X(i, -rel - 1) = 1.0;
    }
  }
  for (int k = 1; k <= leads; ++k) {
    out.relative_times.push_back(-k);
    p.terms.push_back("lead" + std::to_string(k));
    if (p.X.col(k - 1).sum() == 0.0) {
      fail(ErrorCode::RankDeficient, "no untreated cell sits " + std::to_string(k) + " periods before treatment");
    }
  }
  p.absorb = {std::move(gf), std::move(tf)};
  FitResult fit;
  try {
    fit = absorb_and_fit(p, options);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::CollinearRegressor) fail(ErrorCode::RankDeficient, e.what());
    throw;
  }
  out.estimates = fit.coefficients;
  out.vcov = fit.vcov;
  return out;
}

EventStudyResult imputation_event_study(const PanelDataset& data, int max_horizon, int n_placebos, Trends trends) {
  if (max_horizon < 0 || n_placebos < 0) fail(ErrorCode::InvalidSpec, "horizons must be >= 0");
  const ImputationResult fit = imputation_fit(data, trends);
  EventStudyResult out;
  out.estimator = trends == Trends::GroupLinear ? "imputation_trends" : "imputation";
  std::map<int, std::pair<double, std::size_t>> mass;
  for (const ImputedCell& c : fit.cells) {
    mass[c.horizon].first += c.weight;
    ++mass[c.horizon].second;
  }
  for (int l = 0; l <= max_horizon; ++l) {
    HorizonEstimate h;
    h.horizon = l;
    if (const auto it = fit.by_horizon.find(l); it != fit.by_horizon.end()) {
      h.estimate = it->second;
      h.weight = mass[l].first;
      h.n_switchers = mass[l].second;
    } else {
      h.note = "no treated cell at this horizon";
    }
    out.effects.push_back(h);
  }
  if (n_placebos > 0) {
    const ImputationPlacebo pl = imputation_placebo(data, n_placebos);
    for (std::size_t k = 0; k < pl.relative_times.size(); ++k) {
      HorizonEstimate h;
      h.horizon = pl.relative_times[k];
      h.estimate = pl.estimates[static_cast<Eigen::Index>(k)];
      out.placebos.push_back(h);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// First-switch estimators

namespace {

struct SwitchContext {
  const PanelDataset& data;
  DesignInfo design;
};

struct GroupDid {
  double did = 0.0;
  double weight = 0.0;
  std::size_t n_controls = 0;
};

std::vector<GroupIndex> first_switch_controls(const SwitchContext& ctx, GroupIndex g, Period target) {
  std::vector<GroupIndex> out;
  for (GroupIndex h = 0; h < ctx.data.n_groups(); ++h) {
    if (h == g) continue;
    if (ctx.design.baseline_treatment[h] != ctx.design.baseline_treatment[g]) continue;
    if (ctx.design.first_switch[h] > target) out.push_back(h);
  }
  return out;
}

// DID of group g from `early` to `late`, controls observed at both dates.
std::optional<GroupDid> group_did(const SwitchContext& ctx, GroupIndex g, const std::vector<GroupIndex>& controls,
                                  Period early, Period late, Period weight_at) {
  const Cell* a = ctx.data.find(g, early);
  const Cell* b = ctx.data.find(g, late);
  const Cell* w = ctx.data.find(g, weight_at);
  if (!a || !b || !w) return std::nullopt;
  const WeightedMean ct = mean_change(ctx.data, controls, early, late, weight_at);
  if (ct.n == 0) return std::nullopt;
  return GroupDid{(b->outcome - a->outcome) - ct.value(), w->weight, ct.n};
}

}  // namespace

double dcdh_effect(const PanelDataset& data, GroupIndex group, int horizon) {
  if (group >= data.n_groups()) fail(ErrorCode::GroupNotFound, "group index out of range");
  if (horizon < 0) fail(ErrorCode::InvalidSpec, "horizon must be >= 0");
  const SwitchContext ctx{data, derive_design(data)};
  const SwitchDate f = ctx.design.first_switch[group];
  if (f.is_never()) {
    fail(ErrorCode::InvalidSpec, "group '" + data.group_label(group) + "' never changes treatment");
  }
  const Period target = f.period() + horizon;
  const Period base = f.period() - 1;
  if (!data.find(group, target) || !data.find(group, base)) {
    fail(ErrorCode::HorizonOutOfRange, "group '" + data.group_label(group) + "' is not observed at periods " +
                                           period_text(base) + " and " + period_text(target));
  }
  const auto controls = first_switch_controls(ctx, group, target);
  const auto d = group_did(ctx, group, controls, base, target, target);
  if (!d) {
    fail(ErrorCode::NoControls, "no group with the same period-one treatment as '" + data.group_label(group) +
                                    "' keeps it through period " + period_text(target));
  }
  return d->did;
}

EventStudyResult dcdh_aggregate(const PanelDataset& data, const DcdhOptions& options) {
  if (options.max_horizon < 0 || options.n_placebos < 0) fail(ErrorCode::InvalidSpec, "horizons must be >= 0");
  const SwitchContext ctx{data, derive_design(data)};
  std::vector<GroupIndex> switchers;
  for (GroupIndex g = 0; g < data.n_groups(); ++g) {
    if (!ctx.design.first_switch[g].is_never()) switchers.push_back(g);
  }

  EventStudyResult out;
  out.estimator = "dcdh";
  std::vector<double> omega;
  double num = 0.0, den = 0.0;
  for (int l = 0; l <= options.max_horizon; ++l) {
    HorizonEstimate h;
    h.horizon = l;
    WeightedMean effect, first_stage;
    for (GroupIndex g : switchers) {
      const Period f = ctx.design.first_switch[g].period();
      const Period target = f + l;
      const auto d = group_did(ctx, g, first_switch_controls(ctx, g, target), f - 1, target, target);
      if (!d) continue;
      const double d1 = ctx.design.baseline_treatment[g];
      const double sign = data.find(g, f)->treatment > d1 ? 1.0 : -1.0;
      effect.add(sign * d->did, d->weight);
      first_stage.add(std::abs(data.find(g, target)->treatment - d1), d->weight);
    }
    if (effect.n == 0) {
      h.note = "no switcher with a control group at this horizon";
    } else {
      h.estimate = effect.value();
      h.weight = effect.weight;
      h.n_switchers = effect.n;
      out.first_stage.push_back({l, first_stage.value()});
      const double w = options.normalization_weights == HorizonWeighting::Uniform ? 1.0 : effect.weight;
      num += w * effect.value();
      den += w * first_stage.value();
    }
    out.effects.push_back(h);
  }
  if (!out.effects.front().estimate) {
    fail(ErrorCode::EmptyHorizon, "no switcher has a control group at horizon 0");
  }
  if (den > 0.0) out.normalized_effect = NormalizedEffect{num / den, std::nullopt, std::nullopt, std::nullopt};

  for (int l = 0; l < options.n_placebos; ++l) {
    HorizonEstimate h;
    h.horizon = -(l + 2);
    WeightedMean placebo;
    for (GroupIndex g : switchers) {
      const Period f = ctx.design.first_switch[g].period();
      const Period target = f + l;
      if (!data.find(g, target)) continue;
      const auto controls = first_switch_controls(ctx, g, target);
      // same groups and controls as the horizon-l effect
      std::vector<GroupIndex> usable;
      for (GroupIndex c : controls) {
        if (data.find(c, target) && data.find(c, f - 1)) usable.push_back(c);
      }
      if (usable.empty()) continue;
      const auto d = group_did(ctx, g, usable, f - l - 2, f - 1, target);
      if (!d) continue;
      const double sign = data.find(g, f)->treatment > ctx.design.baseline_treatment[g] ? 1.0 : -1.0;
      placebo.add(sign * d->did, d->weight);
    }
    if (placebo.n == 0) {
      h.note = std::string(error_name(ErrorCode::InsufficientPreperiods));
    } else {
      h.estimate = placebo.value();
      h.weight = placebo.weight;
      h.n_switchers = placebo.n;
    }
    out.placebos.push_back(h);
  }
  return out;
}

}  // namespace hetdid
