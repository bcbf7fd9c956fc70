#include "hetdid/sim.hpp"

#include <cmath>
#include <random>
#include <string>

#include "hetdid/error.hpp"

namespace hetdid {

namespace {

struct Draft {
  std::vector<std::string> labels;
  std::vector<Period> periods;
  Matrix treatment, y0, effects, extra, weights;
  bool weighted = false;
};

Simulation finish(const Draft& d) {
  const auto G = static_cast<Eigen::Index>(d.labels.size());
  const auto T = static_cast<Eigen::Index>(d.periods.size());
  PanelBuilder builder;
  builder.reserve(static_cast<std::size_t>(G * T));
  for (Eigen::Index g = 0; g < G; ++g) {
    for (Eigen::Index t = 0; t < T; ++t) {
      const double y = d.y0(g, t) + d.effects(g, t) + d.extra(g, t);
      builder.add(d.labels[static_cast<std::size_t>(g)], d.periods[static_cast<std::size_t>(t)], d.treatment(g, t),
                  y, d.weighted ? std::optional<double>(d.weights(g, t)) : std::nullopt);
    }
  }
  Simulation sim{builder.build(), {}};
  const DesignInfo design = derive_design(sim.data);

  // builder order may differ from draft order; map through labels
  sim.truth.untreated_outcome = Matrix::Zero(G, T);
  std::map<std::pair<Period, int>, std::pair<double, double>> acc;
  for (Eigen::Index dg = 0; dg < G; ++dg) {
    const GroupIndex g = *sim.data.group_index(d.labels[static_cast<std::size_t>(dg)]);
    for (Eigen::Index t = 0; t < T; ++t) {
      sim.truth.untreated_outcome(static_cast<Eigen::Index>(g), t) = d.y0(dg, t);
      if (d.treatment(dg, t) == 0.0) continue;
      TruthCell cell;
      cell.group = g;
      cell.time = d.periods[static_cast<std::size_t>(t)];
      cell.effect = d.effects(dg, t);
      cell.weight = d.weighted ? d.weights(dg, t) : 1.0;
      const SwitchDate f = design.first_switch[g];
      if (!f.is_never() && cell.time >= f.period()) {
        cell.cohort = f.period();
        cell.horizon = cell.time - f.period();
        auto& a = acc[{*cell.cohort, *cell.horizon}];
        a.first += cell.weight * cell.effect;
        a.second += cell.weight;
      }
      sim.truth.cells.push_back(cell);
    }
  }
  for (const auto& [key, a] : acc) sim.truth.cohort_horizon[key] = a.first / a.second;
  return sim;
}

Draft blank(std::vector<std::string> labels, std::vector<Period> periods) {
  Draft d;
  const auto G = static_cast<Eigen::Index>(labels.size());
  const auto T = static_cast<Eigen::Index>(periods.size());
  d.labels = std::move(labels);
  d.periods = std::move(periods);
  d.treatment = d.y0 = d.effects = d.extra = Matrix::Zero(G, T);
  d.weights = Matrix::Ones(G, T);
  return d;
}

Simulation fig1(const Fig1Params& p) {
  std::vector<std::string> labels{"e", "l"};
  if (p.never_treated_group) labels.push_back("n");
  Draft d = blank(labels, {1, 2, 3});
  d.treatment(0, 1) = d.treatment(0, 2) = d.treatment(1, 2) = 1.0;
  d.effects(0, 1) = p.te_e2;
  d.effects(0, 2) = p.te_e3;
  d.effects(1, 2) = p.te_l3;
  return finish(d);
}

Simulation fig2(const Fig2Params& p) {
  Draft d = blank({"m", "l"}, {1, 2});
  d.treatment(0, 1) = 2.0;
  d.treatment(1, 1) = 1.0;
  d.effects(0, 1) = p.delta_m * 2.0;
  d.effects(1, 1) = p.delta_l * 1.0;
  return finish(d);
}

void check_sd(double v, const char* name) {
  if (!(v >= 0.0) || !std::isfinite(v)) fail(ErrorCode::InvalidSpec, std::string(name) + " must be finite and >= 0");
}

std::vector<std::string> numeric_labels(int n) {
  std::vector<std::string> out;
  for (int g = 1; g <= n; ++g) out.push_back(std::to_string(g));
  return out;
}

Simulation staggered(const StaggeredParams& p, std::uint64_t seed) {
  if (p.n_groups < 2 || p.n_periods < 2) fail(ErrorCode::InvalidSpec, "need at least 2 groups and 2 periods");
  check_sd(p.group_effect_sd, "group_effect_sd");
  check_sd(p.group_fe_sd, "group_fe_sd");
  check_sd(p.time_fe_sd, "time_fe_sd");
  check_sd(p.noise_sd, "noise_sd");
  const Period last = p.first_period + p.n_periods - 1;
  double share_sum = 0.0;
  for (const auto& [c, s] : p.cohort_shares) {
    if (c <= p.first_period || c > last) {
      fail(ErrorCode::InvalidSpec, "cohort " + std::to_string(c) + " must lie in (" +
                                       std::to_string(p.first_period) + ", " + std::to_string(last) + "]");
    }
    if (!(s >= 0.0)) fail(ErrorCode::InvalidSpec, "cohort shares must be >= 0");
    share_sum += s;
  }
  if (share_sum > 1.0 + 1e-12) fail(ErrorCode::InvalidSpec, "cohort shares sum to more than 1");

  std::vector<Period> periods;
  for (Period t = p.first_period; t <= last; ++t) periods.push_back(t);
  Draft d = blank(numeric_labels(p.n_groups), periods);
  const Eigen::Index G = p.n_groups, T = p.n_periods;

  std::vector<std::optional<Period>> cohort(static_cast<std::size_t>(G));
  Eigen::Index next = 0;
  for (const auto& [c, s] : p.cohort_shares) {
    const auto n = std::min<Eigen::Index>(static_cast<Eigen::Index>(std::floor(s * G + 0.5)), G - next);
    for (Eigen::Index i = 0; i < n; ++i) cohort[static_cast<std::size_t>(next++)] = c;
  }

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(1.0, 10.0);
  Vector alpha(G), gamma(T), u(G);
  for (Eigen::Index g = 0; g < G; ++g) alpha[g] = p.group_fe_sd * normal(rng);
  for (Eigen::Index t = 0; t < T; ++t) gamma[t] = p.time_fe_sd * normal(rng);
  for (Eigen::Index g = 0; g < G; ++g) u[g] = p.group_effect_sd * normal(rng);
  if (p.weights != WeightScheme::Uniform) {
    d.weighted = true;
    for (Eigen::Index g = 0; g < G; ++g) {
      const double wg = unif(rng);
      for (Eigen::Index t = 0; t < T; ++t) d.weights(g, t) = p.weights == WeightScheme::RandomGroup ? wg : unif(rng);
    }
  }

  for (Eigen::Index g = 0; g < G; ++g) {
    const auto& c = cohort[static_cast<std::size_t>(g)];
    for (Eigen::Index t = 0; t < T; ++t) {
      const Period time = periods[static_cast<std::size_t>(t)];
      double y0 = alpha[g] + gamma[t];
      if (c) y0 += p.trend_gap * (time - p.first_period);
      if (p.noise_sd > 0.0) y0 += p.noise_sd * normal(rng);
      d.y0(g, t) = y0;
      if (c && time >= *c) {
        d.treatment(g, t) = 1.0;
        d.effects(g, t) = p.intercept + p.horizon_slope * (time - *c) + p.cohort_slope * (*c - p.first_period) + u[g];
      }
      if (c && time == *c - 1) d.extra(g, t) = p.anticipation;
    }
  }
  return finish(d);
}

Simulation custom(const CustomParams& p, std::uint64_t seed) {
  const Eigen::Index G = p.treatment.rows(), T = p.treatment.cols();
  if (G < 2 || T < 2) fail(ErrorCode::InvalidSpec, "custom design needs at least 2 groups and 2 periods");
  if (p.effects.rows() != G || p.effects.cols() != T) {
    fail(ErrorCode::InvalidSpec, "effect matrix must match the treatment matrix");
  }
  if (p.untreated_outcome && (p.untreated_outcome->rows() != G || p.untreated_outcome->cols() != T)) {
    fail(ErrorCode::InvalidSpec, "untreated outcome matrix must match the treatment matrix");
  }
  check_sd(p.noise_sd, "noise_sd");
  std::vector<Period> periods;
  for (Eigen::Index t = 0; t < T; ++t) periods.push_back(p.first_period + static_cast<Period>(t));
  Draft d = blank(numeric_labels(static_cast<int>(G)), periods);
  d.treatment = p.treatment;
  d.effects = p.effects;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  if (p.untreated_outcome) {
    d.y0 = *p.untreated_outcome;
  } else {
    Vector alpha(G), gamma(T);
    for (Eigen::Index g = 0; g < G; ++g) alpha[g] = normal(rng);
    for (Eigen::Index t = 0; t < T; ++t) gamma[t] = normal(rng);
    for (Eigen::Index g = 0; g < G; ++g) {
      for (Eigen::Index t = 0; t < T; ++t) d.y0(g, t) = alpha[g] + gamma[t];
    }
  }
  if (p.noise_sd > 0.0) {
    for (Eigen::Index g = 0; g < G; ++g) {
      for (Eigen::Index t = 0; t < T; ++t) d.y0(g, t) += p.noise_sd * normal(rng);
    }
  }
  return finish(d);
}

}  // namespace

Simulation generate(const DgpSpec& spec) {
  switch (spec.kind) {
    case DgpKind::Fig1EarlyLate: return fig1(spec.fig1);
    case DgpKind::Fig2MoreLess: return fig2(spec.fig2);
    case DgpKind::Staggered: return staggered(spec.staggered, spec.seed);
    case DgpKind::ParallelCustom: return custom(spec.custom, spec.seed);
  }
  fail(ErrorCode::InvalidSpec, "unknown DGP kind");
}

TruthSelector select_all() {
  return [](const TruthCell&) { return true; };
}

TruthSelector select_cohort_horizon(Period cohort, int horizon) {
  return [=](const TruthCell& c) { return c.cohort == cohort && c.horizon == horizon; };
}

TruthSelector select_horizon(int horizon) {
  return [=](const TruthCell& c) { return c.horizon == horizon; };
}

double ground_truth_att(const GroundTruth& truth, const TruthSelector& selector) {
  double num = 0.0, den = 0.0;
  for (const TruthCell& c : truth.cells) {
    if (!selector(c)) continue;
    num += c.weight * c.effect;
    den += c.weight;
  }
  if (den == 0.0) fail(ErrorCode::EmptySelection, "the selector matches no treated cell");
  return num / den;
}

}  // namespace hetdid
