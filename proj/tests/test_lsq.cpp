#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>

#include "hetdid/error.hpp"
#include "hetdid/lsq.hpp"
#include "hetdid/sim.hpp"
#include "support.hpp"

using namespace hetdid;
using namespace hetdid::testing;

namespace {

PanelDataset fig1() {
  DgpSpec s;
  return generate(s).data;
}

PanelDataset fig2() {
  DgpSpec s;
  s.kind = DgpKind::Fig2MoreLess;
  return generate(s).data;
}

template <typename Fn>
ErrorCode code_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error";
  return ErrorCode::InvalidSpec;
}

// Random unbalanced weighted panel with a staggered-ish treatment.
PanelDataset random_panel(std::mt19937_64& rng, int G, int T, double drop_prob, bool weighted) {
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  PanelBuilder b;
  for (int g = 0; g < G; ++g) {
    const int f = 2 + static_cast<int>(unif(rng) * T);
    for (int t = 1; t <= T; ++t) {
      if (t > 2 && unif(rng) < drop_prob) continue;
      const double d = t >= f ? 1.0 : 0.0;
      b.add(std::to_string(g), t, d, normal(rng) + d * (1.0 + g % 3),
            weighted ? std::optional<double>(0.5 + 3.0 * unif(rng)) : std::nullopt);
    }
  }
  return b.build();
}

}  // namespace

TEST(Twfe, TwoByTwoEqualsDid) {
  Matrix D(2, 2), Y(2, 2);
  D << 0, 1, 0, 0;
  Y << 1.0, 4.5, 2.0, 3.25;
  const FitResult f = fit_twfe(panel_from(D, Y));
  EXPECT_NEAR(f.coefficient("D"), (4.5 - 1.0) - (3.25 - 2.0), 1e-12);
}

TEST(Twfe, FigureOneSignReversal) {
  const PanelDataset d = fig1();
  const FitResult f = fit_twfe(d);
  EXPECT_NEAR(f.coefficient("D"), -0.5, 1e-12);
  EXPECT_NEAR(dense_beta_fe(d), -0.5, 1e-12);
  EXPECT_NEAR(0.5 * 1 + 1 - 0.5 * 4, -0.5, 0.0);
}

TEST(Twfe, FigureTwo) {
  const PanelDataset d = fig2();
  EXPECT_NEAR(fit_twfe(d).coefficient("D"), 2 * 1.0 - 3.0, 1e-12);
  EXPECT_NEAR(dense_beta_fe(d), -1.0, 1e-12);
  EXPECT_NEAR(fit_first_difference(d).coefficient("dD"), -1.0, 1e-12);
}

TEST(Twfe, CollinearRegressors) {
  Matrix D(3, 3), Y = Matrix::Random(3, 3);
  D << 1, 1, 1, 0, 0, 0, 2, 2, 2;
  EXPECT_EQ(code_of([&] { fit_twfe(panel_from(D, Y)); }), ErrorCode::CollinearRegressor);

  const PanelDataset d = fig1();
  RegressionProblem p = panel_problem(d);
  p.X = Matrix::Zero(p.y.size(), 1);
  for (std::size_t r = 0; r < d.n_rows(); ++r) p.X(static_cast<Eigen::Index>(r), 0) = d.rows()[r].group == 0;
  p.terms = {"is_e"};
  EXPECT_EQ(code_of([&] { absorb_and_fit(p); }), ErrorCode::CollinearRegressor);
}

TEST(Twfe, CommonTimingEqualsSimpleDid) {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> normal;
  const int G = 6, T = 5, treated = 2, start = 3;
  Matrix D = Matrix::Zero(G, T), Y(G, T);
  for (int g = 0; g < treated; ++g) D.block(g, start - 1, 1, T - start + 1).setOnes();
  for (int g = 0; g < G; ++g) {
    for (int t = 0; t < T; ++t) Y(g, t) = normal(rng);
  }
  auto mean = [&](int g0, int g1, int t0, int t1) {
    double s = 0.0;
    for (int g = g0; g < g1; ++g) {
      for (int t = t0; t < t1; ++t) s += Y(g, t);
    }
    return s / ((g1 - g0) * (t1 - t0));
  };
  const double did = (mean(0, treated, start - 1, T) - mean(0, treated, 0, start - 1)) -
                     (mean(treated, G, start - 1, T) - mean(treated, G, 0, start - 1));
  EXPECT_NEAR(fit_twfe(panel_from(D, Y)).coefficient("D"), did, 1e-12);
}

TEST(Twfe, MatchesDenseOracleOnUnbalancedWeightedPanels) {
  std::mt19937_64 rng(1);
  for (int rep = 0; rep < 30; ++rep) {
    const PanelDataset d = random_panel(rng, 8, 7, 0.2, rep % 2 == 0);
    const double beta = fit_twfe(d).coefficient("D");
    EXPECT_NEAR(beta, dense_beta_fe(d), 1e-9 * std::max(1.0, std::abs(beta)));
  }
}

TEST(Twfe, InfluenceRepresentation) {
  std::mt19937_64 rng(2);
  for (int rep = 0; rep < 20; ++rep) {
    const PanelDataset d = random_panel(rng, 7, 6, 0.25, true);
    const FitResult f = fit_twfe(d);
    const Vector c = f.influence.col(0);
    double cy = 0.0, cx = 0.0;
    for (std::size_t r = 0; r < d.n_rows(); ++r) {
      cy += c[static_cast<Eigen::Index>(r)] * d.rows()[r].outcome;
      cx += c[static_cast<Eigen::Index>(r)] * d.rows()[r].treatment;
    }
    const double beta = f.coefficients[0];
    EXPECT_NEAR(cy, beta, 1e-10 * std::max(1.0, std::abs(beta)));
    EXPECT_NEAR(c.sum(), 0.0, 1e-12);
    EXPECT_NEAR(cx, 1.0, 1e-10);
    // also zero within every group and every period
    std::map<GroupIndex, double> by_g;
    std::map<Period, double> by_t;
    for (std::size_t r = 0; r < d.n_rows(); ++r) {
      by_g[d.rows()[r].group] += c[static_cast<Eigen::Index>(r)];
      by_t[d.rows()[r].time] += c[static_cast<Eigen::Index>(r)];
    }
    for (const auto& [g, s] : by_g) EXPECT_NEAR(s, 0.0, 1e-10);
    for (const auto& [t, s] : by_t) EXPECT_NEAR(s, 0.0, 1e-10);
  }
}

TEST(Twfe, ResidualOrthogonality) {
  std::mt19937_64 rng(3);
  const PanelDataset d = random_panel(rng, 9, 6, 0.3, true);
  const FitResult f = fit_twfe(d);
  std::map<GroupIndex, double> by_g;
  std::map<Period, double> by_t;
  double by_d = 0.0, scale = 0.0;
  for (std::size_t r = 0; r < d.n_rows(); ++r) {
    const Cell& c = d.rows()[r];
    const double we = c.weight * f.residuals[static_cast<Eigen::Index>(r)];
    by_g[c.group] += we;
    by_t[c.time] += we;
    by_d += we * c.treatment;
    scale += c.weight * std::abs(c.outcome);
  }
  for (const auto& [g, s] : by_g) EXPECT_LE(std::abs(s), 1e-8 * scale);
  for (const auto& [t, s] : by_t) EXPECT_LE(std::abs(s), 1e-8 * scale);
  EXPECT_LE(std::abs(by_d), 1e-8 * scale);
}

TEST(Twfe, AbsorptionOrderDoesNotMatter) {
  std::mt19937_64 rng(4);
  for (int rep = 0; rep < 10; ++rep) {
    const PanelDataset d = random_panel(rng, 10, 8, 0.3, true);
    FitOptions rev;
    rev.reverse_absorb_order = true;
    const double a = fit_twfe(d).coefficients[0];
    const double b = fit_twfe(d, rev).coefficients[0];
    EXPECT_LE(std::abs(a - b), 1e-9 * std::max(1.0, std::abs(a)));
  }
}

TEST(Twfe, BalancedPanelFinishesInOneSweep) {
  std::mt19937_64 rng(5);
  Matrix D = random_staggered(rng, 6, 5);
  const FitResult f = fit_twfe(panel_from(D, parallel_untreated(rng, 6, 5)));
  EXPECT_EQ(f.sweeps, 1);
}

TEST(Twfe, ClusterCovarianceMatchesDenseSandwich) {
  std::mt19937_64 rng(6);
  for (int rep = 0; rep < 5; ++rep) {
    const PanelDataset d = random_panel(rng, 8, 6, 0.2, rep % 2 == 1);
    const FitResult f = fit_twfe(d);
    const auto n = static_cast<Eigen::Index>(d.n_rows());
    const auto G = static_cast<Eigen::Index>(d.n_groups());
    const auto T = static_cast<Eigen::Index>(d.n_periods());
    Matrix X = Matrix::Zero(n, 1 + G + T - 1);
    Vector y(n), w(n);
    for (Eigen::Index r = 0; r < n; ++r) {
      const Cell& c = d.rows()[static_cast<std::size_t>(r)];
      X(r, 0) = c.treatment;
      X(r, 1 + static_cast<Eigen::Index>(c.group)) = 1.0;
      const auto ti = static_cast<Eigen::Index>(*d.period_index(c.time));
      if (ti > 0) X(r, G + ti) = 1.0;
      y[r] = c.outcome;
      w[r] = c.weight;
    }
    const Matrix bread = (X.transpose() * w.asDiagonal() * X).inverse();
    const Vector b = bread * X.transpose() * w.asDiagonal() * y;
    const Vector e = y - X * b;
    Matrix meat = Matrix::Zero(X.cols(), X.cols());
    for (GroupIndex g = 0; g < d.n_groups(); ++g) {
      Vector s = Vector::Zero(X.cols());
      for (Eigen::Index r = 0; r < n; ++r) {
        if (d.rows()[static_cast<std::size_t>(r)].group == g) s += X.row(r).transpose() * w[r] * e[r];
      }
      meat += s * s.transpose();
    }
    const Matrix V = bread * meat * bread;
    EXPECT_NEAR(f.vcov(0, 0), V(0, 0), 1e-9 * V(0, 0));
    EXPECT_EQ(f.n_clusters, d.n_groups());

    FitOptions small;
    small.small_sample_correction = true;
    const double Gd = static_cast<double>(G), N = static_cast<double>(n), K = static_cast<double>(X.cols());
    EXPECT_NEAR(fit_twfe(d, small).vcov(0, 0), V(0, 0) * (Gd / (Gd - 1)) * ((N - 1) / (N - K)), 1e-9 * V(0, 0));
  }
}

TEST(Twfe, CovarianceIsSymmetricPsd) {
  std::mt19937_64 rng(7);
  const Simulation sim = [&] {
    StaggeredParams p = homogeneous_params(20, 8);
    p.noise_sd = 1.0;
    return simulate(p, 3);
  }();
  EventStudySpec spec;
  spec.leads = 3;
  spec.lags = 3;
  spec.binning = Binning::Endpoint;
  const FitResult f = fit_event_study(sim.data, spec).fit;
  EXPECT_LE((f.vcov - f.vcov.transpose()).cwiseAbs().maxCoeff(), 0.0);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(f.vcov);
  EXPECT_GE(eig.eigenvalues().minCoeff(), -1e-12 * eig.eigenvalues().cwiseAbs().maxCoeff());
}

TEST(Lsq, TooFewClusters) {
  const PanelDataset d = fig1();
  RegressionProblem p = panel_problem(d);
  p.X = Matrix::Zero(p.y.size(), 1);
  for (std::size_t r = 0; r < d.n_rows(); ++r) p.X(static_cast<Eigen::Index>(r), 0) = d.rows()[r].treatment;
  p.terms = {"D"};
  std::fill(p.cluster.begin(), p.cluster.end(), 0);
  EXPECT_EQ(code_of([&] { absorb_and_fit(p); }), ErrorCode::TooFewClusters);
}

TEST(Lsq, RankDeficientRegressors) {
  const PanelDataset d = fig1();
  RegressionProblem p = panel_problem(d);
  p.X = Matrix::Zero(p.y.size(), 2);
  for (std::size_t r = 0; r < d.n_rows(); ++r) {
    p.X(static_cast<Eigen::Index>(r), 0) = d.rows()[r].treatment;
    p.X(static_cast<Eigen::Index>(r), 1) = 2.0 * d.rows()[r].treatment;
  }
  p.terms = {"a", "b"};
  EXPECT_EQ(code_of([&] { absorb_and_fit(p); }), ErrorCode::RankDeficient);
}

TEST(Lsq, NotConvergedWhenCapped) {
  std::mt19937_64 rng(8);
  const PanelDataset d = random_panel(rng, 10, 8, 0.35, true);
  FitOptions o;
  o.max_iterations = 1;
  EXPECT_EQ(code_of([&] { fit_twfe(d, o); }), ErrorCode::NotConverged);
}

TEST(Lsq, GroupLinearTrendFactor) {
  // y = a_g + b_g t + g_t + 2 x with x not spanned by the factors
  std::mt19937_64 rng(9);
  std::normal_distribution<double> normal;
  const int G = 5, T = 6;
  const auto n = static_cast<Eigen::Index>(G * T);
  RegressionProblem p;
  p.y.resize(n);
  p.w = Vector::Ones(n);
  p.X.resize(n, 1);
  p.terms = {"x"};
  Factor gf{"group", {}, G, Vector(n)};
  Factor tf{"time", {}, T, std::nullopt};
  Vector a(G), b(G), c(T);
  for (int g = 0; g < G; ++g) a[g] = normal(rng), b[g] = normal(rng);
  for (int t = 0; t < T; ++t) c[t] = normal(rng);
  for (int g = 0; g < G; ++g) {
    for (int t = 0; t < T; ++t) {
      const Eigen::Index r = g * T + t;
      const double x = normal(rng);
      p.X(r, 0) = x;
      (*gf.slope)[r] = t;
      p.y[r] = a[g] + b[g] * t + c[t] + 2.0 * x;
      gf.codes.push_back(g);
      tf.codes.push_back(t);
    }
  }
  p.absorb = {gf, tf};
  EXPECT_NEAR(absorb_and_fit(p).coefficients[0], 2.0, 1e-9);
}

TEST(FirstDifference, TwoPeriodsEqualsTwfe) {
  std::mt19937_64 rng(10);
  std::normal_distribution<double> normal;
  Matrix D(5, 2), Y(5, 2);
  for (int g = 0; g < 5; ++g) {
    D(g, 0) = 0.0;
    D(g, 1) = g % 3;
    Y(g, 0) = normal(rng);
    Y(g, 1) = normal(rng);
  }
  const PanelDataset d = panel_from(D, Y);
  EXPECT_NEAR(fit_first_difference(d).coefficients[0], fit_twfe(d).coefficients[0], 1e-12);
}

TEST(FirstDifference, NoTreatmentChange) {
  Matrix D(2, 3), Y = Matrix::Random(2, 3);
  D << 1, 1, 1, 0, 0, 0;
  EXPECT_EQ(code_of([&] { fit_first_difference(panel_from(D, Y)); }), ErrorCode::CollinearRegressor);
}

TEST(FirstDifference, DenseOracleAndInfluence) {
  std::mt19937_64 rng(11);
  for (int rep = 0; rep < 10; ++rep) {
    const PanelDataset d = random_panel(rng, 7, 6, 0.2, true);
    const FitResult f = fit_first_difference(d);
    // dense: dY on dD and period dummies over consecutive pairs
    std::vector<Eigen::Index> rows_a, rows_b;
    for (GroupIndex g = 0; g < d.n_groups(); ++g) {
      const auto rows = d.group_rows(g);
      for (std::size_t i = 1; i < rows.size(); ++i) {
        if (rows[i].time == rows[i - 1].time + 1) {
          rows_a.push_back(static_cast<Eigen::Index>(&rows[i] - d.rows().data()));
          rows_b.push_back(static_cast<Eigen::Index>(&rows[i - 1] - d.rows().data()));
        }
      }
    }
    const auto m = static_cast<Eigen::Index>(rows_a.size());
    const auto T = static_cast<Eigen::Index>(d.n_periods());
    Matrix X = Matrix::Zero(m, 1 + T);
    Vector y(m), w(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      const Cell& a = d.rows()[static_cast<std::size_t>(rows_a[static_cast<std::size_t>(i)])];
      const Cell& b = d.rows()[static_cast<std::size_t>(rows_b[static_cast<std::size_t>(i)])];
      X(i, 0) = a.treatment - b.treatment;
      X(i, 1 + static_cast<Eigen::Index>(*d.period_index(a.time))) = 1.0;
      y[i] = a.outcome - b.outcome;
      w[i] = a.weight;
    }
    const double beta = dense_wls(X, y, w)[0];
    EXPECT_NEAR(f.coefficients[0], beta, 1e-9 * std::max(1.0, std::abs(beta)));
    double cy = 0.0;
    for (std::size_t r = 0; r < d.n_rows(); ++r) cy += f.influence(static_cast<Eigen::Index>(r), 0) * d.rows()[r].outcome;
    EXPECT_NEAR(cy, beta, 1e-9 * std::max(1.0, std::abs(beta)));
  }
}

TEST(FirstDifference, GroupWithoutConsecutivePeriods) {
  PanelBuilder b;
  b.add("a", 1, 0, 0);
  b.add("a", 2, 1, 1);
  b.add("b", 1, 0, 0);
  b.add("b", 3, 0, 1);
  b.add("c", 2, 0, 0);
  b.add("c", 3, 1, 0);
  EXPECT_EQ(code_of([&] { fit_first_difference(b.build()); }), ErrorCode::WrongShape);
}

TEST(EventStudy, HomogeneousEffectsRecovered) {
  const Simulation sim = simulate(homogeneous_params(12, 8));
  EventStudySpec spec;
  spec.leads = 5;
  spec.lags = 5;
  const EventStudyFit es = fit_event_study(sim.data, spec);
  ASSERT_EQ(es.horizons.size(), es.fit.terms.size());
  for (std::size_t j = 0; j < es.horizons.size(); ++j) {
    const int h = es.horizons[j];
    const double expected = h >= 0 ? h + 1.0 : 0.0;
    EXPECT_NEAR(es.fit.coefficients[static_cast<Eigen::Index>(j)], expected, 1e-9) << es.fit.terms[j];
  }
  EXPECT_TRUE(es.fit.term_index("rel-1") == std::nullopt);
  EXPECT_TRUE(es.fit.term_index("rel0").has_value());
}

TEST(EventStudy, MatchesDenseOracle) {
  std::mt19937_64 rng(12);
  for (int rep = 0; rep < 10; ++rep) {
    const int G = 9, T = 7;
    const Matrix D = random_staggered(rng, G, T);
    Matrix Y = parallel_untreated(rng, G, T);
    std::normal_distribution<double> normal;
    for (int g = 0; g < G; ++g) {
      for (int t = 0; t < T; ++t) Y(g, t) += normal(rng);
    }
    const PanelDataset d = panel_from(D, Y);
    EventStudySpec spec;
    spec.leads = 3;
    spec.lags = 2;
    spec.binning = rep % 2 ? Binning::Endpoint : Binning::None;
    EventStudyFit es;
    try {
      es = fit_event_study(d, spec);
    } catch (const Error& e) {
      ASSERT_EQ(e.code(), ErrorCode::InvalidSpec);
      continue;
    }
    const auto first = first_treated_periods(d);
    Matrix R = Matrix::Zero(static_cast<Eigen::Index>(d.n_rows()), static_cast<Eigen::Index>(es.horizons.size()));
    for (std::size_t r = 0; r < d.n_rows(); ++r) {
      const Cell& c = d.rows()[r];
      if (!first[c.group]) continue;
      int e = c.time - *first[c.group];
      if (spec.binning == Binning::Endpoint) e = std::clamp(e, -spec.leads, spec.lags);
      for (std::size_t j = 0; j < es.horizons.size(); ++j) {
        if (es.horizons[j] == e) R(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = 1.0;
      }
    }
    const Vector b = dense_twfe(d, R);
    for (Eigen::Index j = 0; j < b.size(); ++j) {
      EXPECT_NEAR(es.fit.coefficients[j], b[j], 1e-8 * std::max(1.0, std::abs(b[j])));
    }
  }
}

TEST(EventStudy, ZeroOutcomesGiveZeroCoefficients) {
  std::mt19937_64 rng(13);
  const Matrix D = random_staggered(rng, 8, 6);
  const PanelDataset d = panel_from(D, Matrix::Zero(8, 6));
  EventStudySpec spec;
  spec.leads = 2;
  spec.lags = 2;
  spec.binning = Binning::Endpoint;
  const EventStudyFit es = fit_event_study(d, spec);
  for (Eigen::Index j = 0; j < es.fit.coefficients.size(); ++j) EXPECT_EQ(es.fit.coefficients[j], 0.0);
}

TEST(EventStudy, EndpointBinningCoincidesWhenNoFartherLags) {
  StaggeredParams p = homogeneous_params(12, 10);
  p.cohort_shares = {{8, 0.25}, {9, 0.25}, {10, 0.25}};
  p.noise_sd = 1.0;
  const Simulation sim = simulate(p, 4);
  EventStudySpec plain;
  plain.leads = 9;
  plain.lags = 2;
  EventStudySpec binned = plain;
  binned.binning = Binning::Endpoint;
  const EventStudyFit a = fit_event_study(sim.data, plain);
  const EventStudyFit b = fit_event_study(sim.data, binned);
  EXPECT_TRUE(b.fit.term_index("rel>=2").has_value());
  EXPECT_TRUE(b.fit.term_index("rel<=-9").has_value());
  ASSERT_EQ(a.fit.coefficients.size(), b.fit.coefficients.size());
  for (Eigen::Index j = 0; j < a.fit.coefficients.size(); ++j) {
    EXPECT_NEAR(a.fit.coefficients[j], b.fit.coefficients[j], 1e-10);
  }
}

TEST(EventStudy, EmptyBinsAreReported) {
  const Simulation sim = simulate(homogeneous_params(12, 8));
  EventStudySpec spec;
  spec.leads = 9;
  spec.lags = 1;
  const EventStudyFit es = fit_event_study(sim.data, spec);
  bool saw = false;
  for (const auto& d : es.fit.dropped) saw = saw || (d.term == "rel-9" && d.reason == "empty");
  EXPECT_TRUE(saw);
  EXPECT_FALSE(es.fit.term_index("rel-9").has_value());
}

TEST(EventStudy, CollinearBinsDroppedWithoutNeverTreated) {
  StaggeredParams p = homogeneous_params(12, 8);
  p.cohort_shares = {{3, 0.5}, {6, 0.5}};
  const Simulation sim = simulate(p);
  EventStudySpec spec;
  spec.leads = 5;
  spec.lags = 5;
  const EventStudyFit es = fit_event_study(sim.data, spec);
  bool saw = false;
  for (const auto& d : es.fit.dropped) saw = saw || d.reason == "collinear";
  EXPECT_TRUE(saw);
}

TEST(EventStudy, Preconditions) {
  Matrix D(2, 3), Y = Matrix::Zero(2, 3);
  D << 0, 1, 0, 0, 0, 0;
  EventStudySpec spec;
  spec.lags = 1;
  EXPECT_EQ(code_of([&] { fit_event_study(panel_from(D, Y), spec); }), ErrorCode::NotBinaryStaggered);

  Matrix D2(2, 3);
  D2 << 1, 1, 1, 0, 0, 0;
  EXPECT_EQ(code_of([&] { fit_event_study(panel_from(D2, Y), spec); }), ErrorCode::InvalidSpec);
  spec.leads = -1;
  EXPECT_EQ(code_of([&] { fit_event_study(fig1(), spec); }), ErrorCode::InvalidSpec);
}

TEST(EventStudy, BinOf) {
  const Simulation sim = simulate(homogeneous_params(12, 8));
  EventStudySpec spec;
  spec.leads = 2;
  spec.lags = 2;
  spec.binning = Binning::Endpoint;
  const EventStudyFit es = fit_event_study(sim.data, spec);
  EXPECT_EQ(es.bin_of(5), 2);
  EXPECT_EQ(es.bin_of(-5), -2);
  EXPECT_EQ(es.bin_of(-1), std::nullopt);
  EXPECT_EQ(es.bin_of(1), 1);
}
