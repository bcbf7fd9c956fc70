#pragma once

#include <Eigen/Dense>
#include <random>
#include <string>
#include <vector>

#include "hetdid/panel.hpp"
#include "hetdid/sim.hpp"

namespace hetdid::testing {

// Balanced panel from G x T matrices; groups are labelled 1..G, periods 1..T.
inline PanelDataset panel_from(const Matrix& D, const Matrix& Y, const Matrix* N = nullptr) {
  PanelBuilder b;
  for (Eigen::Index g = 0; g < D.rows(); ++g) {
    for (Eigen::Index t = 0; t < D.cols(); ++t) {
      b.add(std::to_string(g + 1), static_cast<Period>(t + 1), D(g, t), Y(g, t),
            N ? std::optional<double>((*N)(g, t)) : std::nullopt);
    }
  }
  return b.build();
}

// Weighted least squares by dense QR on explicit dummies. Columns of X come
// first in the returned vector.
inline Vector dense_wls(const Matrix& X, const Vector& y, const Vector& w) {
  const Vector sw = w.array().sqrt();
  const Matrix A = sw.asDiagonal() * X;
  const Vector b = sw.asDiagonal() * y;
  return A.colPivHouseholderQr().solve(b);
}

// Regression of Y on `regressors` plus group and period dummies, one row per
// panel cell.
inline Vector dense_twfe(const PanelDataset& data, const Matrix& regressors) {
  const auto n = static_cast<Eigen::Index>(data.n_rows());
  const auto k = regressors.cols();
  const auto G = static_cast<Eigen::Index>(data.n_groups());
  const auto T = static_cast<Eigen::Index>(data.n_periods());
  Matrix X = Matrix::Zero(n, k + G + T - 1);
  Vector y(n), w(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const Cell& c = data.rows()[static_cast<std::size_t>(r)];
    X.block(r, 0, 1, k) = regressors.row(r);
    X(r, k + static_cast<Eigen::Index>(c.group)) = 1.0;
    const auto ti = static_cast<Eigen::Index>(*data.period_index(c.time));
    if (ti > 0) X(r, k + G + ti - 1) = 1.0;
    y[r] = c.outcome;
    w[r] = c.weight;
  }
  return dense_wls(X, y, w).head(k);
}

inline double dense_beta_fe(const PanelDataset& data) {
  Matrix D(static_cast<Eigen::Index>(data.n_rows()), 1);
  for (std::size_t r = 0; r < data.n_rows(); ++r) D(static_cast<Eigen::Index>(r), 0) = data.rows()[r].treatment;
  return dense_twfe(data, D)[0];
}

// Random binary staggered design: each group gets a first treated period in
// [2, T] or never; optionally always-treated groups.
inline Matrix random_staggered(std::mt19937_64& rng, int G, int T, bool allow_always = false) {
  Matrix D = Matrix::Zero(G, T);
  std::uniform_int_distribution<int> pick(allow_always ? 1 : 2, T + 1);
  for (int g = 0; g < G; ++g) {
    const int f = pick(rng);
    for (int t = f; t <= T; ++t) D(g, t - 1) = 1.0;
  }
  // keep at least one switcher and one cell untreated at the end
  D.row(0).setZero();
  for (int t = T / 2 + 1; t <= T; ++t) D(G - 1, t - 1) = 1.0;
  return D;
}

// Y(0) = alpha_g + gamma_t with standard normal draws.
inline Matrix parallel_untreated(std::mt19937_64& rng, int G, int T) {
  std::normal_distribution<double> normal;
  Vector a(G), b(T);
  for (int g = 0; g < G; ++g) a[g] = normal(rng);
  for (int t = 0; t < T; ++t) b[t] = normal(rng);
  Matrix Y(G, T);
  for (int g = 0; g < G; ++g) {
    for (int t = 0; t < T; ++t) Y(g, t) = a[g] + b[t];
  }
  return Y;
}

inline StaggeredParams homogeneous_params(int G = 12, int T = 8) {
  StaggeredParams p;
  p.n_groups = G;
  p.n_periods = T;
  p.cohort_shares = {{3, 0.25}, {5, 0.25}, {6, 0.25}};
  p.intercept = 1.0;
  p.horizon_slope = 1.0;
  return p;
}

inline Simulation simulate(const StaggeredParams& p, std::uint64_t seed = 1) {
  DgpSpec spec;
  spec.kind = DgpKind::Staggered;
  spec.staggered = p;
  spec.seed = seed;
  return generate(spec);
}

// Group 1 (row 0) treated from period ts on, every other group untreated.
inline Matrix single_treated(int G, int T, int ts) {
  Matrix D = Matrix::Zero(G, T);
  for (int t = ts; t <= T; ++t) D(0, t - 1) = 1.0;
  return D;
}

inline double mean_over(const Matrix& Y, int g, int from, int to) {
  double s = 0;
  for (int k = from; k <= to; ++k) s += Y(g, k - 1);
  return s / (to - from + 1);
}

// Imputation closed form for the single treated group at ts + l.
inline double bjs_closed_form(const Matrix& Y, int ts, int l) {
  const int G = static_cast<int>(Y.rows());
  double others = 0;
  for (int g = 1; g < G; ++g) others += Y(g, ts + l - 1) - mean_over(Y, g, 1, ts - 1);
  return Y(0, ts + l - 1) - mean_over(Y, 0, 1, ts - 1) - others / (G - 1);
}

// Last-pre-period baseline version.
inline double cs_closed_form(const Matrix& Y, int ts, int l) {
  const int G = static_cast<int>(Y.rows());
  double others = 0;
  for (int g = 1; g < G; ++g) others += Y(g, ts + l - 1) - Y(g, ts - 2);
  return Y(0, ts + l - 1) - Y(0, ts - 2) - others / (G - 1);
}

}  // namespace hetdid::testing
