#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "hetdid/error.hpp"

namespace hetdid {

/// Categorical factor to absorb. With `slope` set, each level absorbs its own
/// intercept and its own slope on that covariate (e.g. group-specific linear
/// trends).
template <typename Scalar>
struct BasicFactor {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  std::string name;
  std::vector<Eigen::Index> codes;  // one per observation, in [0, levels)
  Eigen::Index levels = 0;
  std::optional<Vector> slope;
};

/// Weighted alternating-projection demeaning over a set of factors.
///
/// Each sweep projects every factor out in turn; sweeps repeat until the
/// largest correction in a sweep is <= tolerance * scale of the column, or the
/// iteration cap is hit (NotConverged). Balanced two-factor designs with equal
/// weights are detected and finish after a single exact sweep.
template <typename Scalar>
class BasicAbsorber {
 public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Factor = BasicFactor<Scalar>;

  struct Options {
    Scalar tolerance = Scalar(1e-12);
    int max_iterations = 10000;
    bool reverse_order = false;
  };

  BasicAbsorber(std::vector<Factor> factors, Vector weights, Options options = {})
      : factors_(std::move(factors)), w_(std::move(weights)), options_(options) {
    const Eigen::Index n = w_.size();
    if (options_.reverse_order) std::reverse(factors_.begin(), factors_.end());
    for (const Factor& f : factors_) {
      if (static_cast<Eigen::Index>(f.codes.size()) != n) {
        fail(ErrorCode::InvalidSpec, "factor '" + f.name + "' has wrong length");
      }
      if (f.slope && f.slope->size() != n) {
        fail(ErrorCode::InvalidSpec, "slope covariate of '" + f.name + "' has wrong length");
      }
      Moments m;
      m.s0 = Vector::Zero(f.levels);
      m.s1 = Vector::Zero(f.levels);
      m.s2 = Vector::Zero(f.levels);
      for (Eigen::Index r = 0; r < n; ++r) {
        const Eigen::Index l = f.codes[r];
        if (l < 0 || l >= f.levels) fail(ErrorCode::InvalidSpec, "factor '" + f.name + "' code out of range");
        m.s0[l] += w_[r];
        if (f.slope) {
          const Scalar z = (*f.slope)[r];
          m.s1[l] += w_[r] * z;
          m.s2[l] += w_[r] * z * z;
        }
      }
      moments_.push_back(std::move(m));
    }
    exact_single_sweep_ = detect_balanced_pair();
  }

  bool exact_single_sweep() const noexcept { return exact_single_sweep_; }
  std::size_t n_factors() const noexcept { return factors_.size(); }

  /// Demeans every column of `m` in place; returns the largest sweep count used.
  template <typename Derived>
  int demean(Eigen::MatrixBase<Derived>& m) const {
    int worst = 0;
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      auto col = m.col(j);
      worst = std::max(worst, demean_column(col));
    }
    return worst;
  }

  /// Per-factor level effects accumulated while demeaning: the absorbed fit
  /// of observation r is sum_k intercept[k][code] + slope[k][code] * z_k[r].
  struct Effects {
    std::vector<Vector> intercept;
    std::vector<Vector> slope;  // empty vector for plain factors
  };

  /// Demeans `x` in place and returns the effects that were removed.
  Effects demean_recording(Vector& x) const {
    Effects fx;
    for (const Factor& f : factors_) {
      fx.intercept.push_back(Vector::Zero(f.levels));
      fx.slope.push_back(f.slope ? Vector::Zero(f.levels) : Vector());
    }
    demean_column(x, &fx);
    if (options_.reverse_order) {
      std::reverse(fx.intercept.begin(), fx.intercept.end());
      std::reverse(fx.slope.begin(), fx.slope.end());
    }
    return fx;
  }

  /// Degrees of freedom used by the absorbed effects (connected-design count).
  Eigen::Index absorbed_dof() const {
    Eigen::Index dof = 0;
    for (const Factor& f : factors_) dof += f.slope ? 2 * f.levels : f.levels;
    if (factors_.size() > 1) dof -= static_cast<Eigen::Index>(factors_.size()) - 1;
    return dof;
  }

 private:
  struct Moments {
    Vector s0, s1, s2;
  };

  bool detect_balanced_pair() const {
    if (factors_.size() == 1) return true;
    if (factors_.size() != 2) return false;
    if (factors_[0].slope || factors_[1].slope) return false;
    const Eigen::Index n = w_.size();
    if (n == 0 || n != factors_[0].levels * factors_[1].levels) return false;
    if ((w_.array() != w_[0]).any()) return false;
    std::vector<char> seen(static_cast<std::size_t>(n), 0);
    for (Eigen::Index r = 0; r < n; ++r) {
      const auto key = static_cast<std::size_t>(factors_[0].codes[r] * factors_[1].levels + factors_[1].codes[r]);
      if (seen[key]) return false;
      seen[key] = 1;
    }
    return true;
  }

  template <typename Col>
  Scalar project_out(std::size_t k, Col& x, Effects* fx) const {
    const Factor& f = factors_[k];
    const Moments& mom = moments_[k];
    const Eigen::Index n = x.size();
    Scalar largest = 0;
    if (!f.slope) {
      Vector acc = Vector::Zero(f.levels);
      for (Eigen::Index r = 0; r < n; ++r) acc[f.codes[r]] += w_[r] * x[r];
      for (Eigen::Index l = 0; l < f.levels; ++l) {
        acc[l] = mom.s0[l] > 0 ? acc[l] / mom.s0[l] : Scalar(0);
        largest = std::max(largest, std::abs(acc[l]));
      }
      if (fx) fx->intercept[k] += acc;
      for (Eigen::Index r = 0; r < n; ++r) x[r] -= acc[f.codes[r]];
      return largest;
    }
    const Vector& z = *f.slope;
    Vector t0 = Vector::Zero(f.levels), t1 = Vector::Zero(f.levels);
    for (Eigen::Index r = 0; r < n; ++r) {
      t0[f.codes[r]] += w_[r] * x[r];
      t1[f.codes[r]] += w_[r] * z[r] * x[r];
    }
    Vector a(f.levels), b(f.levels);
    for (Eigen::Index l = 0; l < f.levels; ++l) {
      const Scalar s0 = mom.s0[l], s1 = mom.s1[l], s2 = mom.s2[l];
      const Scalar det = s0 * s2 - s1 * s1;
      if (s0 <= 0) {
        a[l] = b[l] = 0;
      } else if (det <= Scalar(1e-12) * s0 * s2 || s2 <= 0) {
        // a single distinct covariate value: intercept only
        a[l] = t0[l] / s0;
        b[l] = 0;
      } else {
        a[l] = (s2 * t0[l] - s1 * t1[l]) / det;
        b[l] = (s0 * t1[l] - s1 * t0[l]) / det;
      }
    }
    if (fx) {
      fx->intercept[k] += a;
      fx->slope[k] += b;
    }
    for (Eigen::Index r = 0; r < n; ++r) {
      const Scalar fit = a[f.codes[r]] + b[f.codes[r]] * z[r];
      largest = std::max(largest, std::abs(fit));
      x[r] -= fit;
    }
    return largest;
  }

  template <typename Col>
  int demean_column(Col& x, Effects* fx = nullptr) const {
    if (factors_.empty() || x.size() == 0) return 0;
    const Scalar scale = std::max(x.cwiseAbs().maxCoeff(), std::numeric_limits<Scalar>::min());
    const Scalar threshold = options_.tolerance * scale;
    if (exact_single_sweep_) {
      for (std::size_t k = 0; k < factors_.size(); ++k) project_out(k, x, fx);
      return 1;
    }
    for (int it = 1; it <= options_.max_iterations; ++it) {
      Scalar change = 0;
      for (std::size_t k = 0; k < factors_.size(); ++k) change = std::max(change, project_out(k, x, fx));
      if (change <= threshold) return it;
    }
    fail(ErrorCode::NotConverged, "fixed-effect demeaning did not converge within " +
                                      std::to_string(options_.max_iterations) + " sweeps");
  }

  std::vector<Factor> factors_;
  std::vector<Moments> moments_;
  Vector w_;
  Options options_;
  bool exact_single_sweep_ = false;
};

using Factor = BasicFactor<double>;
using Absorber = BasicAbsorber<double>;

}  // namespace hetdid
