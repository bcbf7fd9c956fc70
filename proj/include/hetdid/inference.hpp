#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "hetdid/dynamic_estimators.hpp"
#include "hetdid/lsq.hpp"
#include "hetdid/panel.hpp"

namespace hetdid {

struct BootstrapSpec {
  int replications = 200;
  std::uint64_t seed = 0;
  double ci_level = 0.95;
  int threads = 0;  // 0: HETDID_THREADS, else hardware concurrency
};

/// Statistic evaluated on the original and on every resampled panel. NaN
/// entries mark components that are unavailable in that replicate.
using Statistic = std::function<Vector(const PanelDataset&)>;

struct BootstrapResult {
  Vector point;
  Vector se;
  Vector ci_lower;
  Vector ci_upper;
  Matrix draws;  // one row per successful replicate, in replicate order
  int requested = 0;
  int failed = 0;
  double z = 0.0;
  std::vector<std::string> warnings;

  int succeeded() const { return static_cast<int>(draws.rows()); }
};

/// Pairs bootstrap over groups. Replicate b draws with an engine seeded from
/// (seed, b) only, so results do not depend on the thread count. Replicates
/// where the statistic throws are dropped and counted.
BootstrapResult cluster_bootstrap(const PanelDataset& data, const Statistic& statistic, const BootstrapSpec& spec);

/// Groups drawn for replicate `replicate`; exposed for tests.
std::vector<GroupIndex> bootstrap_draw(std::size_t n_groups, std::uint64_t seed, std::uint64_t replicate);

/// Panel made of the drawn groups. The k-th copy is relabelled "k#label" with
/// k zero-padded, so group order follows the draw and not the labels.
PanelDataset resample_groups(const PanelDataset& data, const std::vector<GroupIndex>& picks);

/// Wald statistic p' S^+ p with S the replicate covariance of the placebo
/// draws (pseudo-inverse), chi-square with rank degrees of freedom.
JointTest joint_placebo_test(const Vector& placebos, const Matrix& draws);

int default_thread_count();

/// Quantile of the standard normal for a two-sided interval.
double normal_critical_value(double ci_level);

/// Bootstraps an event-study estimator and fills se / CI on its effects,
/// placebos and normalized effect, plus the joint placebo test when at least
/// one placebo is available.
EventStudyResult bootstrap_event_study(const PanelDataset& data,
                                       const std::function<EventStudyResult(const PanelDataset&)>& estimator,
                                       const BootstrapSpec& spec, BootstrapResult* raw = nullptr);

}  // namespace hetdid
