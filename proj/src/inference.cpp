#include "hetdid/inference.hpp"

#include <atomic>
#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include "hetdid/error.hpp"

namespace hetdid {

int default_thread_count() {
  if (const char* env = std::getenv("HETDID_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<int>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

double normal_critical_value(double ci_level) {
  if (!(ci_level > 0.0 && ci_level < 1.0)) fail(ErrorCode::InvalidSpec, "confidence level must lie in (0, 1)");
  return boost::math::quantile(boost::math::normal(), 0.5 + 0.5 * ci_level);
}

std::vector<GroupIndex> bootstrap_draw(std::size_t n_groups, std::uint64_t seed, std::uint64_t replicate) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(replicate), static_cast<std::uint32_t>(replicate >> 32)};
  std::mt19937_64 engine(seq);
  std::uniform_int_distribution<std::size_t> pick(0, n_groups - 1);
  std::vector<GroupIndex> out(n_groups);
  for (auto& g : out) g = pick(engine);
  return out;
}

PanelDataset resample_groups(const PanelDataset& data, const std::vector<GroupIndex>& picks) {
  PanelBuilder builder;
  builder.reserve(picks.size() * data.n_periods());
  const bool weighted = data.weight_mode() == WeightMode::Supplied;
  const std::size_t width = std::to_string(picks.empty() ? 0 : picks.size() - 1).size();
  for (std::size_t k = 0; k < picks.size(); ++k) {
    std::string position = std::to_string(k);
    position.insert(0, width - position.size(), '0');
    const std::string label = position + "#" + data.group_label(picks[k]);
    for (const Cell& c : data.group_rows(picks[k])) {
      builder.add(label, c.time, c.treatment, c.outcome, weighted ? std::optional<double>(c.weight) : std::nullopt,
                  c.proxy);
    }
  }
  return builder.build(ShapeCheck::None);
}

BootstrapResult cluster_bootstrap(const PanelDataset& data, const Statistic& statistic, const BootstrapSpec& spec) {
  if (spec.replications < 2) fail(ErrorCode::InvalidSpec, "the bootstrap needs at least 2 replications");
  if (data.n_groups() < 2) fail(ErrorCode::TooFewClusters, "the cluster bootstrap needs at least 2 groups");

  BootstrapResult out;
  out.requested = spec.replications;
  out.z = normal_critical_value(spec.ci_level);
  out.point = statistic(data);
  const Eigen::Index k = out.point.size();
  if (spec.replications < 50) {
    out.warnings.push_back("only " + std::to_string(spec.replications) +
                           " bootstrap replications; at least 50 are recommended");
  }

  const int B = spec.replications;
  Matrix all(B, k);
  std::vector<char> ok(static_cast<std::size_t>(B), 0);
  std::atomic<int> next{0};
  std::exception_ptr fatal;
  std::mutex fatal_mutex;

  auto worker = [&] {
    for (int b = next++; b < B; b = next++) {
      try {
        const PanelDataset sample =
            resample_groups(data, bootstrap_draw(data.n_groups(), spec.seed, static_cast<std::uint64_t>(b)));
        const Vector v = statistic(sample);
        if (v.size() != k) {
          std::lock_guard<std::mutex> lock(fatal_mutex);
          if (!fatal) {
            fatal = std::make_exception_ptr(
                Error(ErrorCode::InvalidSpec, "statistic changed length across bootstrap replicates"));
          }
          continue;
        }
        all.row(b) = v.transpose();
        ok[static_cast<std::size_t>(b)] = 1;
      } catch (const Error&) {
        // dropped and counted below
      } catch (...) {
        std::lock_guard<std::mutex> lock(fatal_mutex);
        if (!fatal) fatal = std::current_exception();
      }
    }
  };

  const int n_threads = std::clamp(spec.threads > 0 ? spec.threads : default_thread_count(), 1, B);
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (fatal) std::rethrow_exception(fatal);

  int good = 0;
  for (char c : ok) good += c;
  out.failed = B - good;
  if (good == 0) fail(ErrorCode::AllReplicatesFailed, "the estimator failed on every bootstrap replicate");
  out.draws.resize(good, k);
  for (int b = 0, r = 0; b < B; ++b) {
    if (ok[static_cast<std::size_t>(b)]) out.draws.row(r++) = all.row(b);
  }
  if (out.failed > 0.2 * B) {
    std::ostringstream msg;
    msg << out.failed << " of " << B << " bootstrap replicates failed";
    out.warnings.push_back(msg.str());
  }

  out.se = Vector::Constant(k, std::numeric_limits<double>::quiet_NaN());
  out.ci_lower = out.se;
  out.ci_upper = out.se;
  for (Eigen::Index j = 0; j < k; ++j) {
    if (!std::isfinite(out.point[j])) continue;
    double sum = 0.0;
    int n = 0;
    for (Eigen::Index r = 0; r < out.draws.rows(); ++r) {
      if (std::isfinite(out.draws(r, j))) {
        sum += out.draws(r, j);
        ++n;
      }
    }
    if (n < 2) continue;
    const double mean = sum / n;
    double ss = 0.0;
    for (Eigen::Index r = 0; r < out.draws.rows(); ++r) {
      if (std::isfinite(out.draws(r, j))) ss += (out.draws(r, j) - mean) * (out.draws(r, j) - mean);
    }
    out.se[j] = std::sqrt(ss / (n - 1));
    out.ci_lower[j] = out.point[j] - out.z * out.se[j];
    out.ci_upper[j] = out.point[j] + out.z * out.se[j];
  }
  return out;
}

JointTest joint_placebo_test(const Vector& placebos, const Matrix& draws) {
  const Eigen::Index k = placebos.size();
  if (k == 0) fail(ErrorCode::EmptySelection, "no placebo to test");
  if (draws.cols() != k) fail(ErrorCode::InvalidSpec, "placebo draws have the wrong number of columns");
  std::vector<Eigen::Index> rows;
  for (Eigen::Index r = 0; r < draws.rows(); ++r) {
    if (draws.row(r).array().isFinite().all()) rows.push_back(r);
  }
  if (rows.size() < 2) fail(ErrorCode::DegenerateCovariance, "fewer than two complete placebo replicates");
  Matrix X(static_cast<Eigen::Index>(rows.size()), k);
  for (std::size_t i = 0; i < rows.size(); ++i) X.row(static_cast<Eigen::Index>(i)) = draws.row(rows[i]);
  const Matrix centered = X.rowwise() - X.colwise().mean();
  const Matrix S = centered.transpose() * centered / static_cast<double>(X.rows() - 1);

  Eigen::SelfAdjointEigenSolver<Matrix> eig(S);
  const Vector& lambda = eig.eigenvalues();
  const double top = lambda.cwiseAbs().maxCoeff();
  const double cutoff = top * 1e-10 * static_cast<double>(k);
  JointTest out;
  for (Eigen::Index i = 0; i < k; ++i) {
    if (top > 0.0 && lambda[i] > cutoff) {
      const double u = eig.eigenvectors().col(i).dot(placebos);
      out.statistic += u * u / lambda[i];
      ++out.rank;
    }
  }
  if (out.rank == 0) fail(ErrorCode::DegenerateCovariance, "placebo replicates have zero variance");
  out.p_value = boost::math::cdf(boost::math::complement(boost::math::chi_squared(out.rank), out.statistic));
  return out;
}

namespace {

Vector flatten(const EventStudyResult& r) {
  const auto n = static_cast<Eigen::Index>(r.effects.size() + r.placebos.size() + 1);
  Vector v = Vector::Constant(n, std::numeric_limits<double>::quiet_NaN());
  Eigen::Index i = 0;
  for (const auto& h : r.effects) {
    if (h.estimate) v[i] = *h.estimate;
    ++i;
  }
  for (const auto& h : r.placebos) {
    if (h.estimate) v[i] = *h.estimate;
    ++i;
  }
  if (r.normalized_effect) v[i] = r.normalized_effect->estimate;
  return v;
}

void attach(HorizonEstimate& h, const BootstrapResult& b, Eigen::Index i) {
  if (!h.estimate || !std::isfinite(b.se[i])) return;
  h.se = b.se[i];
  h.ci_lower = b.ci_lower[i];
  h.ci_upper = b.ci_upper[i];
}

}  // namespace

EventStudyResult bootstrap_event_study(const PanelDataset& data,
                                       const std::function<EventStudyResult(const PanelDataset&)>& estimator,
                                       const BootstrapSpec& spec, BootstrapResult* raw) {
  EventStudyResult result = estimator(data);
  const Statistic stat = [&](const PanelDataset& d) {
    return &d == &data ? flatten(result) : flatten(estimator(d));
  };
  BootstrapResult b = cluster_bootstrap(data, stat, spec);

  Eigen::Index i = 0;
  for (auto& h : result.effects) attach(h, b, i++);
  const Eigen::Index placebo_start = i;
  for (auto& h : result.placebos) attach(h, b, i++);
  if (result.normalized_effect && std::isfinite(b.se[i])) {
    result.normalized_effect->se = b.se[i];
    result.normalized_effect->ci_lower = b.ci_lower[i];
    result.normalized_effect->ci_upper = b.ci_upper[i];
  }

  std::vector<Eigen::Index> cols;
  for (std::size_t p = 0; p < result.placebos.size(); ++p) {
    if (result.placebos[p].estimate) cols.push_back(placebo_start + static_cast<Eigen::Index>(p));
  }
  if (!cols.empty()) {
    Vector point(static_cast<Eigen::Index>(cols.size()));
    Matrix draws(b.draws.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c) {
      point[static_cast<Eigen::Index>(c)] = b.point[cols[c]];
      draws.col(static_cast<Eigen::Index>(c)) = b.draws.col(cols[c]);
    }
    try {
      result.joint_placebo = joint_placebo_test(point, draws);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::DegenerateCovariance) throw;
      b.warnings.push_back(std::string("joint placebo test skipped: ") + e.what());
    }
  }
  if (raw) *raw = std::move(b);
  return result;
}

}  // namespace hetdid
