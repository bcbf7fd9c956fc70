#pragma once

#include <compare>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace hetdid {

using Period = int;
using GroupIndex = std::size_t;

enum class WeightMode { Uniform, Supplied };

/// One (group, period) observation of a long-format panel.
struct Cell {
  GroupIndex group = 0;
  Period time = 0;
  double treatment = 0.0;
  double outcome = 0.0;
  double weight = 1.0;  // population N_{g,t}
  std::optional<double> proxy;
};

class PanelBuilder;

/// Validated long-format panel. Immutable once built; rows are sorted by
/// (group, time) so each group's rows are contiguous.
class PanelDataset {
 public:
  std::span<const Cell> rows() const noexcept { return rows_; }
  std::size_t n_rows() const noexcept { return rows_.size(); }
  std::size_t n_groups() const noexcept { return groups_.size(); }
  std::size_t n_periods() const noexcept { return periods_.size(); }

  std::span<const std::string> groups() const noexcept { return groups_; }
  const std::string& group_label(GroupIndex g) const { return groups_.at(g); }
  std::optional<GroupIndex> group_index(std::string_view label) const;

  std::span<const Period> periods() const noexcept { return periods_; }
  Period first_period() const { return periods_.front(); }
  Period last_period() const { return periods_.back(); }
  std::optional<std::size_t> period_index(Period t) const;
  bool has_period(Period t) const { return period_index(t).has_value(); }

  /// Rows of one group in time order.
  std::span<const Cell> group_rows(GroupIndex g) const;

  /// Row position of cell (g, t) in rows(), if observed.
  std::optional<std::size_t> row_of(GroupIndex g, Period t) const;
  const Cell* find(GroupIndex g, Period t) const;

  WeightMode weight_mode() const noexcept { return weight_mode_; }
  bool has_proxy() const noexcept { return has_proxy_; }
  bool is_balanced() const noexcept { return rows_.size() == groups_.size() * periods_.size(); }

  /// Same design with outcomes replaced row by row (rows() order).
  PanelDataset with_outcomes(std::span<const double> outcomes) const;

 private:
  friend class PanelBuilder;
  PanelDataset() = default;

  std::vector<Cell> rows_;
  std::vector<std::string> groups_;
  std::vector<Period> periods_;
  std::vector<std::size_t> group_offsets_;  // n_groups + 1
  std::vector<std::ptrdiff_t> grid_;        // n_groups x n_periods, -1 if missing
  WeightMode weight_mode_ = WeightMode::Uniform;
  bool has_proxy_ = false;
};

enum class ShapeCheck {
  Estimable,  // at least two groups and two periods
  None,
};

/// Accumulates raw observations keyed by group label and validates them.
/// Group order is numeric when every label is an integer, lexicographic
/// otherwise.
class PanelBuilder {
 public:
  void add(std::string_view group, Period time, double treatment, double outcome,
           std::optional<double> weight = std::nullopt,
           std::optional<double> proxy = std::nullopt, std::size_t source_line = 0);

  void reserve(std::size_t n) { pending_.reserve(n); }

  PanelDataset build(ShapeCheck check = ShapeCheck::Estimable) const;

 private:
  struct Pending {
    std::string group;
    Period time;
    double treatment;
    double outcome;
    std::optional<double> weight;
    std::optional<double> proxy;
    std::size_t line;
  };
  std::vector<Pending> pending_;
};

/// First period at which a group's treatment departs from its baseline.
/// Never-switchers hold an unreachable date that compares greater than every
/// real period.
class SwitchDate {
 public:
  static SwitchDate never() noexcept { return SwitchDate(); }
  explicit SwitchDate(Period t) noexcept : period_(t) {}

  bool is_never() const noexcept { return !period_.has_value(); }
  Period period() const { return period_.value(); }

  friend bool operator==(const SwitchDate&, const SwitchDate&) = default;
  friend std::strong_ordering operator<=>(const SwitchDate& a, const SwitchDate& b) noexcept {
    if (a.is_never() || b.is_never()) {
      return static_cast<int>(a.is_never()) <=> static_cast<int>(b.is_never());
    }
    return *a.period_ <=> *b.period_;
  }
  friend bool operator>(const SwitchDate& a, Period t) noexcept {
    return a.is_never() || *a.period_ > t;
  }
  friend bool operator<=(const SwitchDate& a, Period t) noexcept { return !(a > t); }

 private:
  SwitchDate() = default;
  std::optional<Period> period_;
};

struct DesignInfo {
  std::vector<SwitchDate> first_switch;     // F_g, per group
  std::vector<double> baseline_treatment;  // D_{g,1}: first observed period's value
  bool is_binary = false;
  bool is_staggered = false;
  std::map<Period, std::vector<GroupIndex>> cohorts;  // switchers only
  std::optional<Period> last_untreated_period;        // U
  std::vector<GroupIndex> late_entrants;              // first observed after the panel's first period

  bool is_binary_staggered() const noexcept { return is_binary && is_staggered; }
};

DesignInfo derive_design(const PanelDataset& data);

struct BalanceReport {
  bool balanced = true;
  std::vector<std::pair<std::string, Period>> missing;
};

BalanceReport balance_report(const PanelDataset& data);

/// Maps logical fields to CSV header names. Weight and proxy columns are
/// used when present; the *_required flags turn their absence into an error.
struct ColumnMap {
  std::string group = "group";
  std::string time = "time";
  std::string treatment = "treatment";
  std::string outcome = "outcome";
  std::string weight = "weight";
  std::string proxy = "proxy";
  bool weight_required = false;
  bool proxy_required = false;
};

PanelDataset load_csv(const std::filesystem::path& path, const ColumnMap& columns = {});
PanelDataset read_csv(std::istream& in, const ColumnMap& columns = {},
                      std::string_view source = "<stream>");

/// Canonical CSV: group,time,treatment,outcome[,weight][,proxy]; numbers in
/// shortest round-trip form.
void write_csv(const PanelDataset& data, std::ostream& out);

/// Shortest decimal text that parses back to exactly `value`.
std::string format_number(double value);

}  // namespace hetdid
