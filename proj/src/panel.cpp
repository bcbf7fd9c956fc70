#include "hetdid/panel.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include "hetdid/error.hpp"

namespace hetdid {

namespace {

bool parse_integer(std::string_view s, long long& out) {
  if (s.empty()) return false;
  const char* first = s.data();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

bool parse_real(std::string_view s, double& out) {
  if (s.empty()) return false;
  const char* first = s.data();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

// RFC-4180-ish field splitting; quoted fields may contain commas and "".
std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> fields;
  std::string current;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          current.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        current.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.emplace_back(trim(current));
      current.clear();
    } else {
      current.push_back(ch);
    }
  }
  fields.emplace_back(trim(current));
  return fields;
}

std::string quote_if_needed(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out += '"';
  return out;
}

std::string where(std::string_view source, std::size_t line) {
  std::ostringstream os;
  os << source << ":" << line;
  return os.str();
}

}  // namespace

std::string format_number(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

// ---------------------------------------------------------------------------
// PanelDataset

std::optional<GroupIndex> PanelDataset::group_index(std::string_view label) const {
  for (GroupIndex g = 0; g < groups_.size(); ++g) {
    if (groups_[g] == label) return g;
  }
  return std::nullopt;
}

std::optional<std::size_t> PanelDataset::period_index(Period t) const {
  auto it = std::lower_bound(periods_.begin(), periods_.end(), t);
  if (it == periods_.end() || *it != t) return std::nullopt;
  return static_cast<std::size_t>(it - periods_.begin());
}

std::span<const Cell> PanelDataset::group_rows(GroupIndex g) const {
  return std::span<const Cell>(rows_).subspan(group_offsets_.at(g),
                                              group_offsets_[g + 1] - group_offsets_[g]);
}

std::optional<std::size_t> PanelDataset::row_of(GroupIndex g, Period t) const {
  const auto p = period_index(t);
  if (!p || g >= groups_.size()) return std::nullopt;
  const std::ptrdiff_t r = grid_[g * periods_.size() + *p];
  if (r < 0) return std::nullopt;
  return static_cast<std::size_t>(r);
}

const Cell* PanelDataset::find(GroupIndex g, Period t) const {
  const auto r = row_of(g, t);
  return r ? &rows_[*r] : nullptr;
}

PanelDataset PanelDataset::with_outcomes(std::span<const double> outcomes) const {
  if (outcomes.size() != rows_.size()) {
    fail(ErrorCode::InvalidSpec, "with_outcomes: expected " + std::to_string(rows_.size()) +
                                     " outcomes, got " + std::to_string(outcomes.size()));
  }
  PanelDataset copy = *this;
  for (std::size_t i = 0; i < rows_.size(); ++i) {
    if (!std::isfinite(outcomes[i])) {
      fail(ErrorCode::NonFiniteValue, "with_outcomes: non-finite outcome at row " + std::to_string(i));
    }
    copy.rows_[i].outcome = outcomes[i];
  }
  return copy;
}

// ---------------------------------------------------------------------------
// PanelBuilder

void PanelBuilder::add(std::string_view group, Period time, double treatment, double outcome,
                       std::optional<double> weight, std::optional<double> proxy,
                       std::size_t source_line) {
  pending_.push_back(Pending{std::string(group), time, treatment, outcome, weight, proxy,
                             source_line ? source_line : pending_.size() + 1});
}

PanelDataset PanelBuilder::build(ShapeCheck check) const {
  if (pending_.empty()) fail(ErrorCode::TooFewGroups, "panel has no rows");

  bool any_weight = false;
  bool any_proxy = false;
  for (const auto& p : pending_) {
    const auto row = "row " + std::to_string(p.line);
    if (!std::isfinite(p.treatment)) fail(ErrorCode::NonFiniteValue, row + ": treatment is not finite");
    if (!std::isfinite(p.outcome)) fail(ErrorCode::NonFiniteValue, row + ": outcome is not finite");
    if (p.weight) {
      any_weight = true;
      if (!std::isfinite(*p.weight)) fail(ErrorCode::NonFiniteValue, row + ": weight is not finite");
      if (*p.weight <= 0.0) fail(ErrorCode::NonPositiveWeight, row + ": weight must be > 0");
    }
    if (p.proxy) {
      any_proxy = true;
      if (!std::isfinite(*p.proxy)) fail(ErrorCode::NonFiniteValue, row + ": proxy is not finite");
    }
  }

  std::vector<std::string> labels;
  {
    std::unordered_map<std::string, bool> seen;
    for (const auto& p : pending_) {
      if (seen.emplace(p.group, true).second) labels.push_back(p.group);
    }
  }
  const bool numeric = std::all_of(labels.begin(), labels.end(), [](const std::string& s) {
    long long v;
    return parse_integer(s, v);
  });
  if (numeric) {
    std::sort(labels.begin(), labels.end(), [](const std::string& a, const std::string& b) {
      long long x = 0, y = 0;
      parse_integer(a, x);
      parse_integer(b, y);
      return x != y ? x < y : a < b;
    });
  } else {
    std::sort(labels.begin(), labels.end());
  }
  std::unordered_map<std::string, GroupIndex> index;
  for (GroupIndex g = 0; g < labels.size(); ++g) index.emplace(labels[g], g);

  std::vector<Period> periods;
  periods.reserve(pending_.size());
  for (const auto& p : pending_) periods.push_back(p.time);
  std::sort(periods.begin(), periods.end());
  periods.erase(std::unique(periods.begin(), periods.end()), periods.end());

  if (check == ShapeCheck::Estimable) {
    if (labels.size() < 2) fail(ErrorCode::TooFewGroups, "panel needs at least 2 groups");
    if (periods.size() < 2) fail(ErrorCode::TooFewPeriods, "panel needs at least 2 periods");
  }

  std::vector<std::size_t> order(pending_.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<GroupIndex> gidx(pending_.size());
  for (std::size_t i = 0; i < pending_.size(); ++i) gidx[i] = index.at(pending_[i].group);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (gidx[a] != gidx[b]) return gidx[a] < gidx[b];
    if (pending_[a].time != pending_[b].time) return pending_[a].time < pending_[b].time;
    return pending_[a].line < pending_[b].line;
  });

  PanelDataset data;
  data.groups_ = std::move(labels);
  data.periods_ = std::move(periods);
  data.weight_mode_ = any_weight ? WeightMode::Supplied : WeightMode::Uniform;
  data.has_proxy_ = any_proxy;
  data.rows_.reserve(order.size());
  data.grid_.assign(data.groups_.size() * data.periods_.size(), -1);
  data.group_offsets_.assign(data.groups_.size() + 1, 0);

  for (std::size_t k = 0; k < order.size(); ++k) {
    const auto& p = pending_[order[k]];
    const GroupIndex g = gidx[order[k]];
    if (k > 0) {
      const auto& prev = pending_[order[k - 1]];
      if (gidx[order[k - 1]] == g && prev.time == p.time) {
        fail(ErrorCode::DuplicateCell, "row " + std::to_string(p.line) + ": duplicate cell (group " +
                                           p.group + ", time " + std::to_string(p.time) +
                                           ") first seen at row " + std::to_string(prev.line));
      }
    }
    if (any_weight && !p.weight) {
      fail(ErrorCode::NonFiniteValue, "row " + std::to_string(p.line) + ": weight is missing");
    }
    Cell c;
    c.group = g;
    c.time = p.time;
    c.treatment = p.treatment;
    c.outcome = p.outcome;
    c.weight = p.weight.value_or(1.0);
    c.proxy = p.proxy;
    const auto pos = static_cast<std::size_t>(
        std::lower_bound(data.periods_.begin(), data.periods_.end(), p.time) - data.periods_.begin());
    data.grid_[g * data.periods_.size() + pos] = static_cast<std::ptrdiff_t>(data.rows_.size());
    data.rows_.push_back(c);
    data.group_offsets_[g + 1] = data.rows_.size();
  }
  return data;
}

// ---------------------------------------------------------------------------
// Design metadata

DesignInfo derive_design(const PanelDataset& data) {
  DesignInfo info;
  const std::size_t G = data.n_groups();
  info.first_switch.assign(G, SwitchDate::never());
  info.baseline_treatment.assign(G, 0.0);
  info.is_binary = true;
  info.is_staggered = true;

  for (GroupIndex g = 0; g < G; ++g) {
    const auto rows = data.group_rows(g);
    if (rows.empty()) continue;
    const double base = rows.front().treatment;
    info.baseline_treatment[g] = base;
    if (rows.front().time != data.first_period()) info.late_entrants.push_back(g);

    int changes = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const double d = rows[i].treatment;
      if (d != 0.0 && d != 1.0) info.is_binary = false;
      if (info.first_switch[g].is_never() && d != base) info.first_switch[g] = SwitchDate(rows[i].time);
      if (i > 0) {
        const double prev = rows[i - 1].treatment;
        if (d < prev) info.is_staggered = false;
        if (d != prev) ++changes;
      }
    }
    if (changes > 1) info.is_staggered = false;
    if (!info.first_switch[g].is_never()) info.cohorts[info.first_switch[g].period()].push_back(g);
  }

  for (auto it = data.periods().rbegin(); it != data.periods().rend(); ++it) {
    const Period t = *it;
    const bool someone_waiting = std::any_of(info.first_switch.begin(), info.first_switch.end(),
                                             [t](const SwitchDate& f) { return f > t; });
    if (someone_waiting) {
      info.last_untreated_period = t;
      break;
    }
  }
  return info;
}

BalanceReport balance_report(const PanelDataset& data) {
  BalanceReport report;
  for (GroupIndex g = 0; g < data.n_groups(); ++g) {
    for (Period t : data.periods()) {
      if (!data.find(g, t)) report.missing.emplace_back(data.group_label(g), t);
    }
  }
  report.balanced = report.missing.empty();
  return report;
}

// ---------------------------------------------------------------------------
// CSV

PanelDataset read_csv(std::istream& in, const ColumnMap& columns, std::string_view source) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    if (trim(line).empty()) continue;
    header = split_csv_line(line);
    break;
  }
  if (header.empty()) fail(ErrorCode::MissingColumn, std::string(source) + ": missing header row");

  auto locate = [&](const std::string& name) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    return std::nullopt;
  };
  auto require = [&](const std::string& name, const char* role) {
    auto pos = locate(name);
    if (!pos) {
      fail(ErrorCode::MissingColumn,
           std::string(source) + ": " + role + " column '" + name + "' not found in header");
    }
    return *pos;
  };
  const std::size_t c_group = require(columns.group, "group");
  const std::size_t c_time = require(columns.time, "time");
  const std::size_t c_treat = require(columns.treatment, "treatment");
  const std::size_t c_out = require(columns.outcome, "outcome");
  std::optional<std::size_t> c_weight = columns.weight_required
                                            ? std::optional<std::size_t>(require(columns.weight, "weight"))
                                            : locate(columns.weight);
  std::optional<std::size_t> c_proxy = columns.proxy_required
                                           ? std::optional<std::size_t>(require(columns.proxy, "proxy"))
                                           : locate(columns.proxy);

  PanelBuilder builder;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_csv_line(line);
    const auto at = where(source, line_no);
    auto field = [&](std::size_t c) -> std::string_view {
      if (c >= fields.size()) return {};
      return fields[c];
    };
    auto real = [&](std::size_t c, const char* role) {
      double v = 0.0;
      const auto text = field(c);
      if (text.empty()) fail(ErrorCode::NonFiniteValue, at + ": missing " + role + " value");
      if (!parse_real(text, v) || !std::isfinite(v)) {
        fail(ErrorCode::NonFiniteValue, at + ": " + role + " value '" + std::string(text) + "' is not a finite number");
      }
      return v;
    };

    const auto group = field(c_group);
    if (group.empty()) fail(ErrorCode::NonFiniteValue, at + ": missing group value");
    long long t = 0;
    if (!parse_integer(field(c_time), t) || t < std::numeric_limits<Period>::min() ||
        t > std::numeric_limits<Period>::max()) {
      fail(ErrorCode::ParseError, at + ": time value '" + std::string(field(c_time)) + "' is not an integer");
    }
    const double d = real(c_treat, "treatment");
    const double y = real(c_out, "outcome");
    std::optional<double> w;
    if (c_weight) {
      w = real(*c_weight, "weight");
      if (*w <= 0.0) fail(ErrorCode::NonPositiveWeight, at + ": weight must be > 0");
    }
    std::optional<double> p;
    if (c_proxy && !field(*c_proxy).empty()) p = real(*c_proxy, "proxy");
    builder.add(group, static_cast<Period>(t), d, y, w, p, line_no);
  }

  try {
    return builder.build();
  } catch (const Error& e) {
    throw Error(e.code(), std::string(source) + ": " + e.what());
  }
}

PanelDataset load_csv(const std::filesystem::path& path, const ColumnMap& columns) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::ParseError, "cannot open '" + path.string() + "'");
  return read_csv(in, columns, path.string());
}

void write_csv(const PanelDataset& data, std::ostream& out) {
  const bool weighted = data.weight_mode() == WeightMode::Supplied;
  out << "group,time,treatment,outcome";
  if (weighted) out << ",weight";
  if (data.has_proxy()) out << ",proxy";
  out << '\n';
  for (const Cell& c : data.rows()) {
    out << quote_if_needed(data.group_label(c.group)) << ',' << c.time << ',' << format_number(c.treatment)
        << ',' << format_number(c.outcome);
    if (weighted) out << ',' << format_number(c.weight);
    if (data.has_proxy()) {
      out << ',';
      if (c.proxy) out << format_number(*c.proxy);
    }
    out << '\n';
  }
}

}  // namespace hetdid
