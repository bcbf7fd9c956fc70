#include "hetdid/static_estimators.hpp"

#include <cmath>
#include <map>

#include "hetdid/error.hpp"

namespace hetdid {

namespace {

struct Mean {
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

bool constant_over(const PanelDataset& data, GroupIndex g, Period from, Period to, double dose) {
  for (Period s = from; s <= to; ++s) {
    const Cell* c = data.find(g, s);
    if (!c || c->treatment != dose) return false;
  }
  return true;
}

struct ComponentScan {
  std::vector<DidMComponent> components;
  std::size_t uncontrolled = 0;
};

// horizon == 0: effects at t; horizon h > 0: placebo over [t-1-h, t-1].
ComponentScan scan_components(const PanelDataset& data, int horizon) {
  ComponentScan out;
  for (std::size_t ti = 1; ti < data.n_periods(); ++ti) {
    const Period t = data.periods()[ti];
    if (!data.has_period(t - 1)) continue;
    if (horizon > 0 && !data.has_period(t - 1 - horizon)) continue;

    struct Switchers {
      Mean dy, dd, absdd;
    };
    std::map<std::pair<double, int>, Switchers> switchers;
    std::map<double, Mean> stayers;
    std::map<std::pair<double, int>, std::size_t> skipped;

    for (GroupIndex g = 0; g < data.n_groups(); ++g) {
      const Cell* now = data.find(g, t);
      const Cell* prev = data.find(g, t - 1);
      if (!now || !prev) continue;
      const double d = prev->treatment;
      const double dd = now->treatment - d;
      double dy = now->outcome - prev->outcome;
      if (horizon > 0) {
        const Period start = t - 1 - horizon;
        const bool held = constant_over(data, g, start, dd == 0.0 ? t : t - 1, d);
        if (!held) {
          if (dd != 0.0) ++skipped[{d, dd > 0 ? 1 : -1}];
          continue;
        }
        dy = prev->outcome - data.find(g, start)->outcome;
      }
      if (dd == 0.0) {
        stayers[d].add(dy, now->weight);
      } else {
        Switchers& s = switchers[{d, dd > 0 ? 1 : -1}];
        s.dy.add(dy, now->weight);
        s.dd.add(dd, now->weight);
        s.absdd.add(std::abs(dd), now->weight);
      }
    }

    for (const auto& [key, s] : switchers) {
      const auto ctrl = stayers.find(key.first);
      if (ctrl == stayers.end()) {
        out.uncontrolled += s.dy.n;
        continue;
      }
      DidMComponent c;
      c.t = t;
      c.baseline = key.first;
      c.direction = key.second;
      c.estimate = (s.dy.value() - ctrl->second.value()) / s.dd.value();
      c.weight = s.dy.weight;
      c.mean_abs_change = s.absdd.value();
      c.n_switchers = s.dy.n;
      c.n_controls = ctrl->second.n;
      out.components.push_back(c);
    }
  }
  return out;
}

double aggregate(const std::vector<DidMComponent>& comps, double& weight) {
  double num = 0.0;
  weight = 0.0;
  for (const DidMComponent& c : comps) {
    num += c.weight * c.estimate;
    weight += c.weight;
  }
  return num / weight;
}

void require_pair(const PanelDataset& data, Period t) {
  if (!data.has_period(t)) fail(ErrorCode::PeriodNotFound, "period " + std::to_string(t) + " is not in the panel");
  if (!data.has_period(t - 1)) {
    fail(ErrorCode::PeriodNotFound, "period " + std::to_string(t - 1) + " (before " + std::to_string(t) +
                                        ") is not in the panel");
  }
}

// Binary DID between t-1 and t; from/to give the switchers' path, stay the
// control dose held at both dates.
double binary_did(const PanelDataset& data, Period t, double from, double to, double stay, ErrorCode none_code,
                  const char* what) {
  require_pair(data, t);
  Mean sw, ctrl;
  for (GroupIndex g = 0; g < data.n_groups(); ++g) {
    const Cell* now = data.find(g, t);
    const Cell* prev = data.find(g, t - 1);
    if (!now || !prev) continue;
    for (const Cell* c : {now, prev}) {
      if (c->treatment != 0.0 && c->treatment != 1.0) {
        fail(ErrorCode::NotBinary, "treatment of group '" + data.group_label(g) + "' at period " +
                                       std::to_string(c->time) + " is not 0/1");
      }
    }
    const double dy = now->outcome - prev->outcome;
    if (prev->treatment == from && now->treatment == to) sw.add(dy, now->weight);
    else if (prev->treatment == stay && now->treatment == stay) ctrl.add(dy, now->weight);
  }
  if (sw.n == 0) fail(none_code, std::string("no ") + what + " at period " + std::to_string(t));
  if (ctrl.n == 0) fail(ErrorCode::NoControls, "no control group at period " + std::to_string(t));
  return sw.value() - ctrl.value();
}

}  // namespace

double did_plus(const PanelDataset& data, Period t) {
  return binary_did(data, t, 0.0, 1.0, 0.0, ErrorCode::NoSwitchersIn, "switchers in");
}

double did_minus(const PanelDataset& data, Period t) {
  return -binary_did(data, t, 1.0, 0.0, 1.0, ErrorCode::NoSwitchersOut, "switchers out");
}

DidMPlacebo did_m_placebo(const PanelDataset& data, int horizon) {
  if (horizon < 1) fail(ErrorCode::InvalidSpec, "placebo horizon must be >= 1");
  ComponentScan scan = scan_components(data, horizon);
  if (scan.components.empty()) {
    fail(ErrorCode::InsufficientPreperiods,
         "no switcher is observed at a constant treatment for " + std::to_string(horizon + 1) +
             " periods before switching, with matching stayers");
  }
  DidMPlacebo out;
  out.horizon = horizon;
  out.estimate = aggregate(scan.components, out.weight);
  out.components = std::move(scan.components);
  return out;
}

DidMResult did_m(const PanelDataset& data, int placebo_horizons) {
  ComponentScan scan = scan_components(data, 0);
  if (scan.components.empty()) {
    fail(ErrorCode::NoValidComparisons, "no switching cell has a group with the same treatment at both dates");
  }
  DidMResult out;
  out.estimate = aggregate(scan.components, out.switching_weight);
  out.n_uncontrolled_switches = scan.uncontrolled;

  std::map<Period, std::pair<Mean, Mean>> by_period;
  for (const DidMComponent& c : scan.components) {
    out.n_switching_cells += c.n_switchers;
    auto& slot = by_period[c.t];
    (c.direction > 0 ? slot.first : slot.second).add(c.estimate, c.weight);
  }
  for (const auto& [t, pair] : by_period) {
    DidMPeriod p;
    p.t = t;
    if (pair.first.n) {
      p.did_plus = pair.first.value();
      p.n_switchers_in = pair.first.weight;
    }
    if (pair.second.n) {
      p.did_minus = pair.second.value();
      p.n_switchers_out = pair.second.weight;
    }
    out.per_period.push_back(p);
  }
  out.components = std::move(scan.components);

  for (int h = 1; h <= placebo_horizons; ++h) {
    try {
      out.placebos.push_back(did_m_placebo(data, h));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::InsufficientPreperiods) throw;
    }
  }
  return out;
}

double wald_did(const PanelDataset& data) {
  if (data.n_groups() != 2 || data.n_periods() != 2 || !data.is_balanced()) {
    fail(ErrorCode::WrongShape, "the Wald-DID needs exactly two groups observed at two periods");
  }
  const Period t0 = data.first_period(), t1 = data.last_period();
  double dy[2], dd[2];
  for (GroupIndex g = 0; g < 2; ++g) {
    dy[g] = data.find(g, t1)->outcome - data.find(g, t0)->outcome;
    dd[g] = data.find(g, t1)->treatment - data.find(g, t0)->treatment;
  }
  const double den = dd[0] - dd[1];
  if (den == 0.0) fail(ErrorCode::ZeroDenominator, "both groups' treatment changed by the same amount");
  return (dy[0] - dy[1]) / den;
}

}  // namespace hetdid
