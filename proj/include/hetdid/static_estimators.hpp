#pragma once

#include <optional>
#include <string>
#include <vector>

#include "hetdid/panel.hpp"

namespace hetdid {

/// DID between groups going from untreated at t-1 to treated at t and groups
/// untreated at both dates. Changes are weighted by N_{g,t}.
double did_plus(const PanelDataset& data, Period t);

/// DID between groups treated at t-1 and t and groups leaving treatment at t.
double did_minus(const PanelDataset& data, Period t);

/// One (t, baseline dose, direction) cell of DID_M. The estimate is the
/// switchers-minus-stayers outcome change divided by the switchers' signed
/// mean treatment change, so it is a per-unit effect for either direction.
struct DidMComponent {
  Period t = 0;
  double baseline = 0.0;
  int direction = 1;  // +1 treatment went up, -1 down
  double estimate = 0.0;
  double weight = 0.0;       // sum of N_{g,t} over the switchers
  double mean_abs_change = 0.0;
  std::size_t n_switchers = 0;
  std::size_t n_controls = 0;
};

struct DidMPeriod {
  Period t = 0;
  std::optional<double> did_plus;
  std::optional<double> did_minus;
  double n_switchers_in = 0.0;   // population weighted
  double n_switchers_out = 0.0;
};

struct DidMPlacebo {
  int horizon = 0;
  double estimate = 0.0;
  double weight = 0.0;
  std::vector<DidMComponent> components;
};

struct DidMResult {
  double estimate = 0.0;
  std::vector<DidMComponent> components;
  std::vector<DidMPeriod> per_period;  // periods with at least one computed component
  std::size_t n_switching_cells = 0;   // in computed components
  double switching_weight = 0.0;
  std::size_t n_uncontrolled_switches = 0;  // switching cells left out for lack of stayers
  std::vector<DidMPlacebo> placebos;
};

/// Average of the per-period, per-dose components, weighted by switching
/// population. With placebo_horizons > 0, placebos 1..H are attached; the ones
/// that cannot be computed are left out.
DidMResult did_m(const PanelDataset& data, int placebo_horizons = 0);

/// Pre-switch analogue of did_m over [t-1-h, t-1].
DidMPlacebo did_m_placebo(const PanelDataset& data, int horizon);

/// (dY_1 - dY_2) / (dD_1 - dD_2) on a two-group, two-period panel.
double wald_did(const PanelDataset& data);

}  // namespace hetdid
