#include <CLI11.hpp>

#include <cstdint>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>

#include "hetdid/diagnostics.hpp"
#include "hetdid/dynamic_estimators.hpp"
#include "hetdid/error.hpp"
#include "hetdid/inference.hpp"
#include "hetdid/report.hpp"
#include "hetdid/sim.hpp"
#include "hetdid/static_estimators.hpp"

using namespace hetdid;

namespace {

struct Common {
  std::string input;
  ColumnMap columns;
  std::string format = "json";
  std::string output;
  std::vector<std::string> covariates;
};

struct BootOpts {
  int replications = 0;
  std::uint64_t seed = 0;
  double ci_level = 0.95;
  int threads = 0;
};

void add_common(CLI::App* sub, Common& c, bool needs_input = true) {
  if (needs_input) sub->add_option("-i,--input", c.input, "Panel CSV")->required()->check(CLI::ExistingFile);
  sub->add_option("--group-col", c.columns.group, "Group column")->capture_default_str();
  sub->add_option("--time-col", c.columns.time, "Period column (integer)")->capture_default_str();
  sub->add_option("--treatment-col", c.columns.treatment, "Treatment column")->capture_default_str();
  sub->add_option("--outcome-col", c.columns.outcome, "Outcome column")->capture_default_str();
  sub->add_option("--weight-col", c.columns.weight, "Population weight column, used when present")
      ->capture_default_str();
  sub->add_option("--proxy-col", c.columns.proxy, "Effect proxy column, used when present")->capture_default_str();
  sub->add_option("--covariates", c.covariates, "Control variables (not supported)");
  sub->add_option("-f,--format", c.format, "Output format")->check(CLI::IsMember({"csv", "json"}))
      ->capture_default_str();
  sub->add_option("-o,--output", c.output, "Output file (default: standard output)");
}

void add_bootstrap(CLI::App* sub, BootOpts& b) {
  sub->add_option("-B,--bootstrap", b.replications, "Cluster bootstrap replications (0: none)")
      ->check(CLI::NonNegativeNumber)->capture_default_str();
  sub->add_option("--seed", b.seed, "Bootstrap seed")->capture_default_str();
  sub->add_option("--ci-level", b.ci_level, "Confidence level")->capture_default_str();
  sub->add_option("--threads", b.threads, "Bootstrap threads (0: HETDID_THREADS or all cores)")
      ->check(CLI::NonNegativeNumber)->capture_default_str();
}

Json columns_json(const ColumnMap& m) {
  return {{"group", m.group}, {"time", m.time},     {"treatment", m.treatment},
          {"outcome", m.outcome}, {"weight", m.weight}, {"proxy", m.proxy}};
}

Json boot_json(const BootOpts& b) {
  return {{"replications", b.replications}, {"seed", b.seed}, {"ci_level", b.ci_level}};
}

PanelDataset load(const Common& c) {
  if (!c.covariates.empty()) fail(ErrorCode::UnsupportedFeature, "control variables are not supported");
  return load_csv(c.input, c.columns);
}

void emit(const Common& c, const std::function<void(std::ostream&)>& csv, const std::string& command,
          const Json& repro, const Json& result) {
  std::ofstream file;
  if (!c.output.empty()) {
    file.open(c.output, std::ios::binary);
    if (!file) fail(ErrorCode::ParseError, "cannot open output file " + c.output);
  }
  std::ostream& out = c.output.empty() ? std::cout : file;
  if (c.format == "csv") {
    csv(out);
  } else {
    out << make_report(command, repro, result).dump(2) << '\n';
  }
}

using Estimator = std::function<EventStudyResult(const PanelDataset&)>;

Json run_event_study(const PanelDataset& data, const Estimator& est, const BootOpts& b, EventStudyResult& result) {
  if (b.replications == 0) {
    result = est(data);
    return to_json(result);
  }
  BootstrapSpec spec;
  spec.replications = b.replications;
  spec.seed = b.seed;
  spec.ci_level = b.ci_level;
  spec.threads = b.threads;
  BootstrapResult raw;
  result = bootstrap_event_study(data, est, spec, &raw);
  for (const auto& w : raw.warnings) std::cerr << "warning: " << w << '\n';
  Json j = to_json(result);
  j["bootstrap"] = to_json(raw);
  return j;
}

EventStudyResult didm_as_event_study(const PanelDataset& data, int placebos) {
  const DidMResult r = did_m(data, 0);
  EventStudyResult out;
  out.estimator = "did_m";
  HorizonEstimate e;
  e.estimate = r.estimate;
  e.weight = r.switching_weight;
  e.n_switchers = r.n_switching_cells;
  out.effects.push_back(e);
  for (int h = 1; h <= placebos; ++h) {
    HorizonEstimate p;
    p.horizon = -(h + 1);
    try {
      const DidMPlacebo pl = did_m_placebo(data, h);
      p.estimate = pl.estimate;
      p.weight = pl.weight;
      for (const auto& c : pl.components) p.n_switchers += c.n_switchers;
    } catch (const Error& err) {
      p.note = std::string(error_name(err.code()));
    }
    out.placebos.push_back(p);
  }
  return out;
}

std::map<Period, double> parse_shares(const std::string& text) {
  std::map<Period, double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) fail(ErrorCode::InvalidSpec, "cohort share '" + item + "' is not period:share");
    try {
      out[std::stoi(item.substr(0, colon))] = std::stod(item.substr(colon + 1));
    } catch (const std::exception&) {
      fail(ErrorCode::InvalidSpec, "cohort share '" + item + "' is not period:share");
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Difference-in-differences estimators and TWFE weight diagnostics"};
  app.set_version_flag("--version", toolkit_version());
  app.require_subcommand(1, 1);

  // weights
  Common wc;
  std::string w_target = "fe";
  auto* weights = app.add_subcommand("weights", "Causal weights of the TWFE or first-difference coefficient");
  add_common(weights, wc);
  weights->add_option("--target", w_target, "Coefficient to decompose")->check(CLI::IsMember({"fe", "fd"}))
      ->capture_default_str();

  // bacon
  Common bc;
  auto* bacon = app.add_subcommand("bacon", "2x2 decomposition of the TWFE coefficient in staggered designs");
  add_common(bacon, bc);

  // eventstudy
  Common ec;
  EventStudySpec es_spec;
  bool es_bin = false;
  int es_target = 0;
  auto* es = app.add_subcommand("eventstudy", "TWFE event-study regression and its contamination weights");
  add_common(es, ec);
  es->add_option("--leads", es_spec.leads, "Lead indicators K")->check(CLI::NonNegativeNumber)->capture_default_str();
  es->add_option("--lags", es_spec.lags, "Lag indicators L")->check(CLI::NonNegativeNumber)->capture_default_str();
  es->add_flag("--bin", es_bin, "Bin relative times beyond -K and L into endpoint indicators");
  es->add_option("--omit", es_spec.omitted_relative_time, "Omitted relative time")->capture_default_str();
  es->add_option("--target", es_target, "Relative time whose weights are reported")->capture_default_str();

  // didm
  Common dc;
  BootOpts db;
  int dm_placebos = 0;
  auto* didm = app.add_subcommand("didm", "Instantaneous effect of switching cells (DID_M)");
  add_common(didm, dc);
  add_bootstrap(didm, db);
  didm->add_option("--placebos", dm_placebos, "Number of placebos")->check(CLI::NonNegativeNumber)
      ->capture_default_str();

  // cs
  Common cc;
  BootOpts cb;
  std::string cs_rule = "not-yet", cs_kind = "long";
  int cs_horizon = 0, cs_placebos = 0;
  auto* cs = app.add_subcommand("cs", "Cohort-horizon DIDs aggregated by horizon");
  add_common(cs, cc);
  add_bootstrap(cs, cb);
  cs->add_option("--control", cs_rule, "Control groups")->check(CLI::IsMember({"never", "not-yet", "last"}))
      ->capture_default_str();
  cs->add_option("--max-horizon", cs_horizon, "Largest horizon")->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  cs->add_option("--placebos", cs_placebos, "Number of placebos")->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  cs->add_option("--placebo-kind", cs_kind, "Placebo windows")->check(CLI::IsMember({"long", "first"}))
      ->capture_default_str();

  // impute
  Common ic;
  BootOpts ib;
  std::string im_trends = "none";
  int im_horizon = 0, im_placebos = 0;
  auto* impute = app.add_subcommand("impute", "Imputation estimator");
  add_common(impute, ic);
  add_bootstrap(impute, ib);
  impute->add_option("--trends", im_trends, "Untreated outcome model")
      ->check(CLI::IsMember({"none", "group-linear"}))->capture_default_str();
  impute->add_option("--max-horizon", im_horizon, "Largest horizon")->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  impute->add_option("--placebos", im_placebos, "Number of lead placebos")->check(CLI::NonNegativeNumber)
      ->capture_default_str();

  // dynamic
  Common yc;
  BootOpts yb;
  DcdhOptions dy;
  std::string dy_norm = "switchers";
  auto* dynamic = app.add_subcommand("dynamic", "Dynamic effects of the first treatment change");
  add_common(dynamic, yc);
  add_bootstrap(dynamic, yb);
  dynamic->add_option("--max-horizon", dy.max_horizon, "Largest horizon")->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  dynamic->add_option("--placebos", dy.n_placebos, "Number of placebos")->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  dynamic->add_option("--normalization", dy_norm, "Horizon weights of the normalized effect")
      ->check(CLI::IsMember({"switchers", "uniform"}))->capture_default_str();

  // simulate
  Common sc;
  std::string dgp = "fig1", shares, weight_scheme = "uniform", truth_path;
  Fig1Params f1;
  Fig2Params f2;
  StaggeredParams st;
  std::uint64_t sim_seed = 0;
  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic panel with known effects");
  add_common(simulate, sc, false);
  simulate->add_option("--dgp", dgp, "Design")->check(CLI::IsMember({"fig1", "fig1-never", "fig2", "staggered"}))
      ->capture_default_str();
  simulate->add_option("--seed", sim_seed, "Random seed")->capture_default_str();
  simulate->add_option("--te-e2", f1.te_e2, "fig1: effect of e at 2")->capture_default_str();
  simulate->add_option("--te-e3", f1.te_e3, "fig1: effect of e at 3")->capture_default_str();
  simulate->add_option("--te-l3", f1.te_l3, "fig1: effect of l at 3")->capture_default_str();
  simulate->add_option("--delta-m", f2.delta_m, "fig2: per-unit effect of m")->capture_default_str();
  simulate->add_option("--delta-l", f2.delta_l, "fig2: per-unit effect of l")->capture_default_str();
  simulate->add_option("--groups", st.n_groups, "staggered: groups")->capture_default_str();
  simulate->add_option("--periods", st.n_periods, "staggered: periods")->capture_default_str();
  simulate->add_option("--cohorts", shares, "staggered: period:share list, e.g. 4:0.3,6:0.3");
  simulate->add_option("--intercept", st.intercept, "staggered: effect at horizon 0")->capture_default_str();
  simulate->add_option("--horizon-slope", st.horizon_slope, "staggered: effect growth per horizon")
      ->capture_default_str();
  simulate->add_option("--cohort-slope", st.cohort_slope, "staggered: effect growth per cohort period")
      ->capture_default_str();
  simulate->add_option("--effect-sd", st.group_effect_sd, "staggered: sd of group effect deviations")
      ->capture_default_str();
  simulate->add_option("--noise-sd", st.noise_sd, "staggered: outcome noise sd")->capture_default_str();
  simulate->add_option("--trend-gap", st.trend_gap, "staggered: extra trend of eventually treated groups")
      ->capture_default_str();
  simulate->add_option("--anticipation", st.anticipation, "staggered: outcome shift one period before switching")
      ->capture_default_str();
  simulate->add_option("--weights", weight_scheme, "staggered: population weights")
      ->check(CLI::IsMember({"uniform", "group", "cell"}))->capture_default_str();
  simulate->add_option("--truth", truth_path, "Also write the true effects as CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*weights) {
      const PanelDataset data = load(wc);
      const WeightTable table =
          static_weights(data, w_target == "fe" ? EstimandKind::StaticFe : EstimandKind::StaticFd);
      Json result = to_json(table, data);
      if (data.has_proxy()) {
        const ProxyCorrelation corr = weight_proxy_correlation(table, data);
        result["proxy_correlation"] = {{"proxy", corr.proxy},
                                       {"time", corr.time ? Json(*corr.time) : Json(nullptr)}};
      }
      Json repro{{"input", wc.input}, {"columns", columns_json(wc.columns)}, {"target", w_target}};
      emit(wc, [&](std::ostream& o) { write_weights_csv(table, data, o); }, "weights", repro, result);
    } else if (*bacon) {
      const PanelDataset data = load(bc);
      const DecompositionReport rep = decompose_2x2(data);
      Json repro{{"input", bc.input}, {"columns", columns_json(bc.columns)}};
      emit(bc, [&](std::ostream& o) { write_decomposition_csv(rep, o); }, "bacon", repro, to_json(rep));
    } else if (*es) {
      const PanelDataset data = load(ec);
      es_spec.binning = es_bin ? Binning::Endpoint : Binning::None;
      const EventStudyFit fit = fit_event_study(data, es_spec);
      const ContaminationTable table = event_study_weights(fit, data, es_target);
      Json result{{"fit", to_json(fit)}, {"weights", to_json(table, data)}};
      Json repro{{"input", ec.input},
                 {"columns", columns_json(ec.columns)},
                 {"leads", es_spec.leads},
                 {"lags", es_spec.lags},
                 {"binning", es_bin},
                 {"omitted_relative_time", es_spec.omitted_relative_time},
                 {"target", es_target}};
      emit(ec, [&](std::ostream& o) { write_event_study_fit_csv(fit, o); }, "eventstudy", repro, result);
    } else if (*didm) {
      const PanelDataset data = load(dc);
      const DidMResult full = did_m(data, dm_placebos);
      EventStudyResult table;
      Json result{{"did_m", to_json(full)}};
      result["event_study"] = run_event_study(
          data, [&](const PanelDataset& d) { return didm_as_event_study(d, dm_placebos); }, db, table);
      Json repro{{"input", dc.input}, {"columns", columns_json(dc.columns)}, {"placebos", dm_placebos},
                 {"bootstrap", boot_json(db)}};
      emit(dc, [&](std::ostream& o) { write_estimates_csv(table, o); }, "didm", repro, result);
    } else if (*cs) {
      const PanelDataset data = load(cc);
      const ControlRule rule = *parse_control_rule(cs_rule);
      const PlaceboKind kind = cs_kind == "long" ? PlaceboKind::LongDifference : PlaceboKind::FirstDifference;
      EventStudyResult table;
      const Json result = run_event_study(
          data, [&](const PanelDataset& d) { return cs_event_study(d, rule, cs_horizon, cs_placebos, kind); }, cb,
          table);
      Json repro{{"input", cc.input},         {"columns", columns_json(cc.columns)}, {"control", cs_rule},
                 {"max_horizon", cs_horizon}, {"placebos", cs_placebos},             {"placebo_kind", cs_kind},
                 {"bootstrap", boot_json(cb)}};
      emit(cc, [&](std::ostream& o) { write_estimates_csv(table, o); }, "cs", repro, result);
    } else if (*impute) {
      const PanelDataset data = load(ic);
      const Trends trends = im_trends == "none" ? Trends::None : Trends::GroupLinear;
      EventStudyResult table;
      Json result{{"imputation", to_json(imputation_fit(data, trends), data)}};
      result["event_study"] = run_event_study(
          data, [&](const PanelDataset& d) { return imputation_event_study(d, im_horizon, im_placebos, trends); },
          ib, table);
      Json repro{{"input", ic.input},         {"columns", columns_json(ic.columns)}, {"trends", im_trends},
                 {"max_horizon", im_horizon}, {"placebos", im_placebos},             {"bootstrap", boot_json(ib)}};
      emit(ic, [&](std::ostream& o) { write_estimates_csv(table, o); }, "impute", repro, result);
    } else if (*dynamic) {
      const PanelDataset data = load(yc);
      dy.normalization_weights = dy_norm == "switchers" ? HorizonWeighting::SwitcherCells : HorizonWeighting::Uniform;
      EventStudyResult table;
      const Json result =
          run_event_study(data, [&](const PanelDataset& d) { return dcdh_aggregate(d, dy); }, yb, table);
      Json repro{{"input", yc.input},           {"columns", columns_json(yc.columns)}, {"max_horizon", dy.max_horizon},
                 {"placebos", dy.n_placebos},   {"normalization", dy_norm},           {"bootstrap", boot_json(yb)}};
      emit(yc, [&](std::ostream& o) { write_estimates_csv(table, o); }, "dynamic", repro, result);
    } else if (*simulate) {
      DgpSpec spec;
      spec.seed = sim_seed;
      Json params;
      if (dgp == "fig1" || dgp == "fig1-never") {
        spec.kind = DgpKind::Fig1EarlyLate;
        f1.never_treated_group = dgp == "fig1-never";
        spec.fig1 = f1;
        params = {{"te_e2", f1.te_e2}, {"te_e3", f1.te_e3}, {"te_l3", f1.te_l3}};
      } else if (dgp == "fig2") {
        spec.kind = DgpKind::Fig2MoreLess;
        spec.fig2 = f2;
        params = {{"delta_m", f2.delta_m}, {"delta_l", f2.delta_l}};
      } else {
        spec.kind = DgpKind::Staggered;
        st.cohort_shares = parse_shares(shares);
        st.weights = weight_scheme == "uniform" ? WeightScheme::Uniform
                     : weight_scheme == "group" ? WeightScheme::RandomGroup
                                                : WeightScheme::RandomCell;
        spec.staggered = st;
        Json cohorts = Json::object();
        for (const auto& [c, s] : st.cohort_shares) cohorts[std::to_string(c)] = s;
        params = {{"groups", st.n_groups},           {"periods", st.n_periods},
                  {"cohorts", cohorts},              {"intercept", st.intercept},
                  {"horizon_slope", st.horizon_slope}, {"cohort_slope", st.cohort_slope},
                  {"effect_sd", st.group_effect_sd}, {"noise_sd", st.noise_sd},
                  {"trend_gap", st.trend_gap},       {"anticipation", st.anticipation},
                  {"weights", weight_scheme}};
      }
      const Simulation sim = generate(spec);
      if (!truth_path.empty()) {
        std::ofstream t(truth_path, std::ios::binary);
        if (!t) fail(ErrorCode::ParseError, "cannot open truth file " + truth_path);
        write_truth_csv(sim.truth, sim.data, t);
      }
      std::ostringstream panel;
      write_csv(sim.data, panel);
      Json result{{"truth", to_json(sim.truth, sim.data)}, {"panel_csv", panel.str()}};
      Json repro{{"dgp", dgp}, {"seed", sim_seed}, {"parameters", params}};
      emit(sc, [&](std::ostream& o) { o << panel.str(); }, "simulate", repro, result);
    }
  } catch (const Error& e) {
    std::cerr << "error[" << error_name(e.code()) << "]: " << e.what() << '\n';
    return error_category(e.code()) == ErrorCategory::User ? 2 : 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
