#include "hetdid/report.hpp"

#include <cmath>
#include <ostream>

namespace hetdid {

namespace {

Json number_or_null(const std::optional<double>& v) {
  if (v && std::isfinite(*v)) return *v;
  return nullptr;
}

std::string csv_number(const std::optional<double>& v) {
  if (v && std::isfinite(*v)) return format_number(*v);
  return "";
}

Json horizon_json(const HorizonEstimate& h) {
  Json j;
  j["horizon"] = h.horizon;
  j["estimate"] = number_or_null(h.estimate);
  j["se"] = number_or_null(h.se);
  j["ci_lower"] = number_or_null(h.ci_lower);
  j["ci_upper"] = number_or_null(h.ci_upper);
  j["weight"] = h.weight;
  j["n_switchers"] = h.n_switchers;
  if (!h.note.empty()) j["note"] = h.note;
  return j;
}

void estimate_row(std::ostream& out, const char* kind, int horizon, const HorizonEstimate& h) {
  out << kind << ',' << horizon << ',' << csv_number(h.estimate) << ',' << csv_number(h.se) << ','
      << csv_number(h.ci_lower) << ',' << csv_number(h.ci_upper) << ',' << h.n_switchers << '\n';
}

}  // namespace

std::string toolkit_version() {
#ifdef HETDID_VERSION
  return HETDID_VERSION;
#else
  return "0.0.0";
#endif
}

Json to_json(const WeightTable& table, const PanelDataset& data) {
  Json j;
  j["estimand"] = to_string(table.kind);
  if (table.horizon) j["horizon"] = *table.horizon;
  j["coefficient"] = table.coefficient;
  j["positive_count"] = table.positive_count;
  j["negative_count"] = table.negative_count;
  j["positive_sum"] = table.positive_sum;
  j["negative_sum"] = table.negative_sum;
  j["total"] = table.total();
  Json entries = Json::array();
  for (const WeightEntry& e : table.entries) {
    entries.push_back({{"group", data.group_label(e.group)}, {"time", e.time}, {"weight", e.weight}});
  }
  j["entries"] = std::move(entries);
  return j;
}

Json to_json(const DecompositionReport& report) {
  Json j;
  j["beta_fe"] = report.beta_fe;
  j["reconstruction"] = report.reconstruction;
  j["forbidden_share"] = report.forbidden_share;
  Json rows = Json::array();
  for (const Comparison& c : report.comparisons) {
    rows.push_back({{"treated", c.treated.label()},
                    {"control", c.control.label()},
                    {"window_start", c.window_start},
                    {"window_end", c.window_end},
                    {"kind", to_string(c.kind)},
                    {"weight", c.weight},
                    {"did", c.did}});
  }
  j["comparisons"] = std::move(rows);
  return j;
}

Json to_json(const ContaminationTable& table, const PanelDataset& data) {
  auto entry = [&](const ContaminationEntry& e) {
    Json j{{"group", data.group_label(e.group)}, {"relative_time", e.relative_time}, {"weight", e.weight}};
    return j;
  };
  Json j;
  j["target_horizon"] = table.target_horizon;
  j["term"] = table.target_term;
  j["coefficient"] = table.coefficient;
  j["own_sum"] = table.own_sum;
  Json own = Json::array();
  for (const auto& e : table.own_weights) own.push_back(entry(e));
  j["own_weights"] = std::move(own);
  Json cont = Json::array();
  for (const auto& [rel, entries] : table.contamination) {
    Json block;
    block["relative_time"] = rel;
    block["sum"] = table.contamination_sums.at(rel);
    Json list = Json::array();
    for (const auto& e : entries) list.push_back(entry(e));
    block["weights"] = std::move(list);
    cont.push_back(std::move(block));
  }
  j["contamination"] = std::move(cont);
  Json bins = Json::array();
  for (const auto& [bin, sum] : table.bin_sums) bins.push_back({{"horizon", bin}, {"sum", sum}});
  j["indicator_sums"] = std::move(bins);
  return j;
}

Json to_json(const EventStudyFit& fit) {
  Json j;
  Json coefs = Json::array();
  for (std::size_t k = 0; k < fit.horizons.size(); ++k) {
    coefs.push_back({{"term", fit.fit.terms[k]},
                     {"horizon", fit.horizons[k]},
                     {"estimate", fit.fit.coefficients[static_cast<Eigen::Index>(k)]},
                     {"se", number_or_null(fit.fit.std_error(fit.fit.terms[k]))}});
  }
  j["coefficients"] = std::move(coefs);
  Json dropped = Json::array();
  for (const auto& d : fit.fit.dropped) dropped.push_back({{"term", d.term}, {"reason", d.reason}});
  j["dropped"] = std::move(dropped);
  j["n_obs"] = fit.fit.n_obs;
  j["n_clusters"] = fit.fit.n_clusters;
  return j;
}

Json to_json(const DidMResult& r) {
  Json j;
  j["estimate"] = r.estimate;
  j["n_switching_cells"] = r.n_switching_cells;
  j["switching_weight"] = r.switching_weight;
  j["n_uncontrolled_switches"] = r.n_uncontrolled_switches;
  Json periods = Json::array();
  for (const auto& p : r.per_period) {
    periods.push_back({{"t", p.t},
                       {"did_plus", number_or_null(p.did_plus)},
                       {"did_minus", number_or_null(p.did_minus)},
                       {"n_switchers_in", p.n_switchers_in},
                       {"n_switchers_out", p.n_switchers_out}});
  }
  j["per_period"] = std::move(periods);
  Json comps = Json::array();
  for (const auto& c : r.components) {
    comps.push_back({{"t", c.t},
                     {"baseline", c.baseline},
                     {"direction", c.direction},
                     {"estimate", c.estimate},
                     {"weight", c.weight},
                     {"mean_abs_change", c.mean_abs_change},
                     {"n_switchers", c.n_switchers},
                     {"n_controls", c.n_controls}});
  }
  j["components"] = std::move(comps);
  Json placebos = Json::array();
  for (const auto& p : r.placebos) {
    placebos.push_back({{"horizon", p.horizon}, {"estimate", p.estimate}, {"weight", p.weight}});
  }
  j["placebos"] = std::move(placebos);
  return j;
}

Json to_json(const EventStudyResult& r) {
  Json j;
  j["estimator"] = r.estimator;
  Json table = Json::array();
  for (auto it = r.placebos.rbegin(); it != r.placebos.rend(); ++it) {
    Json h = horizon_json(*it);
    h["kind"] = "placebo";
    table.push_back(std::move(h));
  }
  for (const auto& e : r.effects) {
    Json h = horizon_json(e);
    h["kind"] = "effect";
    table.push_back(std::move(h));
  }
  j["estimates"] = std::move(table);
  if (!r.first_stage.empty()) {
    Json fs = Json::array();
    for (const auto& f : r.first_stage) fs.push_back({{"horizon", f.horizon}, {"value", f.value}});
    j["first_stage"] = std::move(fs);
  }
  if (r.normalized_effect) {
    j["normalized_effect"] = {{"estimate", r.normalized_effect->estimate},
                              {"se", number_or_null(r.normalized_effect->se)},
                              {"ci_lower", number_or_null(r.normalized_effect->ci_lower)},
                              {"ci_upper", number_or_null(r.normalized_effect->ci_upper)}};
  }
  if (r.joint_placebo) {
    j["joint_placebo_test"] = {{"statistic", r.joint_placebo->statistic},
                               {"p_value", r.joint_placebo->p_value},
                               {"df", r.joint_placebo->rank}};
  }
  return j;
}

Json to_json(const ImputationResult& r, const PanelDataset& data) {
  Json j;
  j["trends"] = r.trends == Trends::GroupLinear ? "group_linear" : "none";
  j["overall"] = r.overall;
  Json h = Json::array();
  for (const auto& [l, v] : r.by_horizon) h.push_back({{"horizon", l}, {"estimate", v}});
  j["by_horizon"] = std::move(h);
  Json ch = Json::array();
  for (const auto& [k, v] : r.by_cohort_horizon) {
    ch.push_back({{"cohort", k.first}, {"horizon", k.second}, {"estimate", v}});
  }
  j["by_cohort_horizon"] = std::move(ch);
  Json cells = Json::array();
  for (const auto& c : r.cells) {
    cells.push_back({{"group", data.group_label(c.group)}, {"time", c.time}, {"effect", c.effect}});
  }
  j["cells"] = std::move(cells);
  return j;
}

Json to_json(const GroundTruth& truth, const PanelDataset& data) {
  Json j;
  Json cells = Json::array();
  for (const auto& c : truth.cells) {
    Json cj{{"group", data.group_label(c.group)}, {"time", c.time}, {"effect", c.effect}, {"weight", c.weight}};
    cj["cohort"] = c.cohort ? Json(*c.cohort) : Json(nullptr);
    cj["horizon"] = c.horizon ? Json(*c.horizon) : Json(nullptr);
    cells.push_back(std::move(cj));
  }
  j["cells"] = std::move(cells);
  Json ch = Json::array();
  for (const auto& [k, v] : truth.cohort_horizon) {
    ch.push_back({{"cohort", k.first}, {"horizon", k.second}, {"effect", v}});
  }
  j["cohort_horizon"] = std::move(ch);
  return j;
}

Json to_json(const BootstrapResult& b) {
  Json j;
  j["requested"] = b.requested;
  j["succeeded"] = b.succeeded();
  j["failed"] = b.failed;
  j["critical_value"] = b.z;
  j["warnings"] = b.warnings;
  return j;
}

Json make_report(const std::string& command, const Json& reproducibility, const Json& result) {
  Json j;
  j["schema"] = kReportSchema;
  j["command"] = command;
  j["toolkit_version"] = toolkit_version();
  j["reproducibility"] = reproducibility;
  j["result"] = result;
  return j;
}

void write_weights_csv(const WeightTable& table, const PanelDataset& data, std::ostream& out) {
  out << "group,time,weight\n";
  for (const WeightEntry& e : table.entries) {
    out << data.group_label(e.group) << ',' << e.time << ',' << format_number(e.weight) << '\n';
  }
}

void write_decomposition_csv(const DecompositionReport& report, std::ostream& out) {
  out << "treated,control,window_start,window_end,kind,weight,did\n";
  for (const Comparison& c : report.comparisons) {
    out << c.treated.label() << ',' << c.control.label() << ',' << c.window_start << ',' << c.window_end << ','
        << to_string(c.kind) << ',' << format_number(c.weight) << ',' << format_number(c.did) << '\n';
  }
}

void write_event_study_fit_csv(const EventStudyFit& fit, std::ostream& out) {
  out << "term,horizon,estimate,se\n";
  for (std::size_t k = 0; k < fit.horizons.size(); ++k) {
    out << fit.fit.terms[k] << ',' << fit.horizons[k] << ','
        << format_number(fit.fit.coefficients[static_cast<Eigen::Index>(k)]) << ','
        << csv_number(fit.fit.std_error(fit.fit.terms[k])) << '\n';
  }
}

void write_estimates_csv(const EventStudyResult& r, std::ostream& out) {
  out << "kind,horizon,estimate,se,ci_lower,ci_upper,n\n";
  for (auto it = r.placebos.rbegin(); it != r.placebos.rend(); ++it) estimate_row(out, "placebo", it->horizon, *it);
  for (const auto& e : r.effects) estimate_row(out, "effect", e.horizon, e);
  for (const auto& f : r.first_stage) {
    out << "first_stage," << f.horizon << ',' << format_number(f.value) << ",,,,\n";
  }
  if (r.normalized_effect) {
    HorizonEstimate h;
    h.estimate = r.normalized_effect->estimate;
    h.se = r.normalized_effect->se;
    h.ci_lower = r.normalized_effect->ci_lower;
    h.ci_upper = r.normalized_effect->ci_upper;
    out << "normalized,," << csv_number(h.estimate) << ',' << csv_number(h.se) << ',' << csv_number(h.ci_lower)
        << ',' << csv_number(h.ci_upper) << ",\n";
  }
}

void write_truth_csv(const GroundTruth& truth, const PanelDataset& data, std::ostream& out) {
  out << "group,time,effect,weight,cohort,horizon\n";
  for (const auto& c : truth.cells) {
    out << data.group_label(c.group) << ',' << c.time << ',' << format_number(c.effect) << ','
        << format_number(c.weight) << ',' << (c.cohort ? std::to_string(*c.cohort) : "") << ','
        << (c.horizon ? std::to_string(*c.horizon) : "") << '\n';
  }
}

}  // namespace hetdid
