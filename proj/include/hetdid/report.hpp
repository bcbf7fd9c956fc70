#pragma once

#include <iosfwd>
#include <json.hpp>
#include <string>

#include "hetdid/diagnostics.hpp"
#include "hetdid/dynamic_estimators.hpp"
#include "hetdid/inference.hpp"
#include "hetdid/sim.hpp"
#include "hetdid/static_estimators.hpp"

namespace hetdid {

using Json = nlohmann::ordered_json;

inline constexpr const char* kReportSchema = "hetdid.report/1";

std::string toolkit_version();

Json to_json(const WeightTable& table, const PanelDataset& data);
Json to_json(const DecompositionReport& report);
Json to_json(const ContaminationTable& table, const PanelDataset& data);
Json to_json(const EventStudyFit& fit);
Json to_json(const DidMResult& result);
Json to_json(const EventStudyResult& result);
Json to_json(const ImputationResult& result, const PanelDataset& data);
Json to_json(const GroundTruth& truth, const PanelDataset& data);
Json to_json(const BootstrapResult& result);

/// {"schema", "command", "toolkit_version", "reproducibility", "result"}.
Json make_report(const std::string& command, const Json& reproducibility, const Json& result);

void write_weights_csv(const WeightTable& table, const PanelDataset& data, std::ostream& out);
void write_decomposition_csv(const DecompositionReport& report, std::ostream& out);
void write_event_study_fit_csv(const EventStudyFit& fit, std::ostream& out);

/// kind,horizon,estimate,se,ci_lower,ci_upper,n; placebos at negative horizons.
void write_estimates_csv(const EventStudyResult& result, std::ostream& out);
void write_truth_csv(const GroundTruth& truth, const PanelDataset& data, std::ostream& out);

}  // namespace hetdid
