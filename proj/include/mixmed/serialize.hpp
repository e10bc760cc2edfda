#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "mixmed/bkmr.hpp"
#include "mixmed/bkmr_cma.hpp"
#include "mixmed/ersma.hpp"
#include "mixmed/mediation.hpp"
#include "mixmed/pcma.hpp"
#include "mixmed/sim.hpp"

namespace mixmed {

using json = nlohmann::json;

/// Shortest text that parses back to the same double; "NA" for NaN.
std::string format_double(double value);

std::uint64_t fnv1a64(std::string_view bytes);
/// First 12 hex digits of the FNV-1a hash.
std::string content_hash12(std::string_view bytes);

/// Minimal CSV table; cells are quoted when they contain a comma, quote or newline.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::string str() const;
};

json to_json(const Effect& e);
json to_json(const MediationEffects& e);
json to_json(const PosteriorSummary& s);
json to_json(const MethodSummary& s);
json to_json(const ReplicateRecord& r);

/// One row per exposure/PC: exposure, method, effect, estimate, se, ci_lo, ci_hi, p.
CsvTable effects_table(const std::vector<MediationEffects>& effects);
CsvTable scree_table(const PcaModel& model);
CsvTable loadings_table(const PcaModel& model, const std::vector<std::string>& exposure_names);
CsvTable pip_table(const BkmrFit& fit, const Pips& pips);
/// effect, mean, sd, lo, hi (forest-plot data).
CsvTable posterior_table(const PosteriorEffects& effects);
CsvTable records_table(const std::vector<ReplicateRecord>& records);
CsvTable summary_table(const std::vector<MethodSummary>& summaries);
/// Long format: scenario, method, metric, mean, sd.
CsvTable long_metrics_table(const std::vector<MethodSummary>& summaries);

json ers_model_to_json(const ErsModel& model);
ErsModel ers_model_from_json(const json& j);

/// Full chain artifact: config, seed, training data and every stored draw.
json bkmr_fit_to_json(const BkmrFit& fit);
BkmrFit bkmr_fit_from_json(const json& j);

json metrics_to_json(const MetricsReport& report);
MetricsReport metrics_from_json(const json& j);

} // namespace mixmed
