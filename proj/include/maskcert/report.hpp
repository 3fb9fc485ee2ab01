#pragma once

// JSON / CSV forms of plans, certification results, metrics and attack
// reports. Schemas are documented in docs/reports.md.

#include <ostream>
#include <string>

#include <json.hpp>

#include "maskcert/adversary.hpp"
#include "maskcert/certifier.hpp"
#include "maskcert/mask_plan.hpp"

namespace maskcert {

using Json = nlohmann::ordered_json;

Json plan_to_json(const MaskPlan& plan);
Json certified_to_json(const CertifiedOutput& out);
Json metrics_to_json(const EvalMetrics& metrics);
Json placement_to_json(const PixelRect& rect);
// `verbose` adds the per-trial log.
Json attack_to_json(const AttackReport& report, bool verbose);

inline constexpr const char* kCsvHeader = "id,label,prediction,verified,num_dissent";
std::string csv_row(const std::string& id, std::size_t label, const CertifiedOutput& out);

}  // namespace maskcert
