#pragma once

#include <json.hpp>

#include "nexus/align.hpp"
#include "nexus/growth.hpp"
#include "nexus/model.hpp"
#include "nexus/stats.hpp"

namespace nexus {

// JSON views of library types. Non-finite doubles become null.

nlohmann::json model_config_to_json(const ModelConfig& cfg);
/// Missing keys keep their defaults; unknown keys are rejected.
ModelConfig model_config_from_json(const nlohmann::json& j);

nlohmann::json growth_report_to_json(const GrowthReport& r);
nlohmann::json harmonic_to_json(const HarmonicFit& f);
nlohmann::json fisher_to_json(const FisherGResult& f);
nlohmann::json scaling_to_json(const ScalingFit& f, bool degenerate);

/// Throws ValidationError listing keys of `j` outside `allowed`.
void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                         const char* where);

}  // namespace nexus
