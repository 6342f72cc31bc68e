#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

namespace dial {

/// What a gate may see of a decision step. Environments fill the fields they
/// expose; everything else stays empty and defaults to zero downstream.
struct Observation {
    int step_count = 0;
    int max_steps = 0;
    double signal = 0.0;  // the gating signal (token entropy for LLM agents)
    std::optional<double> evidence_count;
    std::optional<double> num_available_actions;
    bool is_finish = false;
    std::string text;
    std::map<std::string, double> extra;  // environment-specific numeric fields

    /// Numeric field lookup used by the feature DSL. Accepts the canonical
    /// names plus the aliases `token_entropy` (= signal) and `num_options`.
    std::optional<double> numeric_field(std::string_view name) const;

    bool operator==(const Observation&) const = default;
};

void to_json(nlohmann::ordered_json& j, const Observation& o);
void from_json(const nlohmann::ordered_json& j, Observation& o);

} // namespace dial
