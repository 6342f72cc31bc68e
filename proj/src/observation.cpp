#include "dial/observation.hpp"

namespace dial {

std::optional<double> Observation::numeric_field(std::string_view name) const {
    if (name == "step_count") return static_cast<double>(step_count);
    if (name == "max_steps") return static_cast<double>(max_steps);
    if (name == "signal" || name == "token_entropy") return signal;
    if (name == "evidence_count") return evidence_count;
    if (name == "num_available_actions" || name == "num_options") return num_available_actions;
    if (name == "is_finish") return is_finish ? 1.0 : 0.0;
    if (auto it = extra.find(std::string(name)); it != extra.end()) return it->second;
    return std::nullopt;
}

void to_json(nlohmann::ordered_json& j, const Observation& o) {
    j = nlohmann::ordered_json::object();
    j["step_count"] = o.step_count;
    j["max_steps"] = o.max_steps;
    j["signal"] = o.signal;
    j["evidence_count"] = o.evidence_count ? nlohmann::ordered_json(*o.evidence_count) : nlohmann::ordered_json(nullptr);
    j["num_available_actions"] =
        o.num_available_actions ? nlohmann::ordered_json(*o.num_available_actions) : nlohmann::ordered_json(nullptr);
    j["is_finish"] = o.is_finish;
    j["text"] = o.text;
    j["extra"] = nlohmann::ordered_json::object();
    for (const auto& [k, v] : o.extra) j["extra"][k] = v;
}

void from_json(const nlohmann::ordered_json& j, Observation& o) {
    o = Observation{};
    o.step_count = j.at("step_count").get<int>();
    o.max_steps = j.value("max_steps", 0);
    o.signal = j.at("signal").get<double>();
    if (j.contains("evidence_count") && !j["evidence_count"].is_null())
        o.evidence_count = j["evidence_count"].get<double>();
    if (j.contains("num_available_actions") && !j["num_available_actions"].is_null())
        o.num_available_actions = j["num_available_actions"].get<double>();
    o.is_finish = j.value("is_finish", false);
    o.text = j.value("text", std::string{});
    if (j.contains("extra")) {
        for (const auto& [k, v] : j["extra"].items()) o.extra[k] = v.get<double>();
    }
}

} // namespace dial
