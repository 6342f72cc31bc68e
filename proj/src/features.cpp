#include "dial/features.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace dial {

std::string_view to_string(FeatureSource s) {
    switch (s) {
    case FeatureSource::universal: return "universal";
    case FeatureSource::derived: return "derived";
    case FeatureSource::llm: return "llm";
    }
    return "?";
}

FeatureSource feature_source_from_string(std::string_view s) {
    if (s == "universal") return FeatureSource::universal;
    if (s == "derived") return FeatureSource::derived;
    if (s == "llm") return FeatureSource::llm;
    throw InvalidArgument("unknown feature source '" + std::string(s) + "'");
}

void to_json(nlohmann::ordered_json& j, const FeatureSpec& s) {
    j = nlohmann::ordered_json{{"name", s.name},
                               {"source", to_string(s.source)},
                               {"extractor", s.extractor},
                               {"default_value", s.default_value}};
}

void from_json(const nlohmann::ordered_json& j, FeatureSpec& s) {
    s.name = j.at("name").get<std::string>();
    s.source = feature_source_from_string(j.at("source").get<std::string>());
    s.extractor = j.at("extractor").get<std::string>();
    s.default_value = j.value("default_value", 0.0);
}

double FeatureVector::at(std::string_view name) const {
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (names[i] == name) return values[i];
    }
    throw InvalidArgument("feature '" + std::string(name) + "' not in vector");
}

FeatureVector extract_universal(const Observation& obs) {
    if (!std::isfinite(obs.signal)) throw InvalidArgument("observation signal is not finite");
    FeatureVector v;
    v.names = kUniversalFeatures;
    v.values = {static_cast<double>(obs.step_count), obs.signal, obs.evidence_count.value_or(0.0),
                obs.num_available_actions.value_or(0.0), obs.is_finish ? 1.0 : 0.0};
    return v;
}

FeatureVector derive_features(const FeatureVector& base, int max_steps) {
    if (max_steps < 1) throw InvalidArgument("derive_features: max_steps must be >= 1");
    const double step = base.at("step_count");
    const double entropy = base.at("token_entropy");
    FeatureVector out = base;
    out.names.insert(out.names.end(), kDerivedFeatures.begin(), kDerivedFeatures.end());
    out.values.push_back(step / static_cast<double>(max_steps));
    out.values.push_back(entropy * entropy);
    out.values.push_back(step * entropy);
    return out;
}

DslResult evaluate_dsl(const FeatureSpec& spec, const Observation& obs) {
    return DslExpression::parse(spec.extractor).evaluate(obs);
}

std::vector<FeatureSpec> universal_specs() {
    std::vector<FeatureSpec> out;
    for (const auto& n : kUniversalFeatures) out.push_back({n, FeatureSource::universal, "builtin:" + n, 0.0});
    return out;
}

std::vector<FeatureSpec> derived_specs() {
    std::vector<FeatureSpec> out;
    for (const auto& n : kDerivedFeatures) out.push_back({n, FeatureSource::derived, "builtin:" + n, 0.0});
    return out;
}

FeaturePool::FeaturePool(std::vector<FeatureSpec> specs) : specs_(std::move(specs)) {
    std::set<std::string> seen;
    for (const auto& s : specs_) {
        if (s.name.empty()) throw InvalidArgument("feature name must be non-empty");
        if (!seen.insert(s.name).second) throw InvalidArgument("duplicate feature name '" + s.name + "'");
        if (s.source == FeatureSource::llm) {
            compiled_.emplace_back(DslExpression::parse(s.extractor));
        } else {
            const std::string builtin = s.extractor.rfind("builtin:", 0) == 0 ? s.extractor.substr(8) : "";
            const bool known =
                std::find(kUniversalFeatures.begin(), kUniversalFeatures.end(), builtin) != kUniversalFeatures.end() ||
                std::find(kDerivedFeatures.begin(), kDerivedFeatures.end(), builtin) != kDerivedFeatures.end();
            if (!known) throw InvalidArgument("unknown builtin extractor '" + s.extractor + "'");
            compiled_.emplace_back(std::nullopt);
        }
    }
}

FeaturePool FeaturePool::standard() {
    auto specs = universal_specs();
    auto derived = derived_specs();
    specs.insert(specs.end(), derived.begin(), derived.end());
    return FeaturePool(std::move(specs));
}

std::vector<std::string> FeaturePool::names() const {
    std::vector<std::string> out;
    out.reserve(specs_.size());
    for (const auto& s : specs_) out.push_back(s.name);
    return out;
}

FeatureVector FeaturePool::extract(const Observation& obs) const {
    const FeatureVector universal = extract_universal(obs);
    std::optional<FeatureVector> derived;
    FeatureVector out;
    out.names.reserve(specs_.size());
    out.values.reserve(specs_.size());
    for (std::size_t i = 0; i < specs_.size(); ++i) {
        const auto& s = specs_[i];
        double v = s.default_value;
        if (compiled_[i]) {
            v = compiled_[i]->evaluate(obs).value;
        } else {
            const std::string builtin = s.extractor.substr(8);
            if (std::find(kDerivedFeatures.begin(), kDerivedFeatures.end(), builtin) != kDerivedFeatures.end()) {
                if (!derived) derived = derive_features(universal, obs.max_steps);
                v = derived->at(builtin);
            } else {
                v = universal.at(builtin);
            }
        }
        if (!std::isfinite(v)) v = s.default_value;
        out.names.push_back(s.name);
        out.values.push_back(v);
    }
    return out;
}

FeaturePool FeaturePool::merged(const std::vector<FeatureSpec>& extra) const {
    auto specs = specs_;
    specs.insert(specs.end(), extra.begin(), extra.end());
    return FeaturePool(std::move(specs));
}

} // namespace dial
