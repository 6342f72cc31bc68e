#pragma once

#include "dial/feature_dsl.hpp"
#include "dial/observation.hpp"

#include <nlohmann/json.hpp>

#include <string>
#include <vector>

namespace dial {

enum class FeatureSource { universal, derived, llm };

std::string_view to_string(FeatureSource s);
FeatureSource feature_source_from_string(std::string_view s);

/// One candidate feature. Universal and derived features use builtin
/// extractors ("builtin:<name>"); LLM-proposed ones carry a DSL expression.
struct FeatureSpec {
    std::string name;
    FeatureSource source = FeatureSource::universal;
    std::string extractor;
    double default_value = 0.0;

    bool operator==(const FeatureSpec&) const = default;
};

void to_json(nlohmann::ordered_json& j, const FeatureSpec& s);
void from_json(const nlohmann::ordered_json& j, FeatureSpec& s);

/// Feature values with their names, in pool order.
struct FeatureVector {
    std::vector<std::string> names;
    std::vector<double> values;

    std::size_t size() const { return values.size(); }
    /// Value by name; throws InvalidArgument if absent.
    double at(std::string_view name) const;
};

inline const std::vector<std::string> kUniversalFeatures = {
    "step_count", "token_entropy", "evidence_count", "num_available_actions", "is_finish"};
inline const std::vector<std::string> kDerivedFeatures = {"step_ratio", "entropy_sq", "step_x_entropy"};

/// Universal features; signals the observation does not expose read as 0.
FeatureVector extract_universal(const Observation& obs);

/// Appends step_ratio, entropy_sq and step_x_entropy to a universal vector.
FeatureVector derive_features(const FeatureVector& base, int max_steps);

/// Evaluates an LLM feature's DSL expression (parsed on every call; use
/// FeaturePool for repeated extraction).
DslResult evaluate_dsl(const FeatureSpec& spec, const Observation& obs);

std::vector<FeatureSpec> universal_specs();
std::vector<FeatureSpec> derived_specs();

/// An ordered candidate pool with compiled extractors. Extraction is a pure
/// function of the observation.
class FeaturePool {
public:
    FeaturePool() = default;
    /// Throws InvalidArgument on duplicate names, DslParseError on bad expressions.
    explicit FeaturePool(std::vector<FeatureSpec> specs);

    /// universal + derived, the pool exploration records by default.
    static FeaturePool standard();

    const std::vector<FeatureSpec>& specs() const { return specs_; }
    std::vector<std::string> names() const;
    std::size_t size() const { return specs_.size(); }

    FeatureVector extract(const Observation& obs) const;

    /// Pool with `extra` appended; names must stay unique.
    FeaturePool merged(const std::vector<FeatureSpec>& extra) const;

private:
    std::vector<FeatureSpec> specs_;
    std::vector<std::optional<DslExpression>> compiled_;
};

} // namespace dial
