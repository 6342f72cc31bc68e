#pragma once

#include "dial/environment.hpp"
#include "dial/features.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace dial {

struct ExplorationConfig {
    double eps = 0.5;
    std::size_t n_episodes = 50;
    std::size_t k_candidates = 5;
    std::size_t n_rollouts = 5;
    int rollout_horizon = 3;

    void validate() const;
};

/// One decision step seen during exploration. A utility label exists exactly
/// when the optimizer was triggered.
struct StepRecord {
    std::size_t episode_id = 0;
    int step_index = 0;
    Observation observation;
    bool triggered = false;
    std::optional<int> utility_label;
    double signal = 0.0;
    std::optional<LatentType> latent_type_debug;  // simulator only, never a feature
    std::vector<double> features;                 // aligned with LabeledDataset::feature_names
};

struct DatasetMeta {
    std::string env_id;
    std::uint64_t seed = 0;
    double eps = 0.0;
    std::size_t n_episodes = 0;
    int horizon = 0;
    std::size_t k_candidates = 0;
    std::size_t n_rollouts = 0;
    int rollout_horizon = 0;
    std::vector<FeatureSpec> feature_specs;         // pool the features were extracted with
    std::map<std::string, std::string> provenance;  // config/input digests, tool version
};

/// Every explored step (labeled or not) plus the feature-name ordering.
struct LabeledDataset {
    DatasetMeta meta;
    std::vector<std::string> feature_names;
    std::vector<StepRecord> steps;

    std::vector<std::size_t> labeled_indices() const;
    std::size_t labeled_count() const;
};

/// Rebuilds every record's feature vector from its stored raw observation.
LabeledDataset recompute_features(const LabeledDataset& d, const FeaturePool& pool);

struct PairedEstimate {
    double optimizer_value = 0.0;
    double base_value = 0.0;
    std::size_t optimizer_index = 0;
    int label = 0;
    std::string fork_digest;  // digest every rollout arm started from
};

/// 1 iff the optimizer's value strictly beats the base value.
inline int utility_label(double optimizer_value, double base_value) {
    return optimizer_value > base_value ? 1 : 0;
}

/// Scores the optimizer's pick and the base action from forks of `env`,
/// each as the mean of n_rollouts truncated returns of length `horizon`.
/// Rollout (candidate c, rollout r) is reseeded from derive_seed(seed, "rollout", c * n_rollouts + r).
PairedEstimate estimate_utility_paired(const Environment& env, std::size_t k_candidates, std::size_t n_rollouts,
                                       int horizon, std::uint64_t seed);

/// Bernoulli-eps exploration. Trigger coins come from their own stream and
/// never look at the observation.
LabeledDataset run_exploration(const EnvFactory& factory, const ExplorationConfig& config, std::uint64_t seed,
                               const FeaturePool& pool = FeaturePool::standard());

struct StepBucket {
    int step_index = 0;
    std::size_t steps = 0;
    std::size_t triggered = 0;
    std::size_t positive = 0;
};

struct ExampleState {
    std::size_t episode_id = 0;
    int step_index = 0;
    int label = 0;
    double signal = 0.0;
    std::string text;
    std::vector<std::pair<std::string, double>> features;
};

struct DatasetSummary {
    std::size_t episodes = 0;
    std::size_t steps = 0;
    std::size_t triggered = 0;
    std::size_t positive = 0;
    double trigger_rate = 0.0;
    double positive_fraction = 0.0;  // over labeled rows; 0 when none are labeled
    std::vector<StepBucket> per_step;
    std::vector<ExampleState> positive_examples;  // at most 5
    std::vector<ExampleState> negative_examples;  // at most 5

    /// Plain-text rendering placed into the feature-proposal prompt.
    std::string render() const;
    nlohmann::ordered_json to_json() const;
};

DatasetSummary dataset_summary(const LabeledDataset& d);

void write_dataset_jsonl(const LabeledDataset& d, std::ostream& out);
LabeledDataset read_dataset_jsonl(std::istream& in);

} // namespace dial
