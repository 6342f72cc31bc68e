#pragma once

#include "dial/explore.hpp"
#include "dial/gate.hpp"
#include "dial/proposal.hpp"

#include <cstdint>

namespace dial {

/// Universal + derived features plus the mock provider's five LLM features.
FeaturePool mock_llm_pool();

/// Explores with the standard pool; when `provider` is given, asks it for
/// five extra features and recomputes every record with the merged pool.
struct ExploredData {
    LabeledDataset data;
    FeaturePool pool;
    std::optional<FeatureProposal> proposal;
};

ExploredData explore_with_features(const EnvFactory& factory, const ExplorationConfig& config, std::uint64_t seed,
                                   ProposalProvider* provider = nullptr, ProposalCache* cache = nullptr);

struct TrainedGate {
    ExploredData explored;
    GateModel model;
};

/// Explore, optionally propose features, then fit with seed derive_seed(seed, "fit").
TrainedGate explore_and_fit(const EnvFactory& factory, const ExplorationConfig& explore_config,
                            const GateConfig& gate_config, std::uint64_t seed, ProposalProvider* provider = nullptr,
                            ProposalCache* cache = nullptr);

} // namespace dial
