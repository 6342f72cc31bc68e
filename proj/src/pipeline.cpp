#include "dial/pipeline.hpp"

namespace dial {

FeaturePool mock_llm_pool() {
    const auto base = FeaturePool::standard();
    return base.merged(parse_proposal_reply(MockProposalProvider::reply(), base.names()).features);
}

ExploredData explore_with_features(const EnvFactory& factory, const ExplorationConfig& config, std::uint64_t seed,
                                   ProposalProvider* provider, ProposalCache* cache) {
    ExploredData out{run_exploration(factory, config, seed), FeaturePool::standard(), std::nullopt};
    if (provider) {
        out.proposal = propose_llm_features(dataset_summary(out.data), *provider, out.pool.names(), cache);
        out.pool = out.pool.merged(out.proposal->features);
        out.data = recompute_features(out.data, out.pool);
    }
    return out;
}

TrainedGate explore_and_fit(const EnvFactory& factory, const ExplorationConfig& explore_config,
                            const GateConfig& gate_config, std::uint64_t seed, ProposalProvider* provider,
                            ProposalCache* cache) {
    TrainedGate t{explore_with_features(factory, explore_config, seed, provider, cache), {}};
    t.model = fit_gate(t.explored.data, gate_config, derive_seed(seed, "fit"));
    return t;
}

} // namespace dial
