#pragma once

#include "dial/environment.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace dial::sim {

/// Generative parameters of the Two-Source environment.
///
/// Each decision step is independently Type I (utility falls with the
/// signal, slope -alpha) with probability p_I(t) = clamp(p_i0 + p_i_slope*t, 0, 1),
/// and Type D (utility rises with the signal, slope +beta) otherwise.
struct TwoSourceParams {
    double alpha = 1.0;
    double beta = 1.0;
    double p_i0 = 0.5;
    double p_i_slope = 0.0;
    double noise_sd = 0.1;
    double fidelity_q = 1.0;
    int horizon = 10;
    double base_reward = 1.0;
    /// Episode succeeds when its return reaches this. Unset means
    /// horizon * base_reward, i.e. "no net harm from triggering".
    std::optional<double> success_threshold;
    double trigger_cost_units = 5.0;

    /// Throws InvalidArgument on non-positive slopes, horizon < 1, or
    /// out-of-range probabilities.
    void validate() const;
    double p_i(int step) const;
    double success_cutoff() const;
    /// beta / (alpha + beta): the mixture at which the aggregate correlation crosses zero.
    double p_i_star() const { return beta / (alpha + beta); }

    bool operator==(const TwoSourceParams&) const = default;
};

struct SimState {
    int step_index = 0;
    LatentType latent_type = LatentType::decision_difficult;
    double signal = 0.0;
    int type_proxy = 0;  // 1 suggests Type D, 0 suggests Type I
    int num_options = 0;
    double true_utility = 0.0;
};

/// Reward of one step: base_reward, plus the state's utility when the
/// optimizer was triggered.
double step_return(const TwoSourceParams& params, const SimState& state, bool triggered);

/// The observation a gate sees. Latent type and utility are never included.
Observation observe(const TwoSourceParams& params, const SimState& state);

enum class MixtureShift { info_poor, info_rich };

/// info_poor raises p_i0 by delta (more Type I states); info_rich lowers it.
TwoSourceParams intervene_mixture(const TwoSourceParams& params, MixtureShift mode, double delta);

/// One episode of the Two-Source model. Copyable; a copy is an independent fork.
///
/// The state sequence is a function of the seed alone: trigger decisions
/// change rewards, never which states appear.
class TwoSourceEpisode {
public:
    TwoSourceEpisode(TwoSourceParams params, std::uint64_t seed);

    const TwoSourceParams& params() const { return params_; }
    const SimState& state() const { return state_; }
    bool done() const { return state_.step_index >= params_.horizon; }
    double total_return() const { return total_return_; }

    /// Collects the step reward and moves to the next state.
    double step(bool triggered);
    void reseed(std::uint64_t seed);
    std::string digest() const;

private:
    void draw_state(int step_index);

    TwoSourceParams params_;
    std::mt19937_64 rng_;
    SimState state_;
    double total_return_ = 0.0;
};

TwoSourceEpisode spawn_episode(const TwoSourceParams& params, std::uint64_t seed);

/// Environment adapter. Candidate 0 is the base action; every other candidate
/// is an optimizer proposal whose realized effect is the state's true utility.
class TwoSourceEnv final : public Environment {
public:
    TwoSourceEnv(TwoSourceParams params, std::uint64_t seed) : episode_(spawn_episode(params, seed)) {}

    std::string id() const override { return "two_source"; }
    bool done() const override { return episode_.done(); }
    int step_index() const override { return episode_.state().step_index; }
    int max_steps() const override { return episode_.params().horizon; }
    Observation observe() const override;
    std::vector<Action> candidate_actions(std::size_t k) const override;
    std::size_t optimizer_choice(std::span<const Action> candidates) const override;
    double execute(const Action& a) override;
    std::unique_ptr<Environment> fork() const override { return std::make_unique<TwoSourceEnv>(*this); }
    void reseed(std::uint64_t seed) override { episode_.reseed(seed); }
    std::string state_digest() const override { return episode_.digest(); }
    bool success(double episode_return) const override;
    std::optional<LatentType> latent_type() const override;

    const TwoSourceEpisode& episode() const { return episode_; }

private:
    TwoSourceEpisode episode_;
};

EnvFactory make_factory(const TwoSourceParams& params);

/// States visited by whole untriggered episodes, episode e seeded with
/// derive_seed(seed, "states", e), truncated to n states.
std::vector<SimState> sample_states(const TwoSourceParams& params, std::size_t n, std::uint64_t seed);

} // namespace dial::sim
