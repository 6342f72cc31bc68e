#include "dial/twosource_sim.hpp"

#include "dial/digest.hpp"
#include "dial/random.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace dial::sim {

void TwoSourceParams::validate() const {
    auto fail = [](const std::string& msg) { throw InvalidArgument("TwoSourceParams: " + msg); };
    if (!(alpha > 0.0)) fail("alpha must be > 0");
    if (!(beta > 0.0)) fail("beta must be > 0");
    if (!(p_i0 >= 0.0 && p_i0 <= 1.0)) fail("p_i0 must lie in [0,1]");
    if (!std::isfinite(p_i_slope)) fail("p_i_slope must be finite");
    if (!(noise_sd >= 0.0) || !std::isfinite(noise_sd)) fail("noise_sd must be >= 0");
    if (!(fidelity_q >= 0.0 && fidelity_q <= 1.0)) fail("fidelity_q must lie in [0,1]");
    if (horizon < 1) fail("horizon must be >= 1");
    if (!std::isfinite(base_reward)) fail("base_reward must be finite");
    if (success_threshold && !std::isfinite(*success_threshold)) fail("success_threshold must be finite");
    if (!(trigger_cost_units > 0.0)) fail("trigger_cost_units must be > 0");
}

double TwoSourceParams::p_i(int step) const { return std::clamp(p_i0 + p_i_slope * step, 0.0, 1.0); }

double TwoSourceParams::success_cutoff() const {
    return success_threshold.value_or(static_cast<double>(horizon) * base_reward);
}

double step_return(const TwoSourceParams& params, const SimState& state, bool triggered) {
    return triggered ? params.base_reward + state.true_utility : params.base_reward;
}

Observation observe(const TwoSourceParams& params, const SimState& state) {
    Observation o;
    o.step_count = state.step_index;
    o.max_steps = params.horizon;
    o.signal = state.signal;
    o.num_available_actions = static_cast<double>(state.num_options);
    o.is_finish = state.step_index == params.horizon - 1;
    o.extra["type_proxy"] = static_cast<double>(state.type_proxy);

    std::ostringstream text;
    text << "step " << state.step_index << "/" << params.horizon << ": " << state.num_options
         << " options available; "
         << (state.type_proxy ? "several viable candidates remain" : "key evidence is still missing");
    if (o.is_finish) text << "; finish proposed";
    o.text = text.str();
    return o;
}

TwoSourceParams intervene_mixture(const TwoSourceParams& params, MixtureShift mode, double delta) {
    if (!(delta >= 0.0 && delta <= 1.0)) throw InvalidArgument("mixture delta must lie in [0,1]");
    TwoSourceParams out = params;
    out.p_i0 = mode == MixtureShift::info_poor ? params.p_i0 + delta : params.p_i0 - delta;
    if (out.p_i0 < 0.0 || out.p_i0 > 1.0) {
        throw InvalidArgument("mixture intervention moves p_i0 outside [0,1]");
    }
    return out;
}

TwoSourceEpisode::TwoSourceEpisode(TwoSourceParams params, std::uint64_t seed)
    : params_(std::move(params)), rng_(seed) {
    params_.validate();
    draw_state(0);
}

TwoSourceEpisode spawn_episode(const TwoSourceParams& params, std::uint64_t seed) {
    return TwoSourceEpisode(params, seed);
}

void TwoSourceEpisode::draw_state(int step_index) {
    // Fixed draw order keeps the stream identical regardless of parameter values.
    const double u_type = uniform01(rng_);
    const double signal = uniform01(rng_);
    const double z = standard_normal(rng_);
    const double u_proxy = uniform01(rng_);
    const int options = uniform_int(rng_, 2, 6);

    state_.step_index = step_index;
    state_.latent_type = u_type < params_.p_i(step_index) ? LatentType::intervention_unsuitable
                                                          : LatentType::decision_difficult;
    state_.signal = signal;
    const double eps = params_.noise_sd * z;
    state_.true_utility = state_.latent_type == LatentType::intervention_unsuitable
                              ? -params_.alpha * signal + eps
                              : params_.beta * signal + eps;
    const int indicator = state_.latent_type == LatentType::decision_difficult ? 1 : 0;
    state_.type_proxy = u_proxy < 0.5 * (1.0 + params_.fidelity_q) ? indicator : 1 - indicator;
    state_.num_options = options;
}

double TwoSourceEpisode::step(bool triggered) {
    if (done()) throw Error("step called on a finished episode");
    const double r = step_return(params_, state_, triggered);
    total_return_ += r;
    const int next = state_.step_index + 1;
    if (next < params_.horizon) {
        draw_state(next);
    } else {
        state_.step_index = next;
    }
    return r;
}

void TwoSourceEpisode::reseed(std::uint64_t seed) { rng_.seed(seed); }

std::string TwoSourceEpisode::digest() const {
    std::ostringstream ss;
    ss.precision(17);
    ss << params_.alpha << ' ' << params_.beta << ' ' << params_.p_i0 << ' ' << params_.p_i_slope << ' '
       << params_.noise_sd << ' ' << params_.fidelity_q << ' ' << params_.horizon << ' '
       << params_.base_reward << ' ' << params_.success_cutoff() << '|' << state_.step_index << ' '
       << static_cast<int>(state_.latent_type) << ' ' << state_.signal << ' ' << state_.type_proxy << ' '
       << state_.num_options << ' ' << state_.true_utility << '|' << total_return_ << '|' << rng_;
    return sha256_hex(ss.str());
}

Observation TwoSourceEnv::observe() const { return sim::observe(episode_.params(), episode_.state()); }

std::vector<Action> TwoSourceEnv::candidate_actions(std::size_t k) const {
    std::vector<Action> out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i) out.push_back(Action{static_cast<int>(i)});
    return out;
}

std::size_t TwoSourceEnv::optimizer_choice(std::span<const Action> candidates) const {
    if (candidates.size() < 2) throw InvalidArgument("optimizer needs at least two candidates");
    return 1;
}

double TwoSourceEnv::execute(const Action& a) { return episode_.step(a.id != kBaseAction.id); }

bool TwoSourceEnv::success(double episode_return) const {
    const double cutoff = episode_.params().success_cutoff();
    return episode_return >= cutoff - 1e-9 * std::max(1.0, std::abs(cutoff));
}

std::optional<LatentType> TwoSourceEnv::latent_type() const {
    if (episode_.done()) return std::nullopt;
    return episode_.state().latent_type;
}

EnvFactory make_factory(const TwoSourceParams& params) {
    params.validate();
    return [params](std::uint64_t seed) -> std::unique_ptr<Environment> {
        return std::make_unique<TwoSourceEnv>(params, seed);
    };
}

std::vector<SimState> sample_states(const TwoSourceParams& params, std::size_t n, std::uint64_t seed) {
    params.validate();
    std::vector<SimState> out;
    out.reserve(n);
    for (std::uint64_t e = 0; out.size() < n; ++e) {
        TwoSourceEpisode ep(params, derive_seed(seed, "states", e));
        while (!ep.done() && out.size() < n) {
            out.push_back(ep.state());
            ep.step(false);
        }
    }
    return out;
}

} // namespace dial::sim
