#pragma once

#include "dial/gate.hpp"
#include "dial/pipeline.hpp"
#include "dial/twosource_sim.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

namespace dial::eval {

enum class PolicyKind { base_only, always_trigger, fixed_threshold, dial, reversed_dial };
std::string_view to_string(PolicyKind k);

/// A gating policy. Fixed-threshold policies fire iff direction * (signal - theta) > 0;
/// dial policies extract features with `pool` and ask the model.
struct PolicySpec {
    PolicyKind kind = PolicyKind::base_only;
    std::string signal = "token_entropy";
    int direction = 1;
    double theta = 0.5;
    std::shared_ptr<const GateModel> model;
    std::shared_ptr<const FeaturePool> pool;

    static PolicySpec base_only();
    static PolicySpec always_trigger();
    /// Throws InvalidArgument unless direction is +1 or -1.
    static PolicySpec fixed_threshold(std::string signal, int direction, double theta);
    static PolicySpec dial(GateModel model, FeaturePool pool);
    /// The dial policy with every weight negated.
    static PolicySpec reversed_dial(const GateModel& model, FeaturePool pool);

    std::string name() const;
    bool decide(const Observation& obs) const;
};

struct StepProfile {
    int step_index = 0;
    std::size_t visits = 0;
    std::size_t triggers = 0;
    double rate = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
};

struct EvalOptions {
    std::size_t n_episodes = 500;
    double trigger_cost_units = 5.0;
    std::size_t k_candidates = 5;

    void validate() const;
};

struct EvalResult {
    std::string policy;
    std::string env_id;
    std::size_t n_episodes = 0;
    std::uint64_t seed = 0;
    std::size_t successes = 0;
    double sr = 0.0;
    double mean_cost = 0.0;
    double base_mean_cost = 0.0;
    double cost_x_base = 0.0;
    std::size_t total_steps = 0;
    std::size_t triggered_steps = 0;
    double trigger_rate = 0.0;
    std::vector<StepProfile> per_step_trigger;
    std::vector<double> episode_returns;
};

/// Runs `policy` for n episodes. Episode e uses factory(derive_seed(seed, "deploy", e)),
/// so every policy evaluated with the same seed sees the same episodes. A step
/// costs 1 unit, plus trigger_cost_units when triggered; cost_x_base divides the
/// mean episode cost by that of base_only on the same episodes.
EvalResult run_deployment(const EnvFactory& factory, const PolicySpec& policy, const EvalOptions& options,
                          std::uint64_t seed);

/// SR_a >= SR_b and cost_a <= cost_b with at least one strict.
bool pareto_dominates(const EvalResult& a, const EvalResult& b);

/// Per-step trigger probabilities with 95% Wilson intervals. Throws
/// InvalidArgument below 30 episodes.
std::vector<StepProfile> trigger_rate_by_step(const EvalResult& result);

struct WrongDirectionConfig {
    ExplorationConfig explore{0.5, 200, 5, 5, 3};
    GateConfig gate;
    EvalOptions eval;
};

struct WrongDirectionRow {
    sim::TwoSourceParams params;
    std::string dominant_feature;
    double rho_star = 0.0;  // |spearman(dominant feature, label)| on the exploration data
    double sr_dial = 0.0;
    double sr_reversed = 0.0;
    double delta_sr = 0.0;  // reversed - original
    double trigger_rate_dial = 0.0;
};

struct WrongDirectionReport {
    std::vector<WrongDirectionRow> rows;  // sorted by rho_star
    bool delta_weakly_decreasing = false;
};

/// Fits a mock-LLM-feature gate per environment and compares it with its reversal.
/// Throws InvalidArgument with fewer than 3 environments.
WrongDirectionReport wrong_direction_experiment(const std::vector<sim::TwoSourceParams>& envs,
                                                const WrongDirectionConfig& config, std::uint64_t seed);

struct Prop1Config {
    ExplorationConfig explore{0.5, 200, 5, 5, 3};
    GateConfig gate;
    EvalOptions eval;
    double margin = 0.01;  // passes: Wilson lower bound >= base SR - margin
};

struct ThresholdGateOutcome {
    int direction = 1;
    double theta = 0.0;
    double sr_a = 0.0, sr_b = 0.0;
    double lower_a = 0.0, lower_b = 0.0;
    std::size_t triggers_a = 0, triggers_b = 0;
    bool trivial = false;  // never fires in either env: identical to base_only
    bool passes_a = false, passes_b = false;
};

struct Prop1Report {
    double base_sr_a = 0.0, base_sr_b = 0.0;
    std::vector<ThresholdGateOutcome> threshold_gates;
    std::size_t nontrivial_gates = 0;
    std::size_t sigma_gates_passing_both = 0;
    double dial_sr_a = 0.0, dial_sr_b = 0.0;
    double dial_lower_a = 0.0, dial_lower_b = 0.0;
    double dial_trigger_rate_a = 0.0, dial_trigger_rate_b = 0.0;
    bool dial_passes_both = false;
    bool counterexample_holds = false;  // no sigma-only gate passes both, the dial gate does
};

/// Enumerates sigma-only threshold gates (both directions over `thresholds`)
/// and one multi-feature gate fitted on pooled exploration data from both envs.
/// Throws InvalidArgument unless env A is Type-D dominated (p_i0 < p_i*) and
/// env B Type-I dominated (p_i0 > p_i*).
Prop1Report prop1_counterexample(const sim::TwoSourceParams& env_a, const sim::TwoSourceParams& env_b,
                                 const std::vector<double>& thresholds, const Prop1Config& config, std::uint64_t seed);

/// k/40 for k = 0..40.
std::vector<double> default_threshold_grid();

struct OnlineConfig {
    std::size_t n_episodes = 150;
    std::size_t refit_every = 30;
    double eps0 = 0.1;
    std::size_t decay_episodes = 100;
    double override_trigger_prob = 0.5;
    std::size_t k_candidates = 5;
    std::size_t n_rollouts = 5;
    int rollout_horizon = 3;
    GateConfig gate;
    double trigger_cost_units = 5.0;

    /// eps0 * (1 - e / decay_episodes), 0 from decay_episodes on.
    double override_probability(std::size_t episode) const;
};

struct RefitEvent {
    std::size_t episode = 0;
    std::size_t samples = 0;
    bool refit = false;
    std::string note;
};

struct OnlineResult {
    GateModel final_model;
    std::vector<RefitEvent> refits;
    std::size_t overrides = 0;
    std::size_t successes = 0;
    std::size_t triggered_steps = 0;
    std::size_t total_steps = 0;
    std::vector<int> episode_success;
};

/// Deploys the gate with decaying random overrides. Overridden steps trigger
/// with override_trigger_prob; triggered overrides are labeled by paired
/// estimation and join `initial` for refits every refit_every episodes.
/// A refit whose data has a single class is skipped and logged.
OnlineResult online_adapt(const EnvFactory& factory, const GateModel& initial_model, const FeaturePool& pool,
                          const LabeledDataset& initial, const OnlineConfig& config, std::uint64_t seed);

nlohmann::ordered_json to_json(const EvalResult& r);
nlohmann::ordered_json to_json(const WrongDirectionReport& r);
nlohmann::ordered_json to_json(const Prop1Report& r);
nlohmann::ordered_json to_json(const OnlineResult& r);

/// policy,env,sr,cost_x_base,trigger_rate
void write_summary_csv(std::ostream& out, const std::vector<EvalResult>& results,
                       const std::map<std::string, std::string>& provenance = {});
/// policy,step_index,visits,triggers,rate,ci_low,ci_high
void write_profile_csv(std::ostream& out, const std::vector<EvalResult>& results,
                       const std::map<std::string, std::string>& provenance = {});

} // namespace dial::eval
