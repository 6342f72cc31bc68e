#include "dial/eval.hpp"

#include "dial/random.hpp"
#include "dial/stats.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <random>
#include <sstream>

namespace dial::eval {

using json = nlohmann::ordered_json;

std::string_view to_string(PolicyKind k) {
    switch (k) {
    case PolicyKind::base_only: return "base_only";
    case PolicyKind::always_trigger: return "always_trigger";
    case PolicyKind::fixed_threshold: return "fixed_threshold";
    case PolicyKind::dial: return "dial";
    case PolicyKind::reversed_dial: return "reversed_dial";
    }
    return "base_only";
}

PolicySpec PolicySpec::base_only() { return PolicySpec{}; }

PolicySpec PolicySpec::always_trigger() {
    PolicySpec p;
    p.kind = PolicyKind::always_trigger;
    return p;
}

PolicySpec PolicySpec::fixed_threshold(std::string signal, int direction, double theta) {
    if (direction != 1 && direction != -1) throw InvalidArgument("fixed_threshold direction must be +1 or -1");
    PolicySpec p;
    p.kind = PolicyKind::fixed_threshold;
    p.signal = std::move(signal);
    p.direction = direction;
    p.theta = theta;
    return p;
}

PolicySpec PolicySpec::dial(GateModel model, FeaturePool pool) {
    PolicySpec p;
    p.kind = PolicyKind::dial;
    p.model = std::make_shared<const GateModel>(std::move(model));
    p.pool = std::make_shared<const FeaturePool>(std::move(pool));
    return p;
}

PolicySpec PolicySpec::reversed_dial(const GateModel& model, FeaturePool pool) {
    PolicySpec p = dial(reverse_direction(model), std::move(pool));
    p.kind = PolicyKind::reversed_dial;
    return p;
}

std::string PolicySpec::name() const {
    if (kind != PolicyKind::fixed_threshold) return std::string(to_string(kind));
    std::ostringstream os;
    os << "fixed_threshold(" << signal << (direction > 0 ? ">" : "<") << theta << ")";
    return os.str();
}

bool PolicySpec::decide(const Observation& obs) const {
    switch (kind) {
    case PolicyKind::base_only: return false;
    case PolicyKind::always_trigger: return true;
    case PolicyKind::fixed_threshold: {
        const auto v = obs.numeric_field(signal);
        if (!v) throw InvalidArgument("observation has no numeric field '" + signal + "'");
        return direction * (*v - theta) > 0;
    }
    case PolicyKind::dial:
    case PolicyKind::reversed_dial:
        if (!model || !pool) throw InvalidArgument("dial policy without a model and feature pool");
        return gate_decide(*model, pool->extract(obs));
    }
    return false;
}

void EvalOptions::validate() const {
    if (n_episodes < 1) throw InvalidArgument("eval.n_episodes must be at least 1");
    if (!(trigger_cost_units > 0)) throw InvalidArgument("eval.trigger_cost_units must be positive");
    if (k_candidates < 2) throw InvalidArgument("eval.k_candidates must be at least 2");
}

namespace {

struct EpisodeOutcome {
    double ret = 0.0;
    double cost = 0.0;
    bool success = false;
    std::vector<bool> triggers;
};

EpisodeOutcome run_episode(Environment& env, const PolicySpec& policy, const EvalOptions& o, std::size_t episode) {
    EpisodeOutcome out;
    while (!env.done()) {
        const int t = env.step_index();
        try {
            const bool trig = policy.decide(env.observe());
            out.ret += env.step(trig, o.k_candidates);
            out.cost += 1.0 + (trig ? o.trigger_cost_units : 0.0);
            out.triggers.push_back(trig);
        } catch (const EnvironmentFault&) {
            throw;
        } catch (const InvalidArgument&) {
            throw;
        } catch (const std::exception& e) {
            throw EnvironmentFault(episode, t, e.what());
        }
    }
    out.success = env.success(out.ret);
    return out;
}

std::vector<StepProfile> profile(const std::vector<std::size_t>& visits, const std::vector<std::size_t>& triggers) {
    std::vector<StepProfile> out;
    for (std::size_t t = 0; t < visits.size(); ++t) {
        if (visits[t] == 0) continue;
        StepProfile p;
        p.step_index = static_cast<int>(t);
        p.visits = visits[t];
        p.triggers = triggers[t];
        p.rate = static_cast<double>(triggers[t]) / static_cast<double>(visits[t]);
        std::tie(p.ci_low, p.ci_high) = stats::wilson_interval(triggers[t], visits[t]);
        out.push_back(p);
    }
    return out;
}

std::string num(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

void provenance_lines(std::ostream& out, const std::map<std::string, std::string>& provenance) {
    for (const auto& [k, v] : provenance) out << "# " << k << ": " << v << '\n';
}

double wilson_lower(std::size_t k, std::size_t n) { return stats::wilson_interval(k, n).first; }

} // namespace

EvalResult run_deployment(const EnvFactory& factory, const PolicySpec& policy, const EvalOptions& options,
                          std::uint64_t seed) {
    options.validate();
    EvalResult r;
    r.policy = policy.name();
    r.n_episodes = options.n_episodes;
    r.seed = seed;
    double cost_sum = 0.0, base_cost_sum = 0.0;
    std::vector<std::size_t> visits, triggers;
    const PolicySpec base = PolicySpec::base_only();
    for (std::size_t e = 0; e < options.n_episodes; ++e) {
        const auto ep_seed = derive_seed(seed, "deploy", e);
        auto env = factory(ep_seed);
        if (e == 0) r.env_id = env->id();
        const auto out = run_episode(*env, policy, options, e);
        cost_sum += out.cost;
        if (policy.kind == PolicyKind::base_only) {
            base_cost_sum += out.cost;
        } else {
            auto base_env = factory(ep_seed);
            base_cost_sum += run_episode(*base_env, base, options, e).cost;
        }
        r.successes += out.success ? 1 : 0;
        r.episode_returns.push_back(out.ret);
        for (std::size_t t = 0; t < out.triggers.size(); ++t) {
            if (visits.size() <= t) visits.resize(t + 1, 0), triggers.resize(t + 1, 0);
            ++visits[t];
            if (out.triggers[t]) ++triggers[t], ++r.triggered_steps;
            ++r.total_steps;
        }
    }
    const double n = static_cast<double>(options.n_episodes);
    r.sr = static_cast<double>(r.successes) / n;
    r.mean_cost = cost_sum / n;
    r.base_mean_cost = base_cost_sum / n;
    r.cost_x_base = cost_sum / base_cost_sum;
    r.trigger_rate = r.total_steps ? static_cast<double>(r.triggered_steps) / static_cast<double>(r.total_steps) : 0.0;
    r.per_step_trigger = profile(visits, triggers);
    return r;
}

bool pareto_dominates(const EvalResult& a, const EvalResult& b) {
    const bool weak = a.sr >= b.sr && a.cost_x_base <= b.cost_x_base;
    const bool strict = a.sr > b.sr || a.cost_x_base < b.cost_x_base;
    return weak && strict;
}

std::vector<StepProfile> trigger_rate_by_step(const EvalResult& result) {
    if (result.n_episodes < 30) {
        throw InvalidArgument("per-step trigger profile needs at least 30 episodes, got " +
                              std::to_string(result.n_episodes));
    }
    return result.per_step_trigger;
}

WrongDirectionReport wrong_direction_experiment(const std::vector<sim::TwoSourceParams>& envs,
                                                const WrongDirectionConfig& config, std::uint64_t seed) {
    if (envs.size() < 3) throw InvalidArgument("wrong-direction experiment needs at least 3 environments");
    MockProposalProvider mock;
    WrongDirectionReport rep;
    for (std::size_t i = 0; i < envs.size(); ++i) {
        const auto& p = envs[i];
        const auto factory = sim::make_factory(p);
        const auto env_seed = derive_seed(seed, "wrong_direction", i);
        const auto trained = explore_and_fit(factory, config.explore, config.gate, env_seed, &mock);
        const auto& model = trained.model;

        WrongDirectionRow row;
        row.params = p;
        std::size_t dom = 0;
        for (std::size_t j = 1; j < model.weights.size(); ++j) {
            if (std::abs(model.weights[j]) > std::abs(model.weights[dom])) dom = j;
        }
        row.dominant_feature = model.feature_names[dom];
        const auto dm = labeled_design(trained.explored.data);
        const auto col = std::find(dm.names.begin(), dm.names.end(), row.dominant_feature) - dm.names.begin();
        const Eigen::VectorXd x = dm.x.col(col);
        const auto rho = stats::spearman(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())),
                                         std::span<const double>(dm.y.data(), static_cast<std::size_t>(dm.y.size())));
        row.rho_star = rho.defined ? std::abs(rho.rho) : 0.0;

        const auto eval_seed = derive_seed(seed, "wrong_direction_eval", i);
        const auto orig = run_deployment(factory, PolicySpec::dial(model, trained.explored.pool), config.eval, eval_seed);
        const auto rev = run_deployment(factory, PolicySpec::reversed_dial(model, trained.explored.pool), config.eval, eval_seed);
        row.sr_dial = orig.sr;
        row.sr_reversed = rev.sr;
        row.delta_sr = rev.sr - orig.sr;
        row.trigger_rate_dial = orig.trigger_rate;
        rep.rows.push_back(row);
    }
    std::stable_sort(rep.rows.begin(), rep.rows.end(), [](const auto& a, const auto& b) { return a.rho_star < b.rho_star; });
    rep.delta_weakly_decreasing = true;
    for (std::size_t i = 1; i < rep.rows.size(); ++i) {
        if (rep.rows[i].delta_sr > rep.rows[i - 1].delta_sr) rep.delta_weakly_decreasing = false;
    }
    return rep;
}

std::vector<double> default_threshold_grid() {
    std::vector<double> g;
    for (int k = 0; k <= 40; ++k) g.push_back(k / 40.0);
    return g;
}

Prop1Report prop1_counterexample(const sim::TwoSourceParams& env_a, const sim::TwoSourceParams& env_b,
                                 const std::vector<double>& thresholds, const Prop1Config& config, std::uint64_t seed) {
    env_a.validate();
    env_b.validate();
    if (!(env_a.p_i0 < env_a.p_i_star())) {
        throw InvalidArgument("prop1: env A must be Type-D dominated (p_i0 < p_i* = " + num(env_a.p_i_star()) + ")");
    }
    if (!(env_b.p_i0 > env_b.p_i_star())) {
        throw InvalidArgument("prop1: env B must be Type-I dominated (p_i0 > p_i* = " + num(env_b.p_i_star()) + ")");
    }
    if (thresholds.empty()) throw InvalidArgument("prop1: threshold grid is empty");

    const auto fa = sim::make_factory(env_a), fb = sim::make_factory(env_b);
    const auto seed_a = derive_seed(seed, "prop1_eval", 0), seed_b = derive_seed(seed, "prop1_eval", 1);
    const std::size_t n = config.eval.n_episodes;
    Prop1Report rep;
    rep.base_sr_a = run_deployment(fa, PolicySpec::base_only(), config.eval, seed_a).sr;
    rep.base_sr_b = run_deployment(fb, PolicySpec::base_only(), config.eval, seed_b).sr;

    for (int dir : {1, -1}) {
        for (double theta : thresholds) {
            const auto policy = PolicySpec::fixed_threshold("token_entropy", dir, theta);
            const auto ra = run_deployment(fa, policy, config.eval, seed_a);
            const auto rb = run_deployment(fb, policy, config.eval, seed_b);
            ThresholdGateOutcome g;
            g.direction = dir;
            g.theta = theta;
            g.sr_a = ra.sr;
            g.sr_b = rb.sr;
            g.lower_a = wilson_lower(ra.successes, n);
            g.lower_b = wilson_lower(rb.successes, n);
            g.triggers_a = ra.triggered_steps;
            g.triggers_b = rb.triggered_steps;
            g.trivial = ra.triggered_steps == 0 && rb.triggered_steps == 0;
            g.passes_a = g.lower_a >= rep.base_sr_a - config.margin;
            g.passes_b = g.lower_b >= rep.base_sr_b - config.margin;
            if (!g.trivial) {
                ++rep.nontrivial_gates;
                if (g.passes_a && g.passes_b) ++rep.sigma_gates_passing_both;
            }
            rep.threshold_gates.push_back(g);
        }
    }

    // One gate for both environments, fitted on their pooled exploration data.
    MockProposalProvider mock;
    auto da = explore_with_features(fa, config.explore, derive_seed(seed, "prop1_explore", 0), &mock);
    auto db = explore_with_features(fb, config.explore, derive_seed(seed, "prop1_explore", 1), &mock);
    LabeledDataset pooled = da.data;
    for (auto rec : db.data.steps) {
        rec.episode_id += da.data.meta.n_episodes;
        pooled.steps.push_back(std::move(rec));
    }
    const auto model = fit_gate(pooled, config.gate, derive_seed(seed, "prop1_fit"));
    const auto dial = PolicySpec::dial(model, da.pool);
    const auto ra = run_deployment(fa, dial, config.eval, seed_a);
    const auto rb = run_deployment(fb, dial, config.eval, seed_b);
    rep.dial_sr_a = ra.sr;
    rep.dial_sr_b = rb.sr;
    rep.dial_lower_a = wilson_lower(ra.successes, n);
    rep.dial_lower_b = wilson_lower(rb.successes, n);
    rep.dial_trigger_rate_a = ra.trigger_rate;
    rep.dial_trigger_rate_b = rb.trigger_rate;
    rep.dial_passes_both = rep.dial_lower_a >= rep.base_sr_a - config.margin &&
                           rep.dial_lower_b >= rep.base_sr_b - config.margin &&
                           (ra.triggered_steps + rb.triggered_steps) > 0;
    rep.counterexample_holds = rep.sigma_gates_passing_both == 0 && rep.dial_passes_both;
    return rep;
}

double OnlineConfig::override_probability(std::size_t episode) const {
    if (episode >= decay_episodes) return 0.0;
    return eps0 * (1.0 - static_cast<double>(episode) / static_cast<double>(decay_episodes));
}

OnlineResult online_adapt(const EnvFactory& factory, const GateModel& initial_model, const FeaturePool& pool,
                          const LabeledDataset& initial, const OnlineConfig& config, std::uint64_t seed) {
    if (config.refit_every < 1) throw InvalidArgument("online: refit_every must be positive");
    if (initial_model.feature_names != initial.feature_names) {
        throw InvalidArgument("online: initial dataset features do not match the model's");
    }
    OnlineResult res;
    res.final_model = initial_model;
    LabeledDataset data = initial;
    std::size_t added = 0;

    for (std::size_t e = 0; e < config.n_episodes; ++e) {
        if (e > 0 && e % config.refit_every == 0) {
            RefitEvent ev;
            ev.episode = e;
            ev.samples = data.labeled_count();
            try {
                res.final_model = fit_gate(data, config.gate, derive_seed(seed, "online_fit", e));
                ev.refit = true;
                ev.note = "refit on " + std::to_string(ev.samples) + " labeled rows (" + std::to_string(added) +
                          " from overrides)";
            } catch (const SingleClassError&) {
                ev.note = "skipped: accumulated labels have a single class";
            } catch (const InvalidArgument& err) {
                ev.note = std::string("skipped: ") + err.what();
            }
            res.refits.push_back(ev);
        }

        const double eps = config.override_probability(e);
        auto env = factory(derive_seed(seed, "online_episode", e));
        std::mt19937_64 coin(derive_seed(seed, "online_coin", e));
        double ret = 0.0;
        while (!env->done()) {
            const int t = env->step_index();
            const Observation obs = env->observe();
            const FeatureVector fv = pool.extract(obs);
            bool trig;
            const bool override_step = uniform01(coin) < eps;
            const bool override_trigger = uniform01(coin) < config.override_trigger_prob;
            if (override_step) {
                ++res.overrides;
                trig = override_trigger;
                if (trig) {
                    const auto est = estimate_utility_paired(
                        *env, config.k_candidates, config.n_rollouts, config.rollout_horizon,
                        derive_seed(seed, "online_paired", e * static_cast<std::uint64_t>(env->max_steps() + 1) +
                                                               static_cast<std::uint64_t>(t)));
                    StepRecord rec;
                    rec.episode_id = initial.meta.n_episodes + e;
                    rec.step_index = t;
                    rec.observation = obs;
                    rec.triggered = true;
                    rec.utility_label = est.label;
                    rec.signal = obs.signal;
                    rec.latent_type_debug = env->latent_type();
                    for (const auto& name : data.feature_names) rec.features.push_back(fv.at(name));
                    data.steps.push_back(std::move(rec));
                    ++added;
                }
            } else {
                trig = gate_decide(res.final_model, fv);
            }
            ret += env->step(trig, config.k_candidates);
            ++res.total_steps;
            if (trig) ++res.triggered_steps;
        }
        const bool ok = env->success(ret);
        res.successes += ok ? 1 : 0;
        res.episode_success.push_back(ok ? 1 : 0);
    }
    return res;
}

json to_json(const EvalResult& r) {
    json j;
    j["policy"] = r.policy;
    j["env"] = r.env_id;
    j["n_episodes"] = r.n_episodes;
    j["seed"] = r.seed;
    j["sr"] = r.sr;
    j["successes"] = r.successes;
    j["cost_x_base"] = r.cost_x_base;
    j["mean_cost"] = r.mean_cost;
    j["base_mean_cost"] = r.base_mean_cost;
    j["trigger_rate"] = r.trigger_rate;
    j["triggered_steps"] = r.triggered_steps;
    j["total_steps"] = r.total_steps;
    json prof = json::array();
    for (const auto& p : r.per_step_trigger) {
        prof.push_back({{"step_index", p.step_index}, {"visits", p.visits}, {"triggers", p.triggers}, {"rate", p.rate},
                        {"ci_low", p.ci_low}, {"ci_high", p.ci_high}});
    }
    j["per_step_trigger"] = prof;
    return j;
}

json to_json(const WrongDirectionReport& r) {
    json rows = json::array();
    for (const auto& w : r.rows) {
        rows.push_back({{"p_i0", w.params.p_i0},
                        {"noise_sd", w.params.noise_sd},
                        {"fidelity_q", w.params.fidelity_q},
                        {"dominant_feature", w.dominant_feature},
                        {"rho_star", w.rho_star},
                        {"sr_dial", w.sr_dial},
                        {"sr_reversed", w.sr_reversed},
                        {"delta_sr", w.delta_sr},
                        {"trigger_rate_dial", w.trigger_rate_dial}});
    }
    return {{"rows", rows}, {"delta_weakly_decreasing", r.delta_weakly_decreasing}};
}

json to_json(const Prop1Report& r) {
    json gates = json::array();
    for (const auto& g : r.threshold_gates) {
        gates.push_back({{"direction", g.direction}, {"theta", g.theta}, {"sr_a", g.sr_a}, {"sr_b", g.sr_b},
                         {"lower_a", g.lower_a}, {"lower_b", g.lower_b}, {"trivial", g.trivial},
                         {"passes_a", g.passes_a}, {"passes_b", g.passes_b}});
    }
    return {{"base_sr_a", r.base_sr_a},
            {"base_sr_b", r.base_sr_b},
            {"nontrivial_gates", r.nontrivial_gates},
            {"sigma_gates_passing_both", r.sigma_gates_passing_both},
            {"dial", {{"sr_a", r.dial_sr_a}, {"sr_b", r.dial_sr_b}, {"lower_a", r.dial_lower_a},
                      {"lower_b", r.dial_lower_b}, {"trigger_rate_a", r.dial_trigger_rate_a},
                      {"trigger_rate_b", r.dial_trigger_rate_b}, {"passes_both", r.dial_passes_both}}},
            {"counterexample_holds", r.counterexample_holds},
            {"threshold_gates", gates}};
}

json to_json(const OnlineResult& r) {
    json refits = json::array();
    for (const auto& ev : r.refits) {
        refits.push_back({{"episode", ev.episode}, {"samples", ev.samples}, {"refit", ev.refit}, {"note", ev.note}});
    }
    return {{"overrides", r.overrides},
            {"successes", r.successes},
            {"episodes", r.episode_success.size()},
            {"triggered_steps", r.triggered_steps},
            {"total_steps", r.total_steps},
            {"refits", refits},
            {"final_model", dial::to_json(r.final_model)}};
}

void write_summary_csv(std::ostream& out, const std::vector<EvalResult>& results,
                       const std::map<std::string, std::string>& provenance) {
    provenance_lines(out, provenance);
    out << "policy,env,sr,cost_x_base,trigger_rate\n";
    for (const auto& r : results) {
        out << r.policy << ',' << r.env_id << ',' << num(r.sr) << ',' << num(r.cost_x_base) << ',' << num(r.trigger_rate)
            << '\n';
    }
}

void write_profile_csv(std::ostream& out, const std::vector<EvalResult>& results,
                       const std::map<std::string, std::string>& provenance) {
    provenance_lines(out, provenance);
    out << "policy,step_index,visits,triggers,rate,ci_low,ci_high\n";
    for (const auto& r : results) {
        for (const auto& p : r.per_step_trigger) {
            out << r.policy << ',' << p.step_index << ',' << p.visits << ',' << p.triggers << ',' << num(p.rate) << ','
                << num(p.ci_low) << ',' << num(p.ci_high) << '\n';
        }
    }
}

} // namespace dial::eval
