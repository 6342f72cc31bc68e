#include "dial/config.hpp"

#include "dial/digest.hpp"

#include <cmath>
#include <fstream>
#include <set>

namespace dial {

using json = nlohmann::ordered_json;

std::string_view to_string(LlmLayer l) {
    switch (l) {
    case LlmLayer::off: return "off";
    case LlmLayer::mock: return "mock";
    case LlmLayer::external: return "external";
    }
    return "off";
}

namespace {

// Typed field reader that tracks the path for error messages.
class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(where() + ": expected an object");
    }

    void allow(std::initializer_list<const char*> keys) const {
        std::set<std::string> ok(keys.begin(), keys.end());
        for (const auto& [k, v] : j_.items()) {
            if (!ok.count(k)) throw ConfigError(sub(k) + ": unknown key");
        }
    }

    bool has(const char* key) const { return j_.contains(key) && !j_.at(key).is_null(); }
    const json& raw(const char* key) const { return j_.at(key); }
    std::string sub(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    double number(const char* key, double fallback) const {
        if (!has(key)) return fallback;
        if (!j_.at(key).is_number()) throw ConfigError(sub(key) + ": expected a number");
        return j_.at(key).get<double>();
    }

    template <typename T>
    T count(const char* key, T fallback) const {
        if (!has(key)) return fallback;
        const auto& v = j_.at(key);
        if (!v.is_number_integer() || v.get<long long>() < 0) throw ConfigError(sub(key) + ": expected a nonnegative integer");
        return static_cast<T>(v.get<unsigned long long>());
    }

    std::string string(const char* key, const std::string& fallback) const {
        if (!has(key)) return fallback;
        if (!j_.at(key).is_string()) throw ConfigError(sub(key) + ": expected a string");
        return j_.at(key).get<std::string>();
    }

private:
    std::string where() const { return path_.empty() ? "config" : path_; }
    const json& j_;
    std::string path_;
};

std::vector<double> number_list(const json& v, const std::string& path) {
    if (!v.is_array()) throw ConfigError(path + ": expected an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!v[i].is_number()) throw ConfigError(path + "[" + std::to_string(i) + "]: expected a number");
        out.push_back(v[i].get<double>());
    }
    return out;
}

PolicyEntry parse_policy(const json& v, const std::string& path) {
    PolicyEntry p;
    if (v.is_string()) {
        const auto s = v.get<std::string>();
        for (auto k : {eval::PolicyKind::base_only, eval::PolicyKind::always_trigger, eval::PolicyKind::dial,
                       eval::PolicyKind::reversed_dial}) {
            if (eval::to_string(k) == s) {
                p.kind = k;
                return p;
            }
        }
        throw ConfigError(path + ": unknown policy '" + s + "'");
    }
    Section s(v, path);
    s.allow({"kind", "signal", "direction", "theta"});
    const auto kind = s.string("kind", "");
    if (kind != "fixed_threshold") {
        return parse_policy(json(kind), path + ".kind");
    }
    p.kind = eval::PolicyKind::fixed_threshold;
    p.signal = s.string("signal", p.signal);
    const double dir = s.number("direction", 1);
    if (dir != 1 && dir != -1) throw ConfigError(s.sub("direction") + ": must be +1 or -1");
    p.direction = static_cast<int>(dir);
    p.theta = s.number("theta", p.theta);
    return p;
}

json policy_json(const PolicyEntry& p) {
    if (p.kind != eval::PolicyKind::fixed_threshold) return std::string(eval::to_string(p.kind));
    return {{"kind", "fixed_threshold"}, {"signal", p.signal}, {"direction", p.direction}, {"theta", p.theta}};
}

// Re-raises a module precondition failure under the section's path.
template <typename F>
void check(const std::string& section, F&& f) {
    try {
        f();
    } catch (const ConfigError&) {
        throw;
    } catch (const InvalidArgument& e) {
        throw ConfigError(section + ": " + e.what());
    }
}

} // namespace

void RunConfig::validate() const {
    check("environment", [&] { environment.validate(); });
    check("exploration", [&] { exploration.validate(); });
    check("gate", [&] { gate.validate(); });
    check("eval", [&] { eval.validate(); });
    if (verify.n_states < 10) throw ConfigError("verify.n_states: must be at least 10");
    if (verify.p_grid.empty()) throw ConfigError("verify.p_grid: must be non-empty");
    for (double p : verify.p_grid) {
        if (!(p >= 0 && p <= 1)) throw ConfigError("verify.p_grid: values must lie in [0, 1]");
    }
    if (verify.bootstrap < 100) throw ConfigError("verify.bootstrap: must be at least 100");
    if (!(verify.noise_sd >= 0)) throw ConfigError("verify.noise_sd: must be nonnegative");
    if (verify.temporal_episodes < 1) throw ConfigError("verify.temporal_episodes: must be positive");
    if (policies.empty()) throw ConfigError("eval.policies: must be non-empty");
    if (output_dir.empty()) throw ConfigError("output_dir: must be non-empty");
}

RunConfig parse_run_config(const json& j) {
    RunConfig c;
    Section top(j, "");
    top.allow({"environment", "exploration", "gate", "eval", "verify", "seed", "output_dir"});
    c.seed = top.count<std::uint64_t>("seed", c.seed);
    c.output_dir = top.string("output_dir", c.output_dir);

    if (top.has("environment")) {
        Section s(top.raw("environment"), "environment");
        s.allow({"kind", "alpha", "beta", "p_i0", "p_i_slope", "noise_sd", "fidelity_q", "horizon", "base_reward",
                 "success_threshold", "trigger_cost_units"});
        const auto kind = s.string("kind", "two_source");
        if (kind != "two_source") {
            throw ConfigError("environment.kind: '" + kind +
                              "' is not built in; external environments plug in through the library Environment interface");
        }
        auto& e = c.environment;
        e.alpha = s.number("alpha", e.alpha);
        e.beta = s.number("beta", e.beta);
        e.p_i0 = s.number("p_i0", e.p_i0);
        e.p_i_slope = s.number("p_i_slope", e.p_i_slope);
        e.noise_sd = s.number("noise_sd", e.noise_sd);
        e.fidelity_q = s.number("fidelity_q", e.fidelity_q);
        e.horizon = s.count<int>("horizon", e.horizon);
        e.base_reward = s.number("base_reward", e.base_reward);
        if (s.has("success_threshold")) e.success_threshold = s.number("success_threshold", 0.0);
        e.trigger_cost_units = s.number("trigger_cost_units", e.trigger_cost_units);
    }
    c.eval.trigger_cost_units = c.environment.trigger_cost_units;

    if (top.has("exploration")) {
        Section s(top.raw("exploration"), "exploration");
        s.allow({"eps", "n_episodes", "k_candidates", "n_rollouts", "rollout_horizon"});
        auto& x = c.exploration;
        x.eps = s.number("eps", x.eps);
        x.n_episodes = s.count<std::size_t>("n_episodes", x.n_episodes);
        x.k_candidates = s.count<std::size_t>("k_candidates", x.k_candidates);
        x.n_rollouts = s.count<std::size_t>("n_rollouts", x.n_rollouts);
        x.rollout_horizon = s.count<int>("rollout_horizon", x.rollout_horizon);
    }

    if (top.has("gate")) {
        Section s(top.raw("gate"), "gate");
        s.allow({"regularizer", "c_grid", "folds", "tau_mode", "tau", "mi_k", "mi_bins", "features", "llm_layer", "llm_cache"});
        auto& g = c.gate;
        try {
            g.regularizer = regularizer_from_string(s.string("regularizer", std::string(to_string(g.regularizer))));
        } catch (const InvalidArgument& e) {
            throw ConfigError(std::string("gate.regularizer: ") + e.what());
        }
        if (s.has("c_grid")) g.c_grid = number_list(s.raw("c_grid"), "gate.c_grid");
        g.folds = s.count<std::size_t>("folds", g.folds);
        const auto tau_mode = s.string("tau_mode", "fixed");
        if (tau_mode == "fixed") {
            g.tau_mode = TauMode::fixed;
        } else if (tau_mode == "cv") {
            g.tau_mode = TauMode::cv;
        } else {
            throw ConfigError("gate.tau_mode: expected 'fixed' or 'cv'");
        }
        g.tau = s.number("tau", g.tau);
        g.mi_k = s.count<std::size_t>("mi_k", g.mi_k);
        g.mi_bins = s.count<std::size_t>("mi_bins", g.mi_bins);
        if (s.has("features")) {
            const auto& f = s.raw("features");
            if (!f.is_array()) throw ConfigError("gate.features: expected an array of names");
            for (std::size_t i = 0; i < f.size(); ++i) {
                if (!f[i].is_string()) throw ConfigError("gate.features[" + std::to_string(i) + "]: expected a string");
                g.features.push_back(f[i].get<std::string>());
            }
        }
        const auto layer = s.string("llm_layer", "off");
        if (layer == "off") {
            c.llm_layer = LlmLayer::off;
        } else if (layer == "mock") {
            c.llm_layer = LlmLayer::mock;
        } else if (layer == "external") {
            c.llm_layer = LlmLayer::external;
        } else {
            throw ConfigError("gate.llm_layer: expected 'off', 'mock' or 'external'");
        }
        if (s.has("llm_cache")) c.llm_cache = s.string("llm_cache", "");
    }

    if (top.has("eval")) {
        Section s(top.raw("eval"), "eval");
        s.allow({"policies", "n_episodes", "trigger_cost_units", "k_candidates"});
        if (s.has("policies")) {
            const auto& p = s.raw("policies");
            if (!p.is_array()) throw ConfigError("eval.policies: expected an array");
            c.policies.clear();
            for (std::size_t i = 0; i < p.size(); ++i) c.policies.push_back(parse_policy(p[i], "eval.policies[" + std::to_string(i) + "]"));
        }
        c.eval.n_episodes = s.count<std::size_t>("n_episodes", c.eval.n_episodes);
        c.eval.trigger_cost_units = s.number("trigger_cost_units", c.eval.trigger_cost_units);
        c.eval.k_candidates = s.count<std::size_t>("k_candidates", c.eval.k_candidates);
    }

    if (top.has("verify")) {
        Section s(top.raw("verify"), "verify");
        s.allow({"n_states", "noise_sd", "p_grid", "drift_slope", "temporal_episodes", "bootstrap"});
        auto& v = c.verify;
        v.n_states = s.count<std::size_t>("n_states", v.n_states);
        v.noise_sd = s.number("noise_sd", v.noise_sd);
        if (s.has("p_grid")) v.p_grid = number_list(s.raw("p_grid"), "verify.p_grid");
        v.drift_slope = s.number("drift_slope", v.drift_slope);
        v.temporal_episodes = s.count<std::size_t>("temporal_episodes", v.temporal_episodes);
        v.bootstrap = s.count<std::size_t>("bootstrap", v.bootstrap);
    }

    c.validate();
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": not valid JSON: " + e.what());
    }
    return parse_run_config(j);
}

json to_json(const RunConfig& c) {
    const auto& e = c.environment;
    json env = {{"kind", "two_source"},         {"alpha", e.alpha},       {"beta", e.beta},
                {"p_i0", e.p_i0},               {"p_i_slope", e.p_i_slope}, {"noise_sd", e.noise_sd},
                {"fidelity_q", e.fidelity_q},   {"horizon", e.horizon},   {"base_reward", e.base_reward},
                {"success_threshold", e.success_threshold ? json(*e.success_threshold) : json(nullptr)},
                {"trigger_cost_units", e.trigger_cost_units}};
    const auto& x = c.exploration;
    json ex = {{"eps", x.eps}, {"n_episodes", x.n_episodes}, {"k_candidates", x.k_candidates},
               {"n_rollouts", x.n_rollouts}, {"rollout_horizon", x.rollout_horizon}};
    const auto& g = c.gate;
    json gate = {{"regularizer", std::string(to_string(g.regularizer))},
                 {"c_grid", g.c_grid},
                 {"folds", g.folds},
                 {"tau_mode", g.tau_mode == TauMode::cv ? "cv" : "fixed"},
                 {"tau", g.tau},
                 {"mi_k", g.mi_k},
                 {"mi_bins", g.mi_bins},
                 {"features", g.features},
                 {"llm_layer", std::string(to_string(c.llm_layer))},
                 {"llm_cache", c.llm_cache ? json(*c.llm_cache) : json(nullptr)}};
    json policies = json::array();
    for (const auto& p : c.policies) policies.push_back(policy_json(p));
    json ev = {{"policies", policies}, {"n_episodes", c.eval.n_episodes},
               {"trigger_cost_units", c.eval.trigger_cost_units}, {"k_candidates", c.eval.k_candidates}};
    const auto& v = c.verify;
    json ver = {{"n_states", v.n_states}, {"noise_sd", v.noise_sd}, {"p_grid", v.p_grid},
                {"drift_slope", v.drift_slope}, {"temporal_episodes", v.temporal_episodes}, {"bootstrap", v.bootstrap}};
    return {{"environment", env}, {"exploration", ex}, {"gate", gate}, {"eval", ev},
            {"verify", ver},      {"seed", c.seed},    {"output_dir", c.output_dir}};
}

std::string config_digest(const RunConfig& c) {
    json j = to_json(c);
    j.erase("output_dir");  // where results go does not change them
    return sha256_hex(j.dump());
}

void set_config_field(RunConfig& c, const std::string& path, double value) {
    json j = to_json(c);
    const auto dot = path.find('.');
    if (dot == std::string::npos) throw ConfigError(path + ": sweep axis must be section.field");
    const auto section = path.substr(0, dot), field = path.substr(dot + 1);
    if (!j.contains(section) || !j[section].is_object() || !j[section].contains(field)) {
        throw ConfigError(path + ": unknown field");
    }
    auto& slot = j[section][field];
    if (slot.is_number_integer() || slot.is_number_unsigned()) {
        if (value != std::floor(value) || value < 0) throw ConfigError(path + ": expects a nonnegative integer");
        slot = static_cast<unsigned long long>(value);
    } else if (slot.is_number() || slot.is_null()) {
        slot = value;
    } else {
        throw ConfigError(path + ": not a numeric field");
    }
    c = parse_run_config(j);
}

} // namespace dial
