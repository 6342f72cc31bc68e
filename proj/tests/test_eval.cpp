#include "dial/eval.hpp"
#include "dial/pipeline.hpp"
#include "dial/twosource_sim.hpp"

#include <doctest.h>

using namespace dial;
using eval::PolicySpec;

namespace {

sim::TwoSourceParams params(double p_i0, double noise = 0.1) {
    sim::TwoSourceParams p;
    p.p_i0 = p_i0;
    p.noise_sd = noise;
    return p;
}

eval::EvalOptions options(std::size_t n) {
    eval::EvalOptions o;
    o.n_episodes = n;
    return o;
}

const TrainedGate& trained() {
    static const TrainedGate t = [] {
        // The mock LLM features carry the type proxy; without them sigma alone is uninformative here.
        ExplorationConfig ex{0.5, 100, 5, 5, 3};
        MockProposalProvider mock;
        return explore_and_fit(sim::make_factory(params(0.5, 0.05)), ex, GateConfig{}, 3, &mock);
    }();
    return t;
}

eval::EvalResult result(double sr, double cost) {
    eval::EvalResult r;
    r.sr = sr;
    r.cost_x_base = cost;
    return r;
}

} // namespace

TEST_CASE("cost normalization identities") {
    const auto f = sim::make_factory(params(0.5));
    const auto base = eval::run_deployment(f, PolicySpec::base_only(), options(50), 1);
    CHECK(base.cost_x_base == 1.0);
    CHECK(base.trigger_rate == 0.0);
    CHECK(base.sr == 1.0);
    const auto always = eval::run_deployment(f, PolicySpec::always_trigger(), options(50), 1);
    CHECK(always.cost_x_base == doctest::Approx(6.0).epsilon(1e-12));
    CHECK(always.trigger_rate == 1.0);
    CHECK(always.total_steps == 500);
}

TEST_CASE("deployment is deterministic and seeded") {
    const auto f = sim::make_factory(params(0.5, 0.3));
    const auto p = PolicySpec::fixed_threshold("token_entropy", 1, 0.5);
    const auto a = eval::run_deployment(f, p, options(40), 9);
    const auto b = eval::run_deployment(f, p, options(40), 9);
    CHECK(a.episode_returns == b.episode_returns);
    CHECK(a.sr == b.sr);
    CHECK(a.cost_x_base == b.cost_x_base);
    CHECK(eval::run_deployment(f, p, options(40), 10).episode_returns != a.episode_returns);
}

TEST_CASE("policy construction errors") {
    CHECK_THROWS_AS(PolicySpec::fixed_threshold("token_entropy", 0, 0.5), InvalidArgument);
    CHECK_THROWS_AS(eval::run_deployment(sim::make_factory(params(0.5)), PolicySpec::base_only(), options(0), 1), InvalidArgument);
    const auto bad_signal = PolicySpec::fixed_threshold("no_such_field", 1, 0.5);
    CHECK_THROWS(eval::run_deployment(sim::make_factory(params(0.5)), bad_signal, options(5), 1));
}

TEST_CASE("a gate that never fires matches base_only") {
    REQUIRE(trained().model.nnz() > 0);
    auto silent = trained().model;
    silent.bias = -1e6;
    const auto f = sim::make_factory(params(0.5, 0.3));
    const auto g = eval::run_deployment(f, PolicySpec::dial(silent, trained().explored.pool), options(60), 4);
    const auto b = eval::run_deployment(f, PolicySpec::base_only(), options(60), 4);
    CHECK(g.triggered_steps == 0);
    CHECK(g.sr == b.sr);
    CHECK(g.episode_returns == b.episode_returns);
    CHECK(g.cost_x_base == 1.0);
}

TEST_CASE("Pareto dominance") {
    CHECK(eval::pareto_dominates(result(0.9, 2), result(0.8, 3)));
    CHECK_FALSE(eval::pareto_dominates(result(0.9, 2), result(0.9, 2)));
    CHECK_FALSE(eval::pareto_dominates(result(0.9, 3), result(0.8, 2)));
    CHECK(eval::pareto_dominates(result(0.9, 2), result(0.9, 3)));
}

TEST_CASE("per-step trigger profile") {
    const auto f = sim::make_factory(params(0.5));
    for (const auto& [policy, rate] : {std::pair{PolicySpec::always_trigger(), 1.0}, std::pair{PolicySpec::base_only(), 0.0}}) {
        const auto r = eval::run_deployment(f, policy, options(30), 2);
        const auto prof = eval::trigger_rate_by_step(r);
        REQUIRE(prof.size() == 10);
        for (const auto& s : prof) {
            CHECK(s.rate == rate);
            CHECK(s.visits == 30);
            CHECK(s.ci_low <= s.rate);
            CHECK(s.ci_high >= s.rate);
        }
    }
    CHECK_THROWS_AS(eval::trigger_rate_by_step(eval::run_deployment(f, PolicySpec::base_only(), options(29), 2)), InvalidArgument);
}

TEST_CASE("gate profile decays when late steps turn harmful") {
    auto p = params(0.1, 0.05);
    p.p_i_slope = 0.08;
    const auto f = sim::make_factory(p);
    const auto t = explore_and_fit(f, ExplorationConfig{0.5, 200, 5, 5, 3}, GateConfig{}, 5);
    const auto r = eval::run_deployment(f, PolicySpec::dial(t.model, t.explored.pool), options(500), 6);
    const auto prof = eval::trigger_rate_by_step(r);
    for (std::size_t i = 1; i < prof.size(); ++i) CHECK(prof[i].rate <= prof[i - 1].rate + 0.05);
    CHECK(prof.back().rate < prof.front().rate - 0.2);
}

TEST_CASE("reversed gate fires on the complement when the bias is zero") {
    auto m = trained().model;
    m.bias = 0.0;
    m.tau = 0.5;
    const auto pool = trained().explored.pool;
    const auto orig = PolicySpec::dial(m, pool);
    const auto rev = PolicySpec::reversed_dial(m, pool);
    const auto p = params(0.5, 0.05);
    std::size_t off_boundary = 0;
    for (const auto& s : sim::sample_states(p, 2000, 12)) {
        const auto o = sim::observe(p, s);
        const auto fv = pool.extract(o);
        std::vector<double> raw;
        for (const auto& name : m.feature_names) raw.push_back(fv.at(name));
        if (m.margin(raw) == 0.0) continue;
        ++off_boundary;
        CHECK(orig.decide(o) != rev.decide(o));
    }
    CHECK(off_boundary > 1900);
}

TEST_CASE("on a rollout-harmful mix the gate learns restraint") {
    auto p = params(0.8, 0.1);
    p.alpha = 3.0;
    const auto f = sim::make_factory(p);
    const auto t = explore_and_fit(f, ExplorationConfig{0.5, 100, 5, 5, 3}, GateConfig{}, 8);
    const auto base = eval::run_deployment(f, PolicySpec::base_only(), options(300), 9);
    const auto always = eval::run_deployment(f, PolicySpec::always_trigger(), options(300), 9);
    const auto dial = eval::run_deployment(f, PolicySpec::dial(t.model, t.explored.pool), options(300), 9);
    CHECK(always.sr < base.sr);
    CHECK(dial.sr >= base.sr - 0.02);
    CHECK(dial.trigger_rate < 1.0);
}

TEST_CASE("wrong-direction experiment shape and verdict") {
    std::vector<sim::TwoSourceParams> envs;
    for (double q : {0.0, 1.0, 0.5}) {
        auto p = params(0.5, 0.05);
        p.fidelity_q = q;
        envs.push_back(p);
    }
    eval::WrongDirectionConfig cfg;
    cfg.explore.n_episodes = 100;
    cfg.eval.n_episodes = 150;
    const auto r = eval::wrong_direction_experiment(envs, cfg, 3);
    REQUIRE(r.rows.size() == 3);
    for (std::size_t i = 1; i < 3; ++i) CHECK(r.rows[i - 1].rho_star <= r.rows[i].rho_star);
    for (const auto& row : r.rows) CHECK(row.delta_sr == doctest::Approx(row.sr_reversed - row.sr_dial));
    CHECK(r.rows.back().delta_sr < -0.15);
    CHECK(r.delta_weakly_decreasing);
    CHECK_THROWS_AS(eval::wrong_direction_experiment({envs[0], envs[1]}, cfg, 3), InvalidArgument);
}

TEST_CASE("counterexample preconditions and degenerate grid") {
    eval::Prop1Config cfg;
    cfg.explore.n_episodes = 60;
    cfg.eval.n_episodes = 60;
    CHECK_THROWS_AS(eval::prop1_counterexample(params(0.1), params(0.1), {0.5}, cfg, 1), InvalidArgument);
    CHECK_THROWS_AS(eval::prop1_counterexample(params(0.9), params(0.1), {0.5}, cfg, 1), InvalidArgument);
    const auto r = eval::prop1_counterexample(params(0.1, 0.0), params(0.9, 0.0), {0.5}, cfg, 1);
    CHECK(r.threshold_gates.size() == 2);
    CHECK(r.base_sr_a == 1.0);
    CHECK(r.nontrivial_gates <= 2);
    CHECK(eval::default_threshold_grid().size() == 41);
    CHECK(eval::default_threshold_grid().front() == 0.0);
    CHECK(eval::default_threshold_grid().back() == 1.0);
}

TEST_CASE("online adaptation schedule") {
    eval::OnlineConfig cfg;
    CHECK(cfg.override_probability(0) == doctest::Approx(0.1));
    CHECK(cfg.override_probability(50) == doctest::Approx(0.05));
    CHECK(cfg.override_probability(100) == 0.0);
    CHECK(cfg.override_probability(140) == 0.0);

    const auto& t = trained();
    const auto p = params(0.5, 0.05);
    const auto r = eval::online_adapt(sim::make_factory(p), t.model, t.explored.pool, t.explored.data, cfg, 4);
    std::vector<std::size_t> at;
    for (const auto& e : r.refits) at.push_back(e.episode);
    CHECK(at == std::vector<std::size_t>{30, 60, 90, 120});
    CHECK(r.overrides > 0);
    CHECK(r.episode_success.size() == 150);

    std::size_t agree = 0, n = 0;
    for (const auto& s : sim::sample_states(p, 2000, 77)) {
        const auto fv = t.explored.pool.extract(sim::observe(p, s));
        agree += gate_decide(t.model, fv) == gate_decide(r.final_model, fv);
        ++n;
    }
    CHECK(static_cast<double>(agree) / static_cast<double>(n) >= 0.9);
}

TEST_CASE("eval reports serialize") {
    const auto r = eval::run_deployment(sim::make_factory(params(0.5)), PolicySpec::always_trigger(), options(30), 1);
    const auto j = eval::to_json(r);
    CHECK(j["policy"] == "always_trigger");
    CHECK(j["cost_x_base"] == 6.0);
    std::ostringstream summary, profile;
    eval::write_summary_csv(summary, {r}, {{"seed", "1"}});
    eval::write_profile_csv(profile, {r});
    CHECK(summary.str().find("# seed: 1\npolicy,env,sr,cost_x_base,trigger_rate\n") == 0);
    CHECK(profile.str().rfind("policy,step_index,visits,triggers,rate,ci_low,ci_high", 0) == 0);
}
