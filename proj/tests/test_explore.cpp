#include "dial/explore.hpp"
#include "dial/stats.hpp"
#include "dial/twosource_sim.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>

using namespace dial;

namespace {

// Deterministic stand-in: the optimizer's action pays `opt`, the base pays `base`.
class ScriptedEnv final : public Environment {
public:
    ScriptedEnv(double opt, double base, bool forkable = true, int fail_at = -1)
        : opt_(opt), base_(base), forkable_(forkable), fail_at_(fail_at) {}

    std::string id() const override { return "scripted"; }
    bool done() const override { return t_ >= 4; }
    int step_index() const override { return t_; }
    int max_steps() const override { return 4; }
    Observation observe() const override {
        Observation o;
        o.step_count = t_;
        o.max_steps = 4;
        o.signal = 0.25 * t_;
        return o;
    }
    std::vector<Action> candidate_actions(std::size_t k) const override {
        std::vector<Action> a;
        for (std::size_t i = 0; i < k; ++i) a.push_back({static_cast<int>(i)});
        return a;
    }
    std::size_t optimizer_choice(std::span<const Action>) const override { return 1; }
    double execute(const Action& a) override {
        if (t_ == fail_at_) throw std::runtime_error("scripted failure");
        ++t_;
        return a.id == 0 ? base_ : opt_;
    }
    bool supports_fork() const override { return forkable_; }
    std::unique_ptr<Environment> fork() const override { return std::make_unique<ScriptedEnv>(*this); }
    void reseed(std::uint64_t) override {}
    std::string state_digest() const override { return std::to_string(t_); }
    bool success(double r) const override { return r >= 4 * base_; }

private:
    double opt_, base_;
    bool forkable_;
    int fail_at_;
    int t_ = 0;
};

EnvFactory scripted(double opt, double base, bool forkable = true, int fail_at = -1) {
    return [=](std::uint64_t) { return std::make_unique<ScriptedEnv>(opt, base, forkable, fail_at); };
}

sim::TwoSourceParams sim_params(double noise) {
    sim::TwoSourceParams p;
    p.noise_sd = noise;
    return p;
}

ExplorationConfig config(double eps, std::size_t episodes) {
    ExplorationConfig c;
    c.eps = eps;
    c.n_episodes = episodes;
    return c;
}

} // namespace

TEST_CASE("utility label uses a strict inequality") {
    CHECK(utility_label(0.8, 0.5) == 1);
    CHECK(utility_label(0.5, 0.5) == 0);
    CHECK(utility_label(0.2, 0.5) == 0);
}

TEST_CASE("paired estimate on scripted values") {
    const ScriptedEnv win(0.8, 0.5), tie(0.5, 0.5);
    const auto e = estimate_utility_paired(win, 3, 2, 1, 1);
    CHECK(e.optimizer_value == doctest::Approx(0.8));
    CHECK(e.base_value == doctest::Approx(0.5));
    CHECK(e.label == 1);
    CHECK(estimate_utility_paired(tie, 3, 2, 2, 1).label == 0);
    CHECK(e.fork_digest == win.state_digest());
}

TEST_CASE("paired estimate preconditions") {
    const ScriptedEnv env(1, 0), no_fork(1, 0, false);
    CHECK_THROWS_AS(estimate_utility_paired(no_fork, 3, 2, 1, 1), CapabilityError);
    CHECK_THROWS_AS(estimate_utility_paired(env, 1, 2, 1, 1), InvalidArgument);
    CHECK_THROWS_AS(estimate_utility_paired(env, 3, 0, 1, 1), InvalidArgument);
    CHECK_THROWS_AS(estimate_utility_paired(env, 3, 2, 0, 1), InvalidArgument);
}

TEST_CASE("paired estimate never mutates the parent") {
    sim::TwoSourceEnv env(sim_params(0.3), 17);
    const auto before = env.state_digest();
    const auto e = estimate_utility_paired(env, 5, 5, 3, 2);
    CHECK(env.state_digest() == before);
    CHECK(e.fork_digest == before);
}

TEST_CASE("noise-free simulator: label is the sign of the hidden utility") {
    const auto p = sim_params(0.0);
    int checked = 0;
    for (std::uint64_t s = 0; s < 40; ++s) {
        sim::TwoSourceEnv env(p, s);
        while (!env.done()) {
            const double u = env.episode().state().true_utility;
            CHECK(estimate_utility_paired(env, 5, 5, 3, s).label == (u > 0 ? 1 : 0));
            env.step(false);
            ++checked;
        }
    }
    CHECK(checked == 400);
}

TEST_CASE("exploration endpoints") {
    const auto factory = sim::make_factory(sim_params(0.1));
    const auto none = run_exploration(factory, config(0.0, 20), 1);
    CHECK(none.steps.size() == 200);
    CHECK(none.labeled_count() == 0);
    const auto all = run_exploration(factory, config(1.0, 20), 1);
    CHECK(all.labeled_count() == all.steps.size());
}

TEST_CASE("label presence matches the trigger flag") {
    const auto d = run_exploration(sim::make_factory(sim_params(0.1)), config(0.5, 30), 4);
    for (const auto& r : d.steps) {
        CHECK(r.utility_label.has_value() == r.triggered);
        if (r.utility_label) CHECK((*r.utility_label == 0 || *r.utility_label == 1));
        CHECK(r.features.size() == d.feature_names.size());
        CHECK(r.latent_type_debug.has_value());
    }
    CHECK(d.meta.eps == 0.5);
    CHECK(d.meta.n_episodes == 30);
    CHECK(d.meta.horizon == 10);
    CHECK(d.meta.env_id == "two_source");
}

TEST_CASE("default exploration labels about half the steps") {
    const auto d = run_exploration(sim::make_factory(sim_params(0.1)), ExplorationConfig{}, 6);
    const double n = static_cast<double>(d.steps.size());
    const double frac = static_cast<double>(d.labeled_count()) / n;
    CHECK(std::abs(frac - 0.5) <= 3 * std::sqrt(0.25 / n));
}

TEST_CASE("trigger flags are independent of the signal") {
    const auto d = run_exploration(sim::make_factory(sim_params(0.1)), config(0.5, 1000), 8);
    REQUIRE(d.steps.size() >= 10000);
    std::vector<double> flag, signal;
    for (const auto& r : d.steps) {
        flag.push_back(r.triggered ? 1.0 : 0.0);
        signal.push_back(r.signal);
    }
    CHECK(std::abs(stats::pearson(flag, signal).rho) < 0.03);
}

TEST_CASE("exploration is reproducible byte for byte") {
    const auto factory = sim::make_factory(sim_params(0.2));
    std::ostringstream a, b, c;
    write_dataset_jsonl(run_exploration(factory, config(0.5, 10), 3), a);
    write_dataset_jsonl(run_exploration(factory, config(0.5, 10), 3), b);
    write_dataset_jsonl(run_exploration(factory, config(0.5, 10), 4), c);
    CHECK(a.str() == b.str());
    CHECK(a.str() != c.str());
}

TEST_CASE("dataset JSONL round trip") {
    auto d = run_exploration(sim::make_factory(sim_params(0.2)), config(0.5, 5), 3);
    d.meta.provenance["config_digest"] = "abc";
    std::ostringstream out;
    write_dataset_jsonl(d, out);
    std::istringstream in(out.str());
    const auto back = read_dataset_jsonl(in);
    CHECK(back.feature_names == d.feature_names);
    CHECK(back.meta.feature_specs == d.meta.feature_specs);
    CHECK(back.meta.provenance == d.meta.provenance);
    CHECK(back.meta.seed == d.meta.seed);
    REQUIRE(back.steps.size() == d.steps.size());
    for (std::size_t i = 0; i < d.steps.size(); ++i) {
        CHECK(back.steps[i].features == d.steps[i].features);
        CHECK(back.steps[i].utility_label == d.steps[i].utility_label);
        CHECK(back.steps[i].observation == d.steps[i].observation);
    }
    std::ostringstream again;
    write_dataset_jsonl(back, again);
    CHECK(again.str() == out.str());

    const std::string line = out.str().substr(0, out.str().find('\n'));
    for (const char* field : {"\"episode_id\"", "\"step_index\"", "\"triggered\"", "\"utility_label\"", "\"features\"",
                              "\"signal\"", "\"env_meta\""}) {
        CHECK(line.find(field) != std::string::npos);
    }
}

TEST_CASE("dataset reader rejects inconsistent records") {
    std::istringstream garbage("{not json}\n");
    CHECK_THROWS_AS(read_dataset_jsonl(garbage), Error);

    auto d = run_exploration(sim::make_factory(sim_params(0.2)), config(1.0, 1), 3);
    std::ostringstream out;
    write_dataset_jsonl(d, out);
    auto text = out.str();
    const auto pos = text.find("\"triggered\":true");
    REQUIRE(pos != std::string::npos);
    text.replace(pos, 16, "\"triggered\":false");
    std::istringstream in(text);
    CHECK_THROWS_AS(read_dataset_jsonl(in), Error);
}

TEST_CASE("environment faults carry episode and step") {
    try {
        run_exploration(scripted(1, 0, true, 2), config(0.0, 3), 1);
        FAIL("expected a fault");
    } catch (const EnvironmentFault& e) {
        CHECK(e.episode() == 0);
        CHECK(e.step() == 2);
    }
    CHECK_THROWS_AS(run_exploration(scripted(1, 0, false), config(1.0, 1), 1), CapabilityError);
}

TEST_CASE("exploration config validation") {
    const auto f = sim::make_factory(sim_params(0.1));
    CHECK_THROWS_AS(run_exploration(f, config(1.5, 1), 1), InvalidArgument);
    CHECK_THROWS_AS(run_exploration(f, config(0.5, 0), 1), InvalidArgument);
}

TEST_CASE("dataset summary counts") {
    LabeledDataset d;
    d.feature_names = {"x"};
    for (int i = 0; i < 100; ++i) {
        StepRecord r;
        r.episode_id = static_cast<std::size_t>(i / 10);
        r.step_index = i % 10;
        r.triggered = true;
        r.utility_label = i < 40 ? 1 : 0;
        r.features = {0.0};
        d.steps.push_back(r);
    }
    const auto s = dataset_summary(d);
    CHECK(s.positive_fraction == doctest::Approx(0.40));
    CHECK(s.episodes == 10);
    CHECK(s.per_step.size() == 10);
    CHECK(s.positive_examples.size() <= 5);
    CHECK(s.negative_examples.size() <= 5);
    CHECK(dataset_summary(d).render() == s.render());

    LabeledDataset one;
    one.feature_names = {"x"};
    StepRecord r;
    r.triggered = true;
    r.utility_label = 1;
    r.features = {0.0};
    one.steps.push_back(r);
    const auto s1 = dataset_summary(one);
    CHECK(s1.positive_fraction == 1.0);
    CHECK(s1.steps == 1);
    CHECK(s1.triggered == 1);
    CHECK(s1.episodes == 1);
    CHECK(s1.per_step.size() == 1);

    CHECK_THROWS_AS(dataset_summary(LabeledDataset{}), InvalidArgument);
}

TEST_CASE("recompute_features rebuilds from raw observations") {
    const auto d = run_exploration(sim::make_factory(sim_params(0.2)), config(0.5, 3), 3);
    const auto pool = FeaturePool::standard().merged({{"twice", FeatureSource::llm, "2 * token_entropy", 0.0}});
    const auto r = recompute_features(d, pool);
    CHECK(r.feature_names.back() == "twice");
    for (const auto& s : r.steps) CHECK(s.features.back() == doctest::Approx(2 * s.signal));
    CHECK(r.meta.feature_specs == pool.specs());
}
