#include "dial/stats.hpp"
#include "dial/twosource_sim.hpp"

#include <doctest.h>

#include <cmath>

using namespace dial;
using sim::TwoSourceParams;

namespace {

TwoSourceParams params(double p_i0, double noise) {
    TwoSourceParams p;
    p.p_i0 = p_i0;
    p.noise_sd = noise;
    return p;
}

sim::SimState state(LatentType type, double signal, const TwoSourceParams& p) {
    sim::SimState s;
    s.latent_type = type;
    s.signal = signal;
    s.true_utility = type == LatentType::intervention_unsuitable ? -p.alpha * signal : p.beta * signal;
    return s;
}

std::vector<double> pick(const std::vector<sim::SimState>& s, double sim::SimState::*m) {
    std::vector<double> v;
    for (const auto& x : s) v.push_back(x.*m);
    return v;
}

} // namespace

TEST_CASE("parameter validation") {
    auto p = params(0.5, 0.1);
    CHECK_NOTHROW(p.validate());
    p.horizon = 0;
    CHECK_THROWS_AS(p.validate(), InvalidArgument);
    p = params(0.5, 0.1);
    p.alpha = 0;
    CHECK_THROWS_AS(p.validate(), InvalidArgument);
    p = params(1.2, 0.1);
    CHECK_THROWS_AS(p.validate(), InvalidArgument);
    p = params(0.5, 0.1);
    p.fidelity_q = -0.1;
    CHECK_THROWS_AS(p.validate(), InvalidArgument);
    CHECK_THROWS_AS(sim::TwoSourceEpisode(p, 1), InvalidArgument);
}

TEST_CASE("p_I schedule clamps") {
    auto p = params(0.3, 0.1);
    p.p_i_slope = 0.05;
    CHECK(p.p_i(9) == doctest::Approx(0.75).epsilon(1e-12));
    p.p_i_slope = 0.2;
    CHECK(p.p_i(9) == 1.0);
    p.p_i_slope = -0.2;
    CHECK(p.p_i(9) == 0.0);
}

TEST_CASE("same seed gives the same episode") {
    const auto p = params(0.5, 0.3);
    sim::TwoSourceEpisode a(p, 42), b(p, 42);
    while (!a.done()) {
        CHECK(a.state().signal == b.state().signal);
        CHECK(a.state().true_utility == b.state().true_utility);
        CHECK(a.digest() == b.digest());
        CHECK(a.step(true) == b.step(true));
    }
    CHECK(a.total_return() == b.total_return());
}

TEST_CASE("trigger decisions never change the state sequence") {
    const auto p = params(0.5, 0.3);
    sim::TwoSourceEpisode a(p, 5), b(p, 5);
    int t = 0;
    while (!a.done()) {
        CHECK(a.state().signal == b.state().signal);
        a.step(t % 2 == 0);
        b.step(t % 3 == 0);
        ++t;
    }
}

TEST_CASE("step reward injects the utility only when triggered") {
    const auto p = params(0.5, 0.0);
    const auto d = state(LatentType::decision_difficult, 0.4, p);
    const auto i = state(LatentType::intervention_unsuitable, 0.4, p);
    CHECK(sim::step_return(p, d, true) - sim::step_return(p, d, false) == doctest::Approx(0.4));
    CHECK(sim::step_return(p, i, true) - sim::step_return(p, i, false) == doctest::Approx(-0.4));
    const auto z = state(LatentType::decision_difficult, 0.0, p);
    CHECK(sim::step_return(p, z, true) == sim::step_return(p, z, false));
}

TEST_CASE("episode return is the sum of step returns") {
    const auto p = params(0.5, 0.3);
    sim::TwoSourceEpisode e(p, 9);
    double sum = 0;
    int t = 0;
    while (!e.done()) sum += e.step(t++ % 2 == 1);
    CHECK(e.total_return() == doctest::Approx(sum).epsilon(1e-15));
    CHECK_THROWS_AS(e.step(false), Error);
}

TEST_CASE("fidelity endpoints of the type proxy") {
    auto p = params(0.5, 0.1);
    p.fidelity_q = 1.0;
    for (const auto& s : sim::sample_states(p, 2000, 3)) {
        CHECK(s.type_proxy == (s.latent_type == LatentType::decision_difficult ? 1 : 0));
    }
    p.fidelity_q = 0.0;
    const auto s = sim::sample_states(p, 10000, 4);
    std::vector<double> proxy, type;
    for (const auto& x : s) {
        proxy.push_back(x.type_proxy);
        type.push_back(x.latent_type == LatentType::decision_difficult ? 1.0 : 0.0);
    }
    CHECK(std::abs(stats::pearson(proxy, type).rho) < 0.05);
}

TEST_CASE("observations hide the utility and the latent type") {
    const auto p = params(0.5, 0.1);
    sim::TwoSourceEnv env(p, 1);
    const auto obs = env.observe();
    CHECK(obs.extra.count("true_utility") == 0);
    CHECK(obs.extra.count("latent_type") == 0);
    CHECK(obs.extra.count("type_proxy") == 1);
    CHECK_FALSE(obs.numeric_field("true_utility").has_value());
    CHECK(obs.text.find("utility") == std::string::npos);
    CHECK(obs.signal == env.episode().state().signal);
}

TEST_CASE("mixture intervention") {
    const auto p = params(0.5, 0.1);
    CHECK(sim::intervene_mixture(p, sim::MixtureShift::info_poor, 0.3).p_i0 == doctest::Approx(0.8));
    CHECK(sim::intervene_mixture(p, sim::MixtureShift::info_rich, 0.3).p_i0 == doctest::Approx(0.2));
    CHECK_THROWS_AS(sim::intervene_mixture(params(0.9, 0.1), sim::MixtureShift::info_poor, 0.3), InvalidArgument);
}

TEST_CASE("pure mixtures give perfect rank correlation without noise") {
    for (auto [p_i0, expected] : {std::pair{1.0, -1.0}, std::pair{0.0, 1.0}}) {
        const auto s = sim::sample_states(params(p_i0, 0.0), 500, 11);
        CHECK(stats::spearman(pick(s, &sim::SimState::signal), pick(s, &sim::SimState::true_utility)).rho == expected);
    }
}

TEST_CASE("aggregate correlation sign follows the mixture") {
    for (double p : {0.0, 0.25, 0.5, 0.75, 1.0}) {
        const auto s = sim::sample_states(params(p, 0.3), 5000, 100 + static_cast<int>(p * 4));
        const double rho = stats::spearman(pick(s, &sim::SimState::signal), pick(s, &sim::SimState::true_utility)).rho;
        const double pred = stats::predicted_rho(1, 1, p);
        CAPTURE(p);
        if (std::abs(pred) >= 0.1) CHECK((rho > 0) == (pred > 0));
        if (pred == 0) CHECK(std::abs(rho) < 0.1);
    }
}

TEST_CASE("Simpson: within-type signs oppose the aggregate") {
    const auto s = sim::sample_states(params(0.8, 0.3), 5000, 21);
    std::vector<LatentType> types;
    for (const auto& x : s) types.push_back(x.latent_type);
    const auto r = stats::simpson_decomposition(pick(s, &sim::SimState::signal), pick(s, &sim::SimState::true_utility), types);
    CHECK(r.within_d.rho > 0.3);
    CHECK(r.within_i.rho < -0.3);
    CHECK(r.aggregate.rho < -0.1);
}

TEST_CASE("env adapter: candidates, fork independence and success rule") {
    const auto p = params(0.5, 0.1);
    sim::TwoSourceEnv env(p, 8);
    const auto cands = env.candidate_actions(5);
    REQUIRE(cands.size() == 5);
    CHECK(cands[0] == kBaseAction);
    CHECK(env.optimizer_choice(cands) != 0);
    CHECK_THROWS_AS(env.optimizer_choice(std::span(cands).first(1)), InvalidArgument);

    const auto before = env.state_digest();
    auto fork = env.fork();
    CHECK(fork->state_digest() == before);
    while (!fork->done()) fork->execute(cands[1]);
    CHECK(env.state_digest() == before);

    double ret = 0;
    while (!env.done()) ret += env.execute(kBaseAction);
    CHECK(ret == doctest::Approx(p.horizon * p.base_reward));
    CHECK(env.success(ret));
    CHECK_FALSE(env.success(ret - 0.01));
    CHECK_FALSE(env.latent_type().has_value());
}
