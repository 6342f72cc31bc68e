#include <doctest.h>

#include "dial/stats.hpp"
#include "dial/twosource_sim.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <sstream>

using namespace dial;
using namespace dial::stats;

namespace {

std::vector<double> vec(std::initializer_list<double> v) { return v; }

struct Sample {
    std::vector<double> signal, utility;
    std::vector<LatentType> types;
};

Sample sim_sample(double p_i0, double noise, std::size_t n, std::uint64_t seed) {
    sim::TwoSourceParams p;
    p.p_i0 = p_i0;
    p.noise_sd = noise;
    Sample s;
    for (const auto& st : sim::sample_states(p, n, seed)) {
        s.signal.push_back(st.signal);
        s.utility.push_back(st.true_utility);
        s.types.push_back(st.latent_type);
    }
    return s;
}

} // namespace

TEST_CASE("spearman hand examples") {
    CHECK(spearman(vec({1, 2, 3}), vec({1, 2, 3})).rho == doctest::Approx(1.0));
    CHECK(spearman(vec({1, 2, 3}), vec({3, 2, 1})).rho == doctest::Approx(-1.0));
    CHECK(spearman(vec({1, 2, 2, 4}), vec({1, 3, 2, 4})).rho == doctest::Approx(0.9486833).epsilon(1e-6));
    CHECK(average_ranks(vec({10, 20, 20, 5})) == vec({2, 3.5, 3.5, 1}));
}

TEST_CASE("spearman errors and degenerate input") {
    CHECK_THROWS_AS(spearman(vec({1, 2}), vec({1, 2})), InvalidArgument);
    CHECK_THROWS_AS(spearman(vec({1, 2, 3}), vec({1, 2})), InvalidArgument);
    const auto r = spearman(vec({1, 1, 1}), vec({1, 2, 3}));
    CHECK_FALSE(r.defined);
    CHECK(std::isnan(r.rho));
}

// Vectors of length n whose Pearson correlation is exactly r (up to rounding).
std::pair<std::vector<double>, std::vector<double>> with_correlation(double r, int n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    Eigen::VectorXd x(n), e(n);
    for (int i = 0; i < n; ++i) x[i] = nd(rng), e[i] = nd(rng);
    x.array() -= x.mean();
    x.normalize();
    e.array() -= e.mean();
    e -= e.dot(x) * x;
    e.normalize();
    const Eigen::VectorXd y = r * x + std::sqrt(1 - r * r) * e;
    return {std::vector<double>(x.data(), x.data() + n), std::vector<double>(y.data(), y.data() + n)};
}

TEST_CASE("p-values use the t approximation and flag small n") {
    const auto small = spearman(vec({1, 2, 3, 4, 5}), vec({2, 1, 4, 3, 5}));
    CHECK(small.p_approximate);
    CHECK(small.p_value > 0.0);
    CHECK(small.p_value < 1.0);
    // df = 18: two-sided 5% critical t = 2.100922, i.e. r = t / sqrt(df + t^2).
    const double t = 2.100922;
    const auto [x, y] = with_correlation(t / std::sqrt(18 + t * t), 20, 4);
    const auto r = pearson(x, y);
    CHECK_FALSE(r.p_approximate);
    CHECK(r.p_value == doctest::Approx(0.05).epsilon(1e-4));
    CHECK(pearson(x, x).p_value == 0.0);
}

TEST_CASE("pearson hand examples") {
    CHECK(pearson(vec({1, 5, 2}), vec({1, 5, 2})).rho == doctest::Approx(1.0));
    CHECK(pearson(vec({1, 5, 2}), vec({1, -7, -1})).rho == doctest::Approx(-1.0));
    CHECK(pearson(vec({0, 1, 2}), vec({0, 1, 4})).rho == doctest::Approx(0.9607689).epsilon(1e-6));
}

TEST_CASE("spearman is invariant under strictly increasing transforms") {
    std::mt19937_64 rng(12);
    std::normal_distribution<double> nd;
    std::vector<double> x, y;
    for (int i = 0; i < 300; ++i) {
        x.push_back(nd(rng));
        y.push_back(x.back() + nd(rng));
    }
    const double base = spearman(x, y).rho;
    for (int trial = 0; trial < 20; ++trial) {
        const double a = std::exp(nd(rng)), b = nd(rng), k = 0.2 + std::abs(nd(rng));
        std::vector<double> tx, ty;
        for (double v : x) tx.push_back(a * std::exp(k * v) + b);
        for (double v : y) ty.push_back(std::atan(v * k) + b);
        CHECK(spearman(tx, ty).rho == doctest::Approx(base).epsilon(1e-12));
    }
}

TEST_CASE("bootstrap intervals") {
    std::vector<double> x;
    for (int i = 0; i < 30; ++i) x.push_back(i * 0.37);
    const auto [lo, hi] = bootstrap_ci(x, x, CorrKind::spearman, 1000, 1);
    CHECK(lo == 1.0);
    CHECK(hi == 1.0);
    CHECK_THROWS_AS(bootstrap_ci(x, x, CorrKind::spearman, 50, 1), InvalidArgument);
    const std::vector<double> c(30, 2.0);
    CHECK_THROWS_AS(bootstrap_ci(c, x, CorrKind::pearson, 100, 1), Error);
    // Same seed, same interval.
    const std::vector<double> rev(x.rbegin(), x.rend());
    const auto a = bootstrap_ci(x, rev, CorrKind::pearson, 200, 9);
    const auto b = bootstrap_ci(x, rev, CorrKind::pearson, 200, 9);
    CHECK(a == b);
}

TEST_CASE("bootstrap CI for rho = 0.5 has near-nominal coverage") {
    int covered = 0;
    for (std::uint64_t t = 0; t < 100; ++t) {
        std::mt19937_64 rng(derive_seed(77, "coverage", t));
        std::normal_distribution<double> nd;
        std::vector<double> x, y;
        for (int i = 0; i < 200; ++i) {
            const double a = nd(rng), e = nd(rng);
            x.push_back(a);
            y.push_back(0.5 * a + std::sqrt(0.75) * e);
        }
        const auto r = correlate_with_ci(CorrKind::pearson, x, y, 1000, t);
        CHECK(r.ci_low <= r.rho);
        CHECK(r.rho <= r.ci_high);
        if (r.ci_low <= 0.5 && 0.5 <= r.ci_high) ++covered;
    }
    CHECK(covered >= 90);
}

TEST_CASE("quantile normalization") {
    const std::vector<CellKey> one(3, CellKey{"env", "cfg"});
    const auto q = quantile_normalize(vec({5, 1, 3}), one, NormScheme::S1_per_cell);
    CHECK(q[0] == doctest::Approx(5.0 / 6));
    CHECK(q[1] == doctest::Approx(1.0 / 6));
    CHECK(q[2] == doctest::Approx(0.5));
    CHECK(quantile_normalize(vec({2, 2, 2}), one, NormScheme::S1_per_cell) == vec({0.5, 0.5, 0.5}));
    CHECK_THROWS_AS(quantile_normalize(vec({1}), std::vector<CellKey>{{"", "x"}}, NormScheme::S1_per_cell), InvalidArgument);
}

TEST_CASE("quantile normalization leaves per-cell spearman bit-identical under every scheme") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> nd;
    std::vector<double> sigma, u;
    std::vector<CellKey> keys;
    const std::vector<std::string> envs = {"e1", "e2", "e3"}, cfgs = {"b1", "b2"};
    for (const auto& e : envs) {
        for (const auto& c : cfgs) {
            const double shift = nd(rng) * 3, scale = std::exp(nd(rng));
            for (int i = 0; i < 80; ++i) {
                sigma.push_back(shift + scale * nd(rng));
                u.push_back(sigma.back() * nd(rng) + nd(rng));
                keys.push_back({e, c});
            }
        }
    }
    for (auto scheme : {NormScheme::S1_per_cell, NormScheme::S2_per_backbone, NormScheme::S3_per_environment}) {
        const auto qs = quantile_normalize(sigma, keys, scheme);
        const auto qu = quantile_normalize(u, keys, scheme);
        for (std::size_t start = 0; start < sigma.size(); start += 80) {
            const std::span<const double> rs(sigma.data() + start, 80), ru(u.data() + start, 80);
            const std::span<const double> ns(qs.data() + start, 80), nu(qu.data() + start, 80);
            CHECK(spearman(rs, ru).rho == spearman(ns, nu).rho);
        }
        for (double v : qs) {
            CHECK(v > 0.0);
            CHECK(v < 1.0);
        }
    }
}

TEST_CASE("transform suite") {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> ud;
    std::vector<double> sigma, u;
    for (int i = 0; i < 500; ++i) {
        sigma.push_back(ud(rng));
        u.push_back(sigma.back() - 0.3 + 0.2 * ud(rng));
    }
    const auto rows = transform_suite(sigma, u);
    REQUIRE(rows.size() == 6);
    const double raw = rows[0].spearman;
    for (std::size_t i = 1; i < 5; ++i) CHECK(std::abs(rows[i].spearman - raw) < 1e-12);
    CHECK(rows[4].pearson == doctest::Approx(rows[0].pearson).epsilon(1e-12));
    CHECK(rows[5].spearman == doctest::Approx(-raw).epsilon(1e-12));
    sigma[0] = -0.1;
    CHECK_THROWS_AS(transform_suite(sigma, u), InvalidArgument);
}

TEST_CASE("predicted rho and crossing point") {
    CHECK(predicted_rho(1, 1, 0) == 1.0);
    CHECK(predicted_rho(1, 1, 0.5) == 0.0);
    CHECK(predicted_rho(2, 1, 0.5) == -0.5);
    CHECK(crossing_point(1, 3) == 0.75);
    CHECK_THROWS_AS(predicted_rho(0, 1, 0.5), InvalidArgument);
    CHECK_THROWS_AS(predicted_rho(1, 1, 1.5), InvalidArgument);
}

TEST_CASE("aggregate sign follows the mixture prediction") {
    for (double p : {0.0, 0.25, 0.75, 1.0}) {
        const auto s = sim_sample(p, 0.3, 5000, 100);
        const double rho = spearman(s.signal, s.utility).rho;
        CAPTURE(p);
        CHECK((rho > 0) == (predicted_rho(1, 1, p) > 0));
    }
    const auto s = sim_sample(0.5, 0.3, 5000, 100);
    CHECK(std::abs(spearman(s.signal, s.utility).rho) < 0.1);
}

TEST_CASE("simpson decomposition") {
    SUBCASE("noise-free types are perfectly monotone") {
        const auto s = sim_sample(0.5, 0.0, 500, 3);
        const auto r = simpson_decomposition(s.signal, s.utility, s.types);
        CHECK(r.within_i.rho == doctest::Approx(-1.0));
        CHECK(r.within_d.rho == doctest::Approx(1.0));
    }
    SUBCASE("Type-I dominated mixture reverses the aggregate") {
        const auto s = sim_sample(0.8, 0.3, 5000, 4);
        const auto r = simpson_decomposition(s.signal, s.utility, s.types);
        CHECK(r.aggregate.rho < 0);
        CHECK(r.within_d.rho > 0);
    }
    SUBCASE("mirrored") {
        const auto s = sim_sample(0.2, 0.3, 5000, 5);
        const auto r = simpson_decomposition(s.signal, s.utility, s.types);
        CHECK(r.aggregate.rho > 0);
        CHECK(r.within_i.rho < 0);
    }
    SUBCASE("records without latent types are rejected") {
        std::vector<StepRecord> recs(5);
        for (auto& r : recs) r.utility_label = 1;
        CHECK_THROWS_AS(simpson_decomposition(recs), InvalidArgument);
    }
    SUBCASE("one type only") {
        const auto s = sim_sample(1.0, 0.1, 50, 6);
        CHECK_THROWS_AS(simpson_decomposition(s.signal, s.utility, s.types), InvalidArgument);
    }
}

TEST_CASE("temporal split") {
    SUBCASE("single-step episodes leave the late bucket empty") {
        std::vector<StepRecord> recs(10);
        for (std::size_t i = 0; i < recs.size(); ++i) {
            recs[i].utility_label = static_cast<int>(i % 2);
            recs[i].signal = 0.1 * static_cast<double>(i);
        }
        CHECK_THROWS_AS(temporal_split_rho(recs), InvalidArgument);
    }
    SUBCASE("median split uses step <= median for early") {
        std::vector<StepRecord> recs;
        for (int t = 0; t < 4; ++t) {
            for (int k = 0; k < 4; ++k) {
                StepRecord r;
                r.step_index = t;
                r.utility_label = (k + t) % 2;
                r.signal = k;
                recs.push_back(r);
            }
        }
        const auto split = temporal_split_rho(recs);
        CHECK(split.median_step == 1.5);
        CHECK(split.early.n == 8);
        CHECK(split.late.n == 8);
    }
}

TEST_CASE("auc") {
    CHECK(auc(std::vector<int>{0, 0, 1, 1}, vec({0.1, 0.2, 0.3, 0.4})) == 1.0);
    CHECK(auc(std::vector<int>{0, 1, 0, 1}, vec({1, 1, 1, 1})) == 0.5);
    CHECK(auc(std::vector<int>{0, 0, 1, 1}, vec({0.1, 0.4, 0.35, 0.8})) == 0.75);
    CHECK_THROWS_AS(auc(std::vector<int>{1, 1}, vec({0.1, 0.2})), InvalidArgument);
}

TEST_CASE("wilson interval") {
    const auto [lo, hi] = wilson_interval(50, 100);
    CHECK(lo == doctest::Approx(0.4038).epsilon(1e-3));
    CHECK(hi == doctest::Approx(0.5962).epsilon(1e-3));
    CHECK(wilson_interval(0, 10).first == 0.0);
    CHECK(wilson_interval(10, 10).second == 1.0);
}

TEST_CASE("report CSV has the fixed columns and provenance comments") {
    std::vector<double> x{1, 2, 3, 4, 5, 6}, y{2, 1, 4, 3, 6, 5};
    std::ostringstream os;
    write_report_csv(os, {report_row("cell", x, y, 200, 1)}, {{"seed", "1"}});
    const auto text = os.str();
    CHECK(text.rfind("# seed: 1\ngroup,n,spearman,pearson,p_value,ci_low,ci_high\ncell,6,", 0) == 0);
    const auto j = report_json({report_row("cell", x, y, 200, 1)});
    CHECK(j[0]["n"] == 6);
}
