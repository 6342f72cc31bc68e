#include "dial/common.hpp"
#include "dial/config.hpp"
#include "dial/digest.hpp"

#include <doctest.h>

#include <fstream>
#include <set>
#include <unistd.h>

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

fs::path scratch(const std::string& name) {
    auto p = fs::temp_directory_path() / ("dial_test_common_" + std::to_string(::getpid()) + "_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

} // namespace

TEST_CASE("derive_seed separates components and indices") {
    CHECK(dial::derive_seed(7, "explore", 0) == dial::derive_seed(7, "explore", 0));
    std::set<std::uint64_t> seen;
    for (const char* comp : {"explore", "eval", "fit", "deploy"}) {
        for (std::uint64_t i = 0; i < 50; ++i) seen.insert(dial::derive_seed(7, comp, i));
    }
    CHECK(seen.size() == 200);
    CHECK(dial::derive_seed(7, "eval") != dial::derive_seed(8, "eval"));
}

TEST_CASE("fnv1a64 and sha256 match published vectors") {
    CHECK(dial::fnv1a64("") == 0xcbf29ce484222325ULL);
    CHECK(dial::fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
    CHECK(dial::sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("write_once_with_digest is write-once and checkable") {
    const auto dir = scratch("write_once");
    const auto p = dial::write_once_with_digest(dir, "out", "txt", "hello\n");
    CHECK(p.filename().string().rfind("out.", 0) == 0);
    CHECK(dial::read_file(p) == "hello\n");
    CHECK(dial::write_once_with_digest(dir, "out", "txt", "hello\n") == p);
    CHECK_NOTHROW(dial::verify_digest_suffix(p));

    {
        std::ofstream tamper(p, std::ios::trunc);
        tamper << "changed\n";
    }
    CHECK_THROWS_AS(dial::verify_digest_suffix(p), dial::Error);
    CHECK_THROWS_AS(dial::write_once_with_digest(dir, "out", "txt", "hello\n"), dial::Error);

    const auto plain = dir / "plain.json";
    std::ofstream(plain) << "{}";
    CHECK_NOTHROW(dial::verify_digest_suffix(plain));
    fs::remove_all(dir);
}

TEST_CASE("config defaults parse and round-trip") {
    const auto c = dial::parse_run_config(json::object());
    CHECK(c.seed == 0);
    CHECK(c.exploration.eps == 0.5);
    CHECK(c.exploration.n_episodes == 50);
    CHECK(c.gate.c_grid == dial::kDefaultCGrid);
    CHECK(c.policies.size() == 4);
    const auto again = dial::parse_run_config(dial::to_json(c));
    CHECK(dial::to_json(again) == dial::to_json(c));
    CHECK(dial::config_digest(again) == dial::config_digest(c));
}

TEST_CASE("config digest ignores output_dir but tracks content") {
    auto a = dial::parse_run_config(json::object());
    auto b = a;
    b.output_dir = "elsewhere";
    CHECK(dial::config_digest(a) == dial::config_digest(b));
    b.seed = 3;
    CHECK(dial::config_digest(a) != dial::config_digest(b));
}

TEST_CASE("config errors name the field path") {
    auto message = [](const json& j) {
        try {
            dial::parse_run_config(j);
        } catch (const dial::ConfigError& e) {
            return std::string(e.what());
        }
        return std::string("no error");
    };
    CHECK(message({{"bogus", 1}}).rfind("bogus: unknown key", 0) == 0);
    CHECK(message({{"gate", {{"regulariser", "l1"}}}}).rfind("gate.regulariser", 0) == 0);
    CHECK(message({{"gate", {{"c_grid", {0.1, "x"}}}}}).rfind("gate.c_grid[1]", 0) == 0);
    CHECK(message({{"exploration", {{"eps", 1.5}}}}).rfind("exploration:", 0) == 0);
    CHECK(message({{"environment", {{"horizon", 0}}}}).rfind("environment:", 0) == 0);
    CHECK(message({{"environment", {{"kind", "webshop"}}}}).rfind("environment.kind", 0) == 0);
    CHECK(message({{"eval", {{"policies", {"sometimes"}}}}}).rfind("eval.policies[0]", 0) == 0);
    CHECK(message({{"eval", {{"policies", json::array({{{"kind", "fixed_threshold"}, {"direction", 0}}})}}}})
              .rfind("eval.policies[0].direction", 0) == 0);
    CHECK(message({{"seed", -1}}).rfind("seed", 0) == 0);
}

TEST_CASE("config parses every section") {
    const json j = {
        {"seed", 9},
        {"environment", {{"kind", "two_source"}, {"alpha", 2.0}, {"p_i0", 0.3}, {"trigger_cost_units", 4}}},
        {"exploration", {{"eps", 0.25}, {"n_episodes", 10}}},
        {"gate", {{"regularizer", "elastic_net"}, {"c_grid", {0.1, 1.0}}, {"tau_mode", "cv"}, {"llm_layer", "mock"}}},
        {"eval", {{"policies", json::array({"dial", {{"kind", "fixed_threshold"}, {"signal", "token_entropy"}, {"direction", -1}, {"theta", 0.3}}})},
                  {"n_episodes", 40}}},
    };
    const auto c = dial::parse_run_config(j);
    CHECK(c.seed == 9);
    CHECK(c.environment.alpha == 2.0);
    CHECK(c.eval.trigger_cost_units == 4.0);  // inherited from the environment
    CHECK(c.exploration.n_episodes == 10);
    CHECK(c.gate.regularizer == dial::Regularizer::elastic_net);
    CHECK(c.gate.tau_mode == dial::TauMode::cv);
    CHECK(c.llm_layer == dial::LlmLayer::mock);
    REQUIRE(c.policies.size() == 2);
    CHECK(c.policies[1].kind == dial::eval::PolicyKind::fixed_threshold);
    CHECK(c.policies[1].direction == -1);
    CHECK(c.eval.n_episodes == 40);
}

TEST_CASE("set_config_field edits one numeric field") {
    auto c = dial::parse_run_config(json::object());
    dial::set_config_field(c, "environment.p_i0", 0.25);
    CHECK(c.environment.p_i0 == 0.25);
    dial::set_config_field(c, "exploration.n_episodes", 12);
    CHECK(c.exploration.n_episodes == 12);
    CHECK_THROWS_AS(dial::set_config_field(c, "exploration.n_episodes", 1.5), dial::ConfigError);
    CHECK_THROWS_AS(dial::set_config_field(c, "environment.nope", 1), dial::ConfigError);
    CHECK_THROWS_AS(dial::set_config_field(c, "environment.p_i0", 2), dial::ConfigError);
}
