#pragma once

#include "dial/eval.hpp"
#include "dial/explore.hpp"
#include "dial/gate.hpp"
#include "dial/twosource_sim.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace dial {

/// Raised for schema violations; the message starts with the field path.
class ConfigError : public InvalidArgument {
public:
    using InvalidArgument::InvalidArgument;
};

enum class LlmLayer { off, mock, external };
std::string_view to_string(LlmLayer l);

struct PolicyEntry {
    eval::PolicyKind kind = eval::PolicyKind::base_only;
    std::string signal = "token_entropy";
    int direction = 1;
    double theta = 0.5;
};

struct VerifyConfig {
    std::size_t n_states = 5000;
    double noise_sd = 0.3;
    std::vector<double> p_grid = {0.0, 0.25, 0.5, 0.75, 1.0};
    double drift_slope = 0.06;
    std::size_t temporal_episodes = 500;
    std::size_t bootstrap = 1000;
};

struct RunConfig {
    sim::TwoSourceParams environment;
    ExplorationConfig exploration;
    GateConfig gate;
    LlmLayer llm_layer = LlmLayer::off;
    std::optional<std::string> llm_cache;
    std::vector<PolicyEntry> policies = {{eval::PolicyKind::base_only},
                                         {eval::PolicyKind::always_trigger},
                                         {eval::PolicyKind::dial},
                                         {eval::PolicyKind::reversed_dial}};
    eval::EvalOptions eval;
    VerifyConfig verify;
    std::uint64_t seed = 0;
    std::string output_dir = "dial_out";

    /// Checks every section against its module's preconditions.
    void validate() const;
};

/// Missing keys take defaults; unknown keys and bad values raise ConfigError
/// naming the field path (e.g. "gate.c_grid[2]").
RunConfig parse_run_config(const nlohmann::ordered_json& j);
RunConfig load_run_config(const std::filesystem::path& path);

/// Canonical form with every field spelled out; its digest identifies a run.
nlohmann::ordered_json to_json(const RunConfig& c);
std::string config_digest(const RunConfig& c);

/// Sets one dotted field ("environment.p_i0", "exploration.eps", ...) for sweeps.
void set_config_field(RunConfig& c, const std::string& path, double value);

} // namespace dial
