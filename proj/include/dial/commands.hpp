#pragma once

#include "dial/config.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

namespace dial::cli {

namespace fs = std::filesystem;

/// Mock, external or none, per the config's llm_layer. Throws ConfigError when
/// the external layer is selected without DIAL_LLM_URL.
std::unique_ptr<ProposalProvider> make_provider(const RunConfig& config);

/// (config digest, input digest, seed, tool version) stamped on every output.
std::map<std::string, std::string> provenance(const RunConfig& config, const std::string& input_digest);

/// Each command writes write-once files named stem.<digest>.ext into `out`
/// and returns their paths. Inputs whose names carry a digest suffix are
/// checked against their content first. Progress goes to `log`.
fs::path cmd_explore(const RunConfig& config, const fs::path& out, std::ostream& log);
fs::path cmd_fit(const RunConfig& config, const fs::path& dataset, const fs::path& out, std::ostream& log);
std::vector<fs::path> cmd_eval(const RunConfig& config, const fs::path& model, const fs::path& out, std::ostream& log);
std::vector<fs::path> cmd_stats(const RunConfig& config, const fs::path& dataset, const fs::path& out, std::ostream& log);
std::vector<fs::path> cmd_verify(const RunConfig& config, const fs::path& out, std::ostream& log);

/// explore, fit and eval per value of `axis` (a dotted config field), each run
/// in its own subdirectory; up to `jobs` runs at once. Returns the sweep table path.
fs::path cmd_sweep(const RunConfig& config, const std::string& axis, const std::vector<double>& values,
                   const fs::path& out, std::size_t jobs, std::ostream& log);

/// explore, stats, fit, eval, then verify, all into `out`.
std::vector<fs::path> cmd_pipeline(const RunConfig& config, const fs::path& out, std::ostream& log);

} // namespace dial::cli
