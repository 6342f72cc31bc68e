#include "dial/commands.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    bool llm_mock = false;
};

void add_common(CLI::App* sub, Common& c) {
    sub->add_option("--config", c.config, "run config (JSON); defaults apply when omitted")->check(CLI::ExistingFile);
    sub->add_option("--seed", c.seed, "master seed, overrides the config");
    sub->add_option("--out", c.out, "output directory, overrides the config");
    sub->add_flag("--llm-mock", c.llm_mock, "use the mock feature-proposal provider");
}

dial::RunConfig resolve(const Common& c) {
    dial::RunConfig config = c.config.empty() ? dial::parse_run_config(nlohmann::ordered_json::object())
                                              : dial::load_run_config(c.config);
    if (c.seed) config.seed = *c.seed;
    if (!c.out.empty()) config.output_dir = c.out;
    if (c.llm_mock) config.llm_layer = dial::LlmLayer::mock;
    config.validate();
    return config;
}

void print(const std::vector<std::filesystem::path>& files) {
    for (const auto& f : files) std::cout << f.string() << "\n";
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Learned intervention gating: explore, fit, evaluate and verify"};
    app.set_version_flag("--version", std::string(dial::kToolVersion));
    app.require_subcommand(1);

    Common common;
    std::string dataset, model, axis;
    std::vector<double> values;
    std::size_t jobs = 1;

    auto* explore = app.add_subcommand("explore", "run epsilon-exploration and write a labeled dataset");
    auto* fit = app.add_subcommand("fit", "fit the gate on a dataset");
    auto* eval = app.add_subcommand("eval", "deploy the configured policies with a fitted gate");
    auto* stats = app.add_subcommand("stats", "correlation reports for a dataset");
    auto* verify = app.add_subcommand("verify", "simulator checks: mixture sweep, Simpson, temporal, robustness");
    auto* sweep = app.add_subcommand("sweep", "explore, fit and eval across values of one config field");
    auto* pipeline = app.add_subcommand("pipeline", "explore, stats, fit, eval and verify in one directory");
    for (auto* s : {explore, fit, eval, stats, verify, sweep, pipeline}) add_common(s, common);
    fit->add_option("--dataset", dataset, "dataset JSONL from explore")->required();
    stats->add_option("--dataset", dataset, "dataset JSONL from explore")->required();
    eval->add_option("--model", model, "model JSON from fit")->required();
    sweep->add_option("--axis", axis, "dotted config field, e.g. environment.p_i0")->required();
    sweep->add_option("--values", values, "values for the axis")->required()->expected(1, -1);
    sweep->add_option("--jobs", jobs, "runs at once")->check(CLI::PositiveNumber);

    CLI11_PARSE(app, argc, argv);

    try {
        const auto config = resolve(common);
        const std::filesystem::path out = config.output_dir;
        auto& log = std::cerr;
        if (explore->parsed()) print({dial::cli::cmd_explore(config, out, log)});
        if (fit->parsed()) print({dial::cli::cmd_fit(config, dataset, out, log)});
        if (eval->parsed()) print(dial::cli::cmd_eval(config, model, out, log));
        if (stats->parsed()) print(dial::cli::cmd_stats(config, dataset, out, log));
        if (verify->parsed()) print(dial::cli::cmd_verify(config, out, log));
        if (sweep->parsed()) print({dial::cli::cmd_sweep(config, axis, values, out, jobs, log)});
        if (pipeline->parsed()) print(dial::cli::cmd_pipeline(config, out, log));
    } catch (const dial::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
