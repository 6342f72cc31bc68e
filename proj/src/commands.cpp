#include "dial/commands.hpp"

#include "dial/digest.hpp"
#include "dial/pipeline.hpp"
#include "dial/stats.hpp"

#include <cstdio>
#include <fstream>
#include <future>
#include <iomanip>
#include <sstream>

namespace dial::cli {

using json = nlohmann::ordered_json;

namespace {

std::string num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

std::string input_digest_of(const fs::path& p) { return file_sha256_hex(p); }

void open_input(const fs::path& p) {
    if (!fs::exists(p)) throw Error("input file not found: " + p.string());
    verify_digest_suffix(p);
}

LabeledDataset load_dataset(const fs::path& p) {
    open_input(p);
    std::ifstream in(p, std::ios::binary);
    return read_dataset_jsonl(in);
}

FeaturePool pool_of(const LabeledDataset& d) {
    return d.meta.feature_specs.empty() ? FeaturePool::standard() : FeaturePool(d.meta.feature_specs);
}

json provenance_json(const std::map<std::string, std::string>& p) {
    json j = json::object();
    for (const auto& [k, v] : p) j[k] = v;
    return j;
}

void csv_provenance(std::ostream& os, const std::map<std::string, std::string>& p) {
    for (const auto& [k, v] : p) os << "# " << k << ": " << v << "\n";
}

json corr_json(const stats::CorrReport& r) {
    return {{"rho", r.rho},         {"n", r.n},           {"p_value", r.p_value}, {"defined", r.defined},
            {"p_approximate", r.p_approximate}, {"ci_low", r.ci_low}, {"ci_high", r.ci_high}};
}

json simpson_json(const stats::SimpsonReport& s) {
    return {{"within_I", corr_json(s.within_i)}, {"within_D", corr_json(s.within_d)}, {"aggregate", corr_json(s.aggregate)}};
}

json temporal_json(const stats::TemporalSplit& t) {
    return {{"median_step", t.median_step}, {"early", corr_json(t.early)}, {"late", corr_json(t.late)}, {"delta", t.delta}};
}

json transforms_json(const std::vector<stats::TransformRow>& rows) {
    json a = json::array();
    for (const auto& r : rows) a.push_back({{"transform", r.transform}, {"spearman", r.spearman}, {"pearson", r.pearson}});
    return a;
}

fs::path write_json(const fs::path& out, std::string_view stem, const json& j) {
    return write_once_with_digest(out, stem, "json", j.dump(2) + "\n");
}

struct EvalOutput {
    std::vector<eval::EvalResult> results;
    std::vector<fs::path> files;
};

eval::PolicySpec policy_for(const PolicyEntry& e, const GateModel& model, const FeaturePool& pool) {
    switch (e.kind) {
    case eval::PolicyKind::base_only: return eval::PolicySpec::base_only();
    case eval::PolicyKind::always_trigger: return eval::PolicySpec::always_trigger();
    case eval::PolicyKind::fixed_threshold: return eval::PolicySpec::fixed_threshold(e.signal, e.direction, e.theta);
    case eval::PolicyKind::dial: return eval::PolicySpec::dial(model, pool);
    case eval::PolicyKind::reversed_dial: return eval::PolicySpec::reversed_dial(model, pool);
    }
    throw InvalidArgument("unknown policy kind");
}

EvalOutput run_eval(const RunConfig& config, const fs::path& model_path, const fs::path& out, std::ostream& log) {
    open_input(model_path);
    const auto j = json::parse(read_file(model_path));
    if (!j.contains("model") || !j.contains("feature_specs")) {
        throw Error(model_path.string() + ": not a model file (missing 'model' or 'feature_specs')");
    }
    const GateModel model = gate_from_json(j.at("model"));
    const FeaturePool pool(j.at("feature_specs").get<std::vector<FeatureSpec>>());
    const auto prov = provenance(config, input_digest_of(model_path));
    const auto factory = sim::make_factory(config.environment);
    const auto seed = derive_seed(config.seed, "eval");

    EvalOutput o;
    for (const auto& entry : config.policies) {
        const auto policy = policy_for(entry, model, pool);
        log << "eval: " << policy.name() << " over " << config.eval.n_episodes << " episodes\n";
        o.results.push_back(eval::run_deployment(factory, policy, config.eval, seed));
    }

    json pareto = json::array();
    for (const auto& a : o.results) {
        for (const auto& b : o.results) {
            if (eval::pareto_dominates(a, b)) pareto.push_back({{"dominant", a.policy}, {"dominated", b.policy}});
        }
    }
    json results = json::array();
    for (const auto& r : o.results) results.push_back(eval::to_json(r));
    json doc = {{"provenance", provenance_json(prov)},
                {"environment", to_json(config).at("environment")},
                {"options", to_json(config).at("eval")},
                {"results", results},
                {"pareto_dominance", pareto}};
    o.files.push_back(write_json(out, "eval", doc));

    std::ostringstream summary, profile;
    eval::write_summary_csv(summary, o.results, prov);
    eval::write_profile_csv(profile, o.results, prov);
    o.files.push_back(write_once_with_digest(out, "eval_summary", "csv", summary.str()));
    o.files.push_back(write_once_with_digest(out, "eval_profile", "csv", profile.str()));
    return o;
}

sim::TwoSourceParams verify_params(const RunConfig& c, double p_i0) {
    auto p = c.environment;
    p.p_i0 = p_i0;
    p.p_i_slope = 0.0;
    p.noise_sd = c.verify.noise_sd;
    return p;
}

std::vector<double> signals(const std::vector<sim::SimState>& s) {
    std::vector<double> v;
    for (const auto& x : s) v.push_back(x.signal);
    return v;
}

std::vector<double> utilities(const std::vector<sim::SimState>& s) {
    std::vector<double> v;
    for (const auto& x : s) v.push_back(x.true_utility);
    return v;
}

std::string value_label(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

} // namespace

std::unique_ptr<ProposalProvider> make_provider(const RunConfig& config) {
    switch (config.llm_layer) {
    case LlmLayer::off: return nullptr;
    case LlmLayer::mock: return std::make_unique<MockProposalProvider>();
    case LlmLayer::external: {
        auto endpoint = ChatEndpoint::from_environment();
        if (!endpoint) throw ConfigError("gate.llm_layer: 'external' needs DIAL_LLM_URL (and usually DIAL_LLM_KEY, DIAL_LLM_MODEL)");
        return std::make_unique<HttpChatProvider>(*endpoint);
    }
    }
    return nullptr;
}

std::map<std::string, std::string> provenance(const RunConfig& config, const std::string& input_digest) {
    return {{"config_digest", config_digest(config)},
            {"input_digest", input_digest},
            {"seed", std::to_string(config.seed)},
            {"tool_version", std::string(kToolVersion)}};
}

fs::path cmd_explore(const RunConfig& config, const fs::path& out, std::ostream& log) {
    config.validate();
    auto provider = make_provider(config);
    std::optional<ProposalCache> cache;
    if (provider && config.llm_cache) cache.emplace(*config.llm_cache);

    log << "explore: " << config.exploration.n_episodes << " episodes at eps " << config.exploration.eps
        << (provider ? ", llm layer " + provider->name() : std::string()) << "\n";
    auto ex = explore_with_features(sim::make_factory(config.environment), config.exploration,
                                    derive_seed(config.seed, "explore"), provider.get(), cache ? &*cache : nullptr);
    ex.data.meta.provenance = provenance(config, "none");
    if (provider) ex.data.meta.provenance["llm_provider"] = provider->name();
    log << "explore: " << ex.data.steps.size() << " steps, " << ex.data.labeled_count() << " labeled\n";

    std::ostringstream s;
    write_dataset_jsonl(ex.data, s);
    fs::create_directories(out);
    return write_once_with_digest(out, "dataset", "jsonl", s.str());
}

fs::path cmd_fit(const RunConfig& config, const fs::path& dataset, const fs::path& out, std::ostream& log) {
    config.validate();
    const auto d = load_dataset(dataset);
    if (d.labeled_count() == 0) {
        throw Error("dataset " + dataset.string() +
                    " has no labeled rows: the exploration step never triggered the optimizer. "
                    "Re-run explore with a larger exploration.eps or exploration.n_episodes");
    }
    GateModel model;
    try {
        model = fit_gate(d, config.gate, derive_seed(config.seed, "fit"));
    } catch (const SingleClassError& e) {
        log << "fit: " << e.what() << "; writing an intercept-only gate\n";
        model = intercept_only_gate(d, config.gate);
    }
    log << "fit: " << to_string(model.regularizer) << ", C=" << model.chosen_c << ", " << model.nnz() << "/"
        << model.weights.size() << " nonzero weights, tau=" << model.tau << "\n";

    json doc = {{"provenance", provenance_json(provenance(config, input_digest_of(dataset)))},
                {"env_id", d.meta.env_id},
                {"feature_specs", pool_of(d).specs()},
                {"model", to_json(model)}};
    json diag = json::array();
    for (const auto& [name, cls] : weight_diagnostic(model).features) diag.push_back({{"feature", name}, {"class", to_string(cls)}});
    doc["weight_diagnostic"] = diag;
    fs::create_directories(out);
    return write_json(out, "model", doc);
}

std::vector<fs::path> cmd_eval(const RunConfig& config, const fs::path& model, const fs::path& out, std::ostream& log) {
    config.validate();
    fs::create_directories(out);
    return run_eval(config, model, out, log).files;
}

std::vector<fs::path> cmd_stats(const RunConfig& config, const fs::path& dataset, const fs::path& out, std::ostream& log) {
    config.validate();
    const auto d = load_dataset(dataset);
    const auto prov = provenance(config, input_digest_of(dataset));

    std::vector<StepRecord> labeled;
    for (auto i : d.labeled_indices()) labeled.push_back(d.steps[i]);
    if (labeled.size() < 3) throw Error("dataset " + dataset.string() + " has fewer than 3 labeled rows; nothing to correlate");

    auto columns = [](const std::vector<StepRecord>& rs) {
        std::pair<std::vector<double>, std::vector<double>> c;
        for (const auto& r : rs) {
            c.first.push_back(r.signal);
            c.second.push_back(static_cast<double>(*r.utility_label));
        }
        return c;
    };

    std::vector<stats::ReportRow> rows;
    std::uint64_t group = 0;
    auto add = [&](const std::string& name, const std::vector<StepRecord>& rs) {
        if (rs.size() < 3) return;
        auto [x, y] = columns(rs);
        rows.push_back(stats::report_row(name, x, y, config.verify.bootstrap, derive_seed(config.seed, "stats", group++)));
    };
    add("all", labeled);
    std::map<int, std::vector<StepRecord>> by_step;
    std::map<std::string, std::vector<StepRecord>> by_type;
    for (const auto& r : labeled) {
        by_step[r.step_index].push_back(r);
        if (r.latent_type_debug) by_type[std::string(to_string(*r.latent_type_debug))].push_back(r);
    }
    for (const auto& [step, rs] : by_step) add("step=" + std::to_string(step), rs);
    for (const auto& [type, rs] : by_type) add("type=" + type, rs);
    log << "stats: " << rows.size() << " groups over " << labeled.size() << " labeled rows\n";

    json doc = {{"provenance", provenance_json(prov)}, {"signal", "token_entropy"}, {"target", "utility_label"},
                {"groups", stats::report_json(rows)}};
    try {
        doc["temporal"] = temporal_json(stats::temporal_split_rho(labeled));
    } catch (const InvalidArgument& e) {
        doc["temporal"] = {{"skipped", e.what()}};
    }
    try {
        auto [x, y] = columns(labeled);
        doc["transforms"] = transforms_json(stats::transform_suite(x, y));
    } catch (const InvalidArgument& e) {
        doc["transforms"] = {{"skipped", e.what()}};
    }
    if (by_type.size() == 2) {
        try {
            doc["simpson"] = simpson_json(stats::simpson_decomposition(labeled));
        } catch (const InvalidArgument& e) {
            doc["simpson"] = {{"skipped", e.what()}};
        }
    }

    std::ostringstream csv;
    stats::write_report_csv(csv, rows, prov);
    fs::create_directories(out);
    return {write_once_with_digest(out, "stats", "csv", csv.str()), write_json(out, "stats", doc)};
}

std::vector<fs::path> cmd_verify(const RunConfig& config, const fs::path& out, std::ostream& log) {
    config.validate();
    const auto& v = config.verify;
    const auto prov = provenance(config, "none");
    const double a = config.environment.alpha, b = config.environment.beta;
    json doc = {{"provenance", provenance_json(prov)},
                {"alpha", a},
                {"beta", b},
                {"noise_sd", v.noise_sd},
                {"crossing_point", stats::crossing_point(a, b)}};

    // Mixture sweep: sign of the pooled correlation against its prediction.
    std::ostringstream csv;
    csv_provenance(csv, prov);
    csv << "p_i0,predicted,spearman,pearson,p_value,ci_low,ci_high,sign_agrees\n";
    json sweep = json::array();
    for (std::size_t i = 0; i < v.p_grid.size(); ++i) {
        const double p = v.p_grid[i];
        const auto s = sim::sample_states(verify_params(config, p), v.n_states, derive_seed(config.seed, "verify_sweep", i));
        const auto x = signals(s), y = utilities(s);
        const auto sp = stats::correlate_with_ci(stats::CorrKind::spearman, x, y, v.bootstrap, derive_seed(config.seed, "verify_ci", i));
        const double pe = stats::pearson(x, y).rho;
        const double pred = stats::predicted_rho(a, b, p);
        // At the crossing point the prediction has no sign; agreement means the
        // interval covers zero.
        const bool agrees = pred == 0.0 ? (sp.ci_low <= 0 && sp.ci_high >= 0) : ((sp.rho > 0) == (pred > 0));
        csv << num(p) << "," << num(pred) << "," << num(sp.rho) << "," << num(pe) << "," << num(sp.p_value) << ","
            << num(sp.ci_low) << "," << num(sp.ci_high) << "," << (agrees ? "true" : "false") << "\n";
        sweep.push_back({{"p_i0", p}, {"predicted", pred}, {"spearman", corr_json(sp)}, {"pearson", pe}, {"sign_agrees", agrees}});
        log << "verify: p_i0=" << p << " spearman " << num(sp.rho) << " (predicted sign " << num(pred) << ")\n";
    }
    doc["mixture_sweep"] = sweep;

    json simpson = json::object();
    for (double p : {0.8, 0.2}) {
        const auto s = sim::sample_states(verify_params(config, p), v.n_states, derive_seed(config.seed, "verify_simpson", p > 0.5));
        std::vector<LatentType> types;
        for (const auto& st : s) types.push_back(st.latent_type);
        simpson["p_i0=" + value_label(p)] = simpson_json(stats::simpson_decomposition(signals(s), utilities(s), types));
    }
    doc["simpson"] = simpson;

    // Temporal split on exploration data: a drifting mixture against a stationary control.
    const ExplorationConfig ex{1.0, v.temporal_episodes, config.exploration.k_candidates, config.exploration.n_rollouts,
                               config.exploration.rollout_horizon};
    auto drift = verify_params(config, 0.2);
    drift.p_i_slope = v.drift_slope;
    const auto stationary = verify_params(config, 0.5);
    json temporal = json::object();
    for (const auto& [name, params] : {std::pair{"drift", drift}, std::pair{"stationary", stationary}}) {
        const auto d = run_exploration(sim::make_factory(params), ex, derive_seed(config.seed, "verify_temporal", name[0] == 'd'));
        std::vector<StepRecord> labeled;
        for (auto i : d.labeled_indices()) labeled.push_back(d.steps[i]);
        auto t = temporal_json(stats::temporal_split_rho(labeled));
        t["p_i0"] = params.p_i0;
        t["p_i_slope"] = params.p_i_slope;
        temporal[name] = t;
    }
    doc["temporal"] = temporal;

    // Robustness: monotone transforms of the signal, and quantile normalization per cell.
    const auto base = sim::sample_states(verify_params(config, config.environment.p_i0), v.n_states, derive_seed(config.seed, "verify_transforms"));
    doc["transforms"] = transforms_json(stats::transform_suite(signals(base), utilities(base)));

    std::vector<double> sig, ut;
    std::vector<stats::CellKey> keys;
    std::vector<std::size_t> starts;
    const std::size_t per_cell = std::max<std::size_t>(v.n_states / 10, 50);
    std::uint64_t cell = 0;
    for (double p : v.p_grid) {
        for (double noise : {v.noise_sd, 2 * v.noise_sd}) {
            auto params = verify_params(config, p);
            params.noise_sd = noise;
            starts.push_back(sig.size());
            for (const auto& st : sim::sample_states(params, per_cell, derive_seed(config.seed, "verify_norm", cell++))) {
                sig.push_back(st.signal);
                ut.push_back(st.true_utility);
                keys.push_back({"p_i0=" + value_label(p), "noise=" + value_label(noise)});
            }
        }
    }
    json norm = json::array();
    for (auto scheme : {stats::NormScheme::S1_per_cell, stats::NormScheme::S2_per_backbone, stats::NormScheme::S3_per_environment}) {
        const auto qs = stats::quantile_normalize(sig, keys, scheme);
        const auto qu = stats::quantile_normalize(ut, keys, scheme);
        double worst = 0.0;
        for (auto s0 : starts) {
            const auto raw = stats::spearman(std::span(sig).subspan(s0, per_cell), std::span(ut).subspan(s0, per_cell)).rho;
            const auto nrm = stats::spearman(std::span(qs).subspan(s0, per_cell), std::span(qu).subspan(s0, per_cell)).rho;
            worst = std::max(worst, std::abs(raw - nrm));
        }
        norm.push_back({{"scheme", std::string(stats::to_string(scheme))}, {"cells", starts.size()}, {"max_abs_spearman_change", worst}});
    }
    doc["normalization"] = norm;

    fs::create_directories(out);
    return {write_once_with_digest(out, "verify_sweep", "csv", csv.str()), write_json(out, "verify", doc)};
}

fs::path cmd_sweep(const RunConfig& config, const std::string& axis, const std::vector<double>& values,
                   const fs::path& out, std::size_t jobs, std::ostream& log) {
    config.validate();
    if (values.empty()) throw InvalidArgument("sweep needs at least one value");
    std::vector<RunConfig> runs;
    for (double x : values) {
        RunConfig c = config;
        set_config_field(c, axis, x);
        runs.push_back(std::move(c));
    }
    if (jobs == 0) jobs = 1;
    if (config.llm_cache && jobs > 1) {
        log << "sweep: runs share the proposal cache file, running one at a time\n";
        jobs = 1;
    }

    struct RunOutput {
        std::vector<eval::EvalResult> results;
        std::string log;
    };
    auto one = [&](std::size_t i) {
        std::ostringstream runlog;
        const auto dir = out / (axis + "=" + value_label(values[i]));
        const auto data = cmd_explore(runs[i], dir, runlog);
        const auto model = cmd_fit(runs[i], data, dir, runlog);
        return RunOutput{run_eval(runs[i], model, dir, runlog).results, runlog.str()};
    };

    std::vector<RunOutput> outputs(runs.size());
    for (std::size_t start = 0; start < runs.size(); start += jobs) {
        std::vector<std::future<RunOutput>> batch;
        for (std::size_t i = start; i < std::min(runs.size(), start + jobs); ++i) batch.push_back(std::async(std::launch::async, one, i));
        for (std::size_t k = 0; k < batch.size(); ++k) {
            outputs[start + k] = batch[k].get();
            log << "sweep: " << axis << "=" << value_label(values[start + k]) << "\n" << outputs[start + k].log;
        }
    }

    std::ostringstream csv;
    csv_provenance(csv, provenance(config, "none"));
    csv << "# axis: " << axis << "\n";
    csv << "value,policy,sr,cost_x_base,trigger_rate,run_dir\n";
    for (std::size_t i = 0; i < runs.size(); ++i) {
        for (const auto& r : outputs[i].results) {
            csv << num(values[i]) << "," << r.policy << "," << num(r.sr) << "," << num(r.cost_x_base) << ","
                << num(r.trigger_rate) << "," << axis << "=" << value_label(values[i]) << "\n";
        }
    }
    fs::create_directories(out);
    return write_once_with_digest(out, "sweep", "csv", csv.str());
}

std::vector<fs::path> cmd_pipeline(const RunConfig& config, const fs::path& out, std::ostream& log) {
    config.validate();
    std::vector<fs::path> files;
    const auto data = cmd_explore(config, out, log);
    files.push_back(data);
    for (auto& f : cmd_stats(config, data, out, log)) files.push_back(f);
    const auto model = cmd_fit(config, data, out, log);
    files.push_back(model);
    for (auto& f : cmd_eval(config, model, out, log)) files.push_back(f);
    for (auto& f : cmd_verify(config, out, log)) files.push_back(f);
    return files;
}

} // namespace dial::cli
