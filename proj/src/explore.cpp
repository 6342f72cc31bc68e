#include "dial/explore.hpp"

#include "dial/random.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <random>
#include <sstream>

namespace dial {

using json = nlohmann::ordered_json;

void ExplorationConfig::validate() const {
    if (!(eps >= 0.0 && eps <= 1.0)) throw InvalidArgument("exploration eps must lie in [0,1]");
    if (n_episodes < 1) throw InvalidArgument("exploration n_episodes must be >= 1");
    if (k_candidates < 2) throw InvalidArgument("k_candidates must be >= 2 (base action included)");
    if (n_rollouts < 1) throw InvalidArgument("n_rollouts must be >= 1");
    if (rollout_horizon < 1) throw InvalidArgument("rollout horizon must be >= 1");
}

std::vector<std::size_t> LabeledDataset::labeled_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < steps.size(); ++i) {
        if (steps[i].utility_label) out.push_back(i);
    }
    return out;
}

std::size_t LabeledDataset::labeled_count() const {
    return static_cast<std::size_t>(
        std::count_if(steps.begin(), steps.end(), [](const StepRecord& r) { return r.utility_label.has_value(); }));
}

LabeledDataset recompute_features(const LabeledDataset& d, const FeaturePool& pool) {
    LabeledDataset out = d;
    out.feature_names = pool.names();
    out.meta.feature_specs = pool.specs();
    for (auto& r : out.steps) r.features = pool.extract(r.observation).values;
    return out;
}

PairedEstimate estimate_utility_paired(const Environment& env, std::size_t k_candidates, std::size_t n_rollouts,
                                       int horizon, std::uint64_t seed) {
    if (!env.supports_fork()) throw CapabilityError("environment '" + env.id() + "' does not support fork");
    if (k_candidates < 2) throw InvalidArgument("k_candidates must be >= 2 (base action included)");
    if (n_rollouts < 1) throw InvalidArgument("n_rollouts must be >= 1");
    if (horizon < 1) throw InvalidArgument("rollout horizon must be >= 1");

    const auto candidates = env.candidate_actions(k_candidates);
    if (candidates.size() < 2 || candidates.front() != kBaseAction) {
        throw Error("environment must list the base action first among >= 2 candidates");
    }
    PairedEstimate est;
    est.optimizer_index = env.optimizer_choice(candidates);
    est.fork_digest = env.state_digest();

    auto value_of = [&](std::size_t candidate) {
        double total = 0.0;
        for (std::size_t r = 0; r < n_rollouts; ++r) {
            auto arm = env.fork();
            if (arm->state_digest() != est.fork_digest) throw Error("fork does not reproduce the parent state");
            arm->reseed(derive_seed(seed, "rollout", candidate * n_rollouts + r));
            double ret = arm->execute(candidates[candidate]);
            for (int h = 1; h < horizon && !arm->done(); ++h) ret += arm->execute(kBaseAction);
            total += ret;
        }
        return total / static_cast<double>(n_rollouts);
    };

    est.optimizer_value = value_of(est.optimizer_index);
    est.base_value = value_of(0);
    est.label = utility_label(est.optimizer_value, est.base_value);
    return est;
}

LabeledDataset run_exploration(const EnvFactory& factory, const ExplorationConfig& config, std::uint64_t seed,
                               const FeaturePool& pool) {
    config.validate();
    LabeledDataset d;
    d.meta.seed = seed;
    d.meta.eps = config.eps;
    d.meta.n_episodes = config.n_episodes;
    d.meta.k_candidates = config.k_candidates;
    d.meta.n_rollouts = config.n_rollouts;
    d.meta.rollout_horizon = config.rollout_horizon;
    d.meta.feature_specs = pool.specs();
    d.feature_names = pool.names();

    for (std::size_t ep = 0; ep < config.n_episodes; ++ep) {
        int step = 0;
        try {
            auto env = factory(derive_seed(seed, "episode", ep));
            if (ep == 0) {
                d.meta.env_id = env->id();
                d.meta.horizon = env->max_steps();
            }
            std::mt19937_64 coin(derive_seed(seed, "trigger", ep));
            while (!env->done()) {
                step = env->step_index();
                StepRecord rec;
                rec.episode_id = ep;
                rec.step_index = step;
                rec.observation = env->observe();
                rec.signal = rec.observation.signal;
                rec.latent_type_debug = env->latent_type();
                rec.features = pool.extract(rec.observation).values;
                rec.triggered = uniform01(coin) < config.eps;
                if (rec.triggered) {
                    const auto rollout_seed =
                        derive_seed(seed, "paired", ep * static_cast<std::uint64_t>(env->max_steps() + 1) +
                                                        static_cast<std::uint64_t>(step));
                    rec.utility_label = estimate_utility_paired(*env, config.k_candidates, config.n_rollouts,
                                                                config.rollout_horizon, rollout_seed)
                                            .label;
                }
                env->step(rec.triggered, config.k_candidates);
                d.steps.push_back(std::move(rec));
            }
        } catch (const EnvironmentFault&) {
            throw;
        } catch (const CapabilityError&) {
            throw;
        } catch (const InvalidArgument&) {
            throw;
        } catch (const std::exception& e) {
            throw EnvironmentFault(ep, step, e.what());
        }
    }
    return d;
}

namespace {

ExampleState make_example(const LabeledDataset& d, const StepRecord& r) {
    ExampleState ex;
    ex.episode_id = r.episode_id;
    ex.step_index = r.step_index;
    ex.label = *r.utility_label;
    ex.signal = r.signal;
    ex.text = r.observation.text;
    for (std::size_t i = 0; i < d.feature_names.size() && i < r.features.size(); ++i) {
        ex.features.emplace_back(d.feature_names[i], r.features[i]);
    }
    return ex;
}

std::vector<ExampleState> sample_examples(const LabeledDataset& d, std::vector<std::size_t> idx, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    if (idx.size() > 5) idx.resize(5);
    std::sort(idx.begin(), idx.end());
    std::vector<ExampleState> out;
    for (auto i : idx) out.push_back(make_example(d, d.steps[i]));
    return out;
}

std::string fmt_double(double v, int precision = 4) {
    std::ostringstream ss;
    ss.setf(std::ios::fixed);
    ss.precision(precision);
    ss << v;
    return ss.str();
}

} // namespace

DatasetSummary dataset_summary(const LabeledDataset& d) {
    if (d.steps.empty()) throw InvalidArgument("dataset_summary: dataset is empty");
    DatasetSummary s;
    std::map<std::size_t, bool> episodes;
    std::map<int, StepBucket> buckets;
    std::vector<std::size_t> pos_idx, neg_idx;
    for (std::size_t i = 0; i < d.steps.size(); ++i) {
        const auto& r = d.steps[i];
        episodes[r.episode_id] = true;
        auto& b = buckets[r.step_index];
        b.step_index = r.step_index;
        ++b.steps;
        ++s.steps;
        if (r.triggered) {
            ++b.triggered;
            ++s.triggered;
        }
        if (r.utility_label) {
            if (*r.utility_label == 1) {
                ++b.positive;
                ++s.positive;
                pos_idx.push_back(i);
            } else {
                neg_idx.push_back(i);
            }
        }
    }
    s.episodes = episodes.size();
    s.trigger_rate = static_cast<double>(s.triggered) / static_cast<double>(s.steps);
    const std::size_t labeled = pos_idx.size() + neg_idx.size();
    s.positive_fraction = labeled ? static_cast<double>(s.positive) / static_cast<double>(labeled) : 0.0;
    for (const auto& [_, b] : buckets) s.per_step.push_back(b);
    s.positive_examples = sample_examples(d, pos_idx, 0x5u);
    s.negative_examples = sample_examples(d, neg_idx, 0x6u);
    return s;
}

std::string DatasetSummary::render() const {
    std::ostringstream out;
    out << "Exploration statistics:\n"
        << "- total episodes: " << episodes << "\n"
        << "- total steps: " << steps << "\n"
        << "- optimizer trigger rate: " << fmt_double(trigger_rate) << "\n"
        << "- overall positive-utility fraction: " << fmt_double(positive_fraction) << "\n\n"
        << "Per-step breakdown (step, steps, trigger rate, positive-utility fraction):\n";
    for (const auto& b : per_step) {
        const double tr = static_cast<double>(b.triggered) / static_cast<double>(b.steps);
        const double pf = b.triggered ? static_cast<double>(b.positive) / static_cast<double>(b.triggered) : 0.0;
        out << "- step " << b.step_index << ": " << b.steps << ", " << fmt_double(tr) << ", " << fmt_double(pf)
            << "\n";
    }
    auto examples = [&](const char* title, const std::vector<ExampleState>& xs) {
        out << "\n" << title << ":\n";
        for (const auto& e : xs) {
            out << "- [episode " << e.episode_id << ", step " << e.step_index << ", utility " << e.label << "] "
                << e.text << "\n";
        }
    };
    examples("Representative states where the rollout was useful (positive utility)", positive_examples);
    examples("Representative states where the rollout was not useful (negative utility)", negative_examples);
    return out.str();
}

json DatasetSummary::to_json() const {
    json j;
    j["episodes"] = episodes;
    j["steps"] = steps;
    j["triggered"] = triggered;
    j["positive"] = positive;
    j["trigger_rate"] = trigger_rate;
    j["positive_fraction"] = positive_fraction;
    j["per_step"] = json::array();
    for (const auto& b : per_step) {
        j["per_step"].push_back(
            {{"step_index", b.step_index}, {"steps", b.steps}, {"triggered", b.triggered}, {"positive", b.positive}});
    }
    auto examples = [](const std::vector<ExampleState>& xs) {
        json arr = json::array();
        for (const auto& e : xs) {
            arr.push_back({{"episode_id", e.episode_id},
                           {"step_index", e.step_index},
                           {"label", e.label},
                           {"signal", e.signal},
                           {"text", e.text}});
        }
        return arr;
    };
    j["positive_examples"] = examples(positive_examples);
    j["negative_examples"] = examples(negative_examples);
    return j;
}

void write_dataset_jsonl(const LabeledDataset& d, std::ostream& out) {
    json meta;
    meta["env_id"] = d.meta.env_id;
    meta["seed"] = d.meta.seed;
    meta["eps"] = d.meta.eps;
    meta["n_episodes"] = d.meta.n_episodes;
    meta["horizon"] = d.meta.horizon;
    meta["k_candidates"] = d.meta.k_candidates;
    meta["n_rollouts"] = d.meta.n_rollouts;
    meta["rollout_horizon"] = d.meta.rollout_horizon;
    json specs = json::array();
    for (const auto& f : d.meta.feature_specs) specs.push_back(f);
    meta["feature_specs"] = specs;
    if (!d.meta.provenance.empty()) {
        json prov = json::object();
        for (const auto& [k, v] : d.meta.provenance) prov[k] = v;
        meta["provenance"] = prov;
    }

    for (const auto& r : d.steps) {
        if (r.features.size() != d.feature_names.size()) throw Error("record feature width mismatch");
        json line;
        line["episode_id"] = r.episode_id;
        line["step_index"] = r.step_index;
        line["triggered"] = r.triggered;
        line["utility_label"] = r.utility_label ? json(*r.utility_label) : json(nullptr);
        json features = json::object();
        for (std::size_t i = 0; i < d.feature_names.size(); ++i) features[d.feature_names[i]] = r.features[i];
        line["features"] = std::move(features);
        line["signal"] = r.signal;
        line["env_meta"] = meta;
        line["observation"] = r.observation;
        line["latent_type"] = r.latent_type_debug ? json(std::string(to_string(*r.latent_type_debug))) : json(nullptr);
        out << line.dump() << '\n';
    }
}

LabeledDataset read_dataset_jsonl(std::istream& in) {
    LabeledDataset d;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw Error("dataset line " + std::to_string(line_no) + ": " + e.what());
        }
        try {
            StepRecord r;
            r.episode_id = j.at("episode_id").get<std::size_t>();
            r.step_index = j.at("step_index").get<int>();
            r.triggered = j.at("triggered").get<bool>();
            if (!j.at("utility_label").is_null()) r.utility_label = j["utility_label"].get<int>();
            if (r.utility_label.has_value() != r.triggered) {
                throw Error("utility_label must be present exactly when triggered");
            }
            if (r.utility_label && *r.utility_label != 0 && *r.utility_label != 1) {
                throw Error("utility_label must be 0 or 1");
            }
            r.signal = j.at("signal").get<double>();
            if (j.contains("observation")) r.observation = j["observation"].get<Observation>();
            if (j.contains("latent_type") && !j["latent_type"].is_null()) {
                r.latent_type_debug = j["latent_type"].get<std::string>() == "I" ? LatentType::intervention_unsuitable
                                                                                 : LatentType::decision_difficult;
            }
            std::vector<std::string> names;
            for (const auto& [k, v] : j.at("features").items()) {
                names.push_back(k);
                r.features.push_back(v.get<double>());
            }
            if (d.steps.empty()) {
                d.feature_names = names;
                const auto& m = j.at("env_meta");
                d.meta.env_id = m.value("env_id", std::string{});
                d.meta.seed = m.value("seed", std::uint64_t{0});
                d.meta.eps = m.value("eps", 0.0);
                d.meta.n_episodes = m.value("n_episodes", std::size_t{0});
                d.meta.horizon = m.value("horizon", 0);
                d.meta.k_candidates = m.value("k_candidates", std::size_t{0});
                d.meta.n_rollouts = m.value("n_rollouts", std::size_t{0});
                d.meta.rollout_horizon = m.value("rollout_horizon", 0);
                if (m.contains("feature_specs")) {
                    for (const auto& f : m["feature_specs"]) d.meta.feature_specs.push_back(f.get<FeatureSpec>());
                }
                if (m.contains("provenance")) {
                    for (const auto& [k, v] : m["provenance"].items()) d.meta.provenance[k] = v.get<std::string>();
                }
            } else if (names != d.feature_names) {
                throw Error("feature names differ from the first record");
            }
            d.steps.push_back(std::move(r));
        } catch (const json::exception& e) {
            throw Error("dataset line " + std::to_string(line_no) + ": " + e.what());
        } catch (const Error& e) {
            throw Error("dataset line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return d;
}

} // namespace dial
