#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "dial/proposal.hpp"

#include "dial/digest.hpp"

#include <httplib.h>

#include <cstdlib>
#include <fstream>
#include <regex>
#include <set>

namespace dial {

using json = nlohmann::ordered_json;

const std::string_view kProposalPromptTemplate =
    "You are an AI agent that has been exploring an interactive environment. During exploration, you "
    "sometimes performed \"rollouts\" (additional computation) to improve your decisions. Sometimes the "
    "rollout was useful (positive utility), sometimes it was not.\n"
    "\n"
    "Your task: Analyze the patterns in your experience and write a Python function that extracts features "
    "from the state text that could predict whether a rollout would be useful.\n"
    "\n"
    "{summary}\n"
    "\n"
    "Requirements:\n"
    "- Return a dict with string keys and float values.\n"
    "- Use only Python standard library.\n"
    "- Extract exactly 5 features based on the patterns you observe.\n"
    "- Focus on features that DIFFER between useful and not-useful rollout cases.\n";

const std::string_view kProposalFormatInstructions =
    "\n"
    "Output format: this runtime does not execute Python. Write each of the 5 features as one expression "
    "in the feature language below and reply with JSON only:\n"
    "{\"features\": [{\"name\": \"snake_case_name\", \"expression\": \"...\"}, ...]}\n"
    "\n"
    "Feature language: numbers, + - * /, parentheses, numeric state fields (step_count, token_entropy, "
    "evidence_count, num_available_actions, is_finish, plus environment fields), the state text as `text`, "
    "and the functions field(\"name\"), length(text[, norm]), keyword_count(text, \"word\"), "
    "regex_count(text, \"pattern\"), contains(text, \"word\"), threshold(x, t), min(a, b), max(a, b), "
    "clamp(x, lo, hi), abs(x).\n";

std::string build_proposal_prompt(const DatasetSummary& summary) {
    std::string prompt(kProposalPromptTemplate);
    const std::string placeholder = "{summary}";
    prompt.replace(prompt.find(placeholder), placeholder.size(), summary.render());
    prompt += kProposalFormatInstructions;
    return prompt;
}

const std::string& MockProposalProvider::reply() {
    static const std::string r = R"JSON({"features": [
  {"name": "viable_mentions", "expression": "keyword_count(text, \"viable\")"},
  {"name": "signed_entropy", "expression": "token_entropy * (2 * type_proxy - 1)"},
  {"name": "text_length", "expression": "length(text, 100)"},
  {"name": "digit_groups", "expression": "regex_count(text, \"[0-9]+\")"},
  {"name": "late_uncertain", "expression": "threshold(step_count * token_entropy, 3)"}
]})JSON";
    return r;
}

std::string MockProposalProvider::complete(const std::string&) { return reply(); }

std::optional<ChatEndpoint> ChatEndpoint::from_environment() {
    const char* url = std::getenv("DIAL_LLM_URL");
    if (!url || !*url) return std::nullopt;
    const char* key = std::getenv("DIAL_LLM_KEY");
    const char* model = std::getenv("DIAL_LLM_MODEL");
    return ChatEndpoint{url, key ? key : "", model ? model : ""};
}

std::string HttpChatProvider::complete(const std::string& prompt) {
    static const std::regex url_re(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(endpoint_.url, m, url_re)) throw ProviderError("malformed LLM endpoint URL: " + endpoint_.url);
    const std::string origin = m[1].str();
    const std::string path = m[2].matched ? m[2].str() : "/v1/chat/completions";

    httplib::Client client(origin);
    client.set_connection_timeout(std::chrono::seconds(10));
    client.set_read_timeout(timeout_);
    client.set_write_timeout(timeout_);
    httplib::Headers headers;
    if (!endpoint_.api_key.empty()) headers.emplace("Authorization", "Bearer " + endpoint_.api_key);

    json body;
    body["model"] = endpoint_.model;
    body["messages"] = json::array({json{{"role", "user"}, {"content", prompt}}});
    body["temperature"] = 0;

    auto res = client.Post(path, headers, body.dump(), "application/json");
    if (!res) throw ProviderError("LLM endpoint unreachable (" + origin + "): " + httplib::to_string(res.error()));
    if (res->status != 200) {
        throw ProviderError("LLM endpoint returned HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200));
    }
    try {
        const auto reply = json::parse(res->body);
        return reply.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
        throw ProviderError(std::string("malformed chat-completion response: ") + e.what());
    }
}

ProposalCache::ProposalCache(std::filesystem::path path) : path_(std::move(path)), entries_(json::object()) {
    if (std::filesystem::exists(path_)) {
        try {
            entries_ = json::parse(read_file(path_));
        } catch (const json::exception& e) {
            throw Error("corrupt proposal cache " + path_.string() + ": " + e.what());
        }
        if (!entries_.is_object()) throw Error("corrupt proposal cache " + path_.string());
    }
}

std::optional<FeatureProposal> ProposalCache::get(const std::string& key) const {
    if (!entries_.contains(key)) return std::nullopt;
    FeatureProposal p;
    for (const auto& f : entries_[key].at("features")) p.features.push_back(f.get<FeatureSpec>());
    return p;
}

void ProposalCache::put(const std::string& key, const FeatureProposal& proposal) {
    json arr = json::array();
    for (const auto& f : proposal.features) arr.push_back(f);
    entries_[key] = json{{"features", arr}};
    if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
    std::ofstream out(path_, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write proposal cache " + path_.string());
    out << entries_.dump(2) << '\n';
}

FeatureProposal parse_proposal_reply(const std::string& reply, const std::vector<std::string>& reserved) {
    const auto open = reply.find('{');
    const auto close = reply.rfind('}');
    if (open == std::string::npos || close == std::string::npos || close < open) {
        throw ProposalError("reply contains no JSON object");
    }
    json j;
    try {
        j = json::parse(reply.substr(open, close - open + 1));
    } catch (const json::parse_error& e) {
        throw ProposalError(std::string("reply JSON does not parse: ") + e.what());
    }
    if (!j.contains("features") || !j["features"].is_array()) throw ProposalError("reply lacks a \"features\" array");

    static const std::regex ident(R"(^[A-Za-z_][A-Za-z0-9_]*$)");
    std::set<std::string> seen(reserved.begin(), reserved.end());
    FeatureProposal p;
    for (const auto& f : j["features"]) {
        if (!f.is_object() || !f.contains("name") || !f.contains("expression") || !f["name"].is_string() ||
            !f["expression"].is_string()) {
            throw ProposalError("each feature needs string \"name\" and \"expression\"");
        }
        const auto name = f["name"].get<std::string>();
        const auto expr = f["expression"].get<std::string>();
        if (!std::regex_match(name, ident)) throw ProposalError("feature name '" + name + "' is not an identifier");
        if (!seen.insert(name).second) throw ProposalError("feature name '" + name + "' is duplicated or reserved");
        try {
            (void)DslExpression::parse(expr);
        } catch (const DslParseError& e) {
            throw ProposalError(std::string("feature '") + name + "': " + e.what());
        }
        p.features.push_back(FeatureSpec{name, FeatureSource::llm, expr, 0.0});
    }
    if (p.features.size() != 5) {
        throw ProposalError("expected exactly 5 features, got " + std::to_string(p.features.size()));
    }
    return p;
}

FeatureProposal propose_llm_features(const DatasetSummary& summary, ProposalProvider& provider,
                                     const std::vector<std::string>& reserved_names, ProposalCache* cache) {
    const std::string prompt = build_proposal_prompt(summary);
    const std::string key = sha256_hex(summary.render()) + ":" + provider.name();
    if (cache) {
        if (auto hit = cache->get(key)) return *hit;
    }
    std::string last_error;
    for (int attempt = 0; attempt < 2; ++attempt) {
        std::string request = prompt;
        if (attempt > 0) {
            request += "\nYour previous reply was rejected: " + last_error +
                       "\nReply again with exactly 5 valid features in the JSON format above.\n";
        }
        const std::string reply = provider.complete(request);
        try {
            auto proposal = parse_proposal_reply(reply, reserved_names);
            if (cache) cache->put(key, proposal);
            return proposal;
        } catch (const ProposalError& e) {
            last_error = e.what();
        }
    }
    throw ProposalError("provider '" + provider.name() + "' gave no valid proposal after one retry: " + last_error);
}

} // namespace dial
