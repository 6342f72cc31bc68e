#pragma once

#include "dial/explore.hpp"
#include "dial/features.hpp"

#include <chrono>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace dial {

/// Feature-proposal prompt. `{summary}` is replaced by the rendered
/// exploration summary.
extern const std::string_view kProposalPromptTemplate;

/// Output-format instructions appended to the prompt: proposals must be
/// expressions in the feature DSL rather than executable code.
extern const std::string_view kProposalFormatInstructions;

std::string build_proposal_prompt(const DatasetSummary& summary);

class ProviderError : public Error {
public:
    using Error::Error;
};

class ProposalError : public Error {
public:
    using Error::Error;
};

/// Exactly five LLM-sourced features whose extractors parse in the DSL.
struct FeatureProposal {
    std::vector<FeatureSpec> features;
};

/// Something that answers a prompt with text.
class ProposalProvider {
public:
    virtual ~ProposalProvider() = default;
    virtual std::string name() const = 0;
    virtual std::string complete(const std::string& prompt) = 0;
};

/// Returns the same five simulator features on every call.
class MockProposalProvider final : public ProposalProvider {
public:
    std::string name() const override { return "mock"; }
    std::string complete(const std::string& prompt) override;
    static const std::string& reply();
};

struct ChatEndpoint {
    std::string url;  // full endpoint, e.g. https://host/v1/chat/completions
    std::string api_key;
    std::string model;

    /// Reads DIAL_LLM_URL, DIAL_LLM_KEY, DIAL_LLM_MODEL; nullopt if the URL is unset.
    static std::optional<ChatEndpoint> from_environment();
};

/// Chat-completion client: POSTs {"model", "messages":[{"role":"user",...}]}
/// and returns choices[0].message.content. Blocking.
class HttpChatProvider final : public ProposalProvider {
public:
    explicit HttpChatProvider(ChatEndpoint endpoint, std::chrono::seconds timeout = std::chrono::seconds(120))
        : endpoint_(std::move(endpoint)), timeout_(timeout) {}

    std::string name() const override { return "http:" + endpoint_.model; }
    std::string complete(const std::string& prompt) override;

private:
    ChatEndpoint endpoint_;
    std::chrono::seconds timeout_;
};

/// JSON file mapping "<summary digest>:<provider name>" to accepted proposals.
class ProposalCache {
public:
    explicit ProposalCache(std::filesystem::path path);

    std::optional<FeatureProposal> get(const std::string& key) const;
    void put(const std::string& key, const FeatureProposal& proposal);

private:
    std::filesystem::path path_;
    nlohmann::ordered_json entries_;
};

/// Parses a provider reply into a proposal. Accepts a JSON object (optionally
/// wrapped in prose or a code fence) holding
/// {"features": [{"name": ..., "expression": ...}, ...]}. Names must be
/// identifiers, unique, and not in `reserved`. Throws ProposalError.
FeatureProposal parse_proposal_reply(const std::string& reply, const std::vector<std::string>& reserved);

/// Prompts `provider` with the summary, retrying once if the reply does not
/// yield five valid features. Throws ProposalError after the retry fails and
/// lets ProviderError through.
FeatureProposal propose_llm_features(const DatasetSummary& summary, ProposalProvider& provider,
                                     const std::vector<std::string>& reserved_names,
                                     ProposalCache* cache = nullptr);

} // namespace dial
