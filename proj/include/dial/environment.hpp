#pragma once

#include "dial/common.hpp"
#include "dial/observation.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace dial {

/// An action at a decision step. Id 0 is always the base policy's action;
/// larger ids are candidates proposed by the test-time optimizer.
struct Action {
    int id = 0;
    bool operator==(const Action&) const = default;
};

inline constexpr Action kBaseAction{0};

/// Contract every episodic environment implements so that exploration,
/// paired utility estimation and deployment can drive it.
///
/// Forks are deep copies: anything done to a fork leaves the parent untouched.
class Environment {
public:
    virtual ~Environment() = default;

    virtual std::string id() const = 0;
    virtual bool done() const = 0;
    virtual int step_index() const = 0;
    virtual int max_steps() const = 0;
    virtual Observation observe() const = 0;

    /// k candidate actions for the current state; element 0 is the base action.
    virtual std::vector<Action> candidate_actions(std::size_t k) const = 0;

    /// Index into `candidates` of the action the test-time optimizer commits to.
    virtual std::size_t optimizer_choice(std::span<const Action> candidates) const = 0;

    /// Executes `a` at the current step, returns the step reward and advances.
    virtual double execute(const Action& a) = 0;

    virtual bool supports_fork() const { return true; }
    virtual std::unique_ptr<Environment> fork() const = 0;

    /// Replaces the randomness driving future (not current) states.
    virtual void reseed(std::uint64_t seed) = 0;

    /// Digest of the complete internal state, including RNG state.
    virtual std::string state_digest() const = 0;

    /// Task success rule applied to a finished episode's total return.
    virtual bool success(double episode_return) const = 0;

    /// Latent type of the current state; only simulators can answer.
    virtual std::optional<LatentType> latent_type() const { return std::nullopt; }

    /// Deployment step: runs the optimizer's pick when triggered, else the base action.
    double step(bool triggered, std::size_t k_candidates = 5);
};

/// Builds a fresh episode from a per-episode seed.
using EnvFactory = std::function<std::unique_ptr<Environment>(std::uint64_t seed)>;

} // namespace dial
