#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace dial {

inline constexpr std::string_view kToolVersion = "dial 0.3.0";

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A precondition on an argument or configuration value was violated.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// The environment does not support an operation the caller requires (e.g. fork).
class CapabilityError : public Error {
public:
    using Error::Error;
};

/// Training data contains a single label class; callers should fall back to an
/// intercept-only gate.
class SingleClassError : public Error {
public:
    using Error::Error;
};

/// An environment raised while running; carries episode/step context.
class EnvironmentFault : public Error {
public:
    EnvironmentFault(std::size_t episode, int step, const std::string& what)
        : Error("environment fault at episode " + std::to_string(episode) + ", step " +
                std::to_string(step) + ": " + what),
          episode_(episode), step_(step) {}

    std::size_t episode() const noexcept { return episode_; }
    int step() const noexcept { return step_; }

private:
    std::size_t episode_;
    int step_;
};

/// Latent state type of the Two-Source model. Only simulators know it.
enum class LatentType { intervention_unsuitable, decision_difficult };

inline std::string_view to_string(LatentType t) {
    return t == LatentType::intervention_unsuitable ? "I" : "D";
}

// Seed fan-out. Child seeds are
//   splitmix64(master ^ fnv1a64(component) ^ splitmix64(index + 0x9e3779b97f4a7c15))
// so an independent implementation can reproduce every stream.
std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a64(std::string_view s);
std::uint64_t derive_seed(std::uint64_t master, std::string_view component, std::uint64_t index = 0);

} // namespace dial
