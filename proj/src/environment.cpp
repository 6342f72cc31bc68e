#include "dial/environment.hpp"

namespace dial {

double Environment::step(bool triggered, std::size_t k_candidates) {
    if (!triggered) return execute(kBaseAction);
    const auto candidates = candidate_actions(k_candidates);
    return execute(candidates.at(optimizer_choice(candidates)));
}

} // namespace dial
