#pragma once

#include "dial/common.hpp"
#include "dial/observation.hpp"

#include <memory>
#include <string>
#include <string_view>

namespace dial {

class DslParseError : public Error {
public:
    DslParseError(const std::string& source, std::size_t pos, const std::string& what)
        : Error("feature expression error at " + std::to_string(pos) + " in '" + source + "': " + what),
          pos_(pos) {}
    std::size_t position() const noexcept { return pos_; }

private:
    std::size_t pos_;
};

struct DslResult {
    double value = 0.0;
    /// Set when a division by zero was mapped to 0 or a value was clipped to
    /// the +/-1e12 arithmetic bound.
    bool flagged = false;
};

/// A compiled feature expression.
///
/// Grammar (whitespace-insensitive):
///
///     expr    := term (('+' | '-') term)*
///     term    := unary (('*' | '/') unary)*
///     unary   := '-' unary | primary
///     primary := NUMBER | "string" | IDENT | IDENT '(' expr (',' expr)* ')' | '(' expr ')'
///
/// Identifiers name numeric observation fields (step_count, signal,
/// token_entropy, evidence_count, num_available_actions, is_finish, or any
/// environment extra such as type_proxy); unexposed fields read as 0. The
/// identifier `text` is the observation text.
///
/// Functions:
///     field("name")             numeric field by name
///     length(s [, norm])        character count, optionally divided by norm
///     keyword_count(s, "kw")    case-insensitive, non-overlapping occurrences
///     regex_count(s, "re")      ECMAScript regex matches; pattern must be a literal
///     contains(s, "kw")         1 if keyword_count > 0
///     threshold(x, t)           1 if x > t else 0 (alias: indicator)
///     min(a, b, ...), max(a, b, ...), clamp(x, lo, hi), abs(x)
class DslExpression {
public:
    struct Node;

    static DslExpression parse(std::string_view source);

    DslResult evaluate(const Observation& obs) const;
    const std::string& source() const { return source_; }

private:
    DslExpression(std::string source, std::shared_ptr<const Node> root)
        : source_(std::move(source)), root_(std::move(root)) {}

    std::string source_;
    std::shared_ptr<const Node> root_;
};

} // namespace dial
