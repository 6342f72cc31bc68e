#include "dial/feature_dsl.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <optional>
#include <regex>
#include <vector>

namespace dial {

namespace dsl_detail {

enum class ValueType { number, string };

enum class Op {
    number, string, text, field,
    add, sub, mul, div, neg,
    length, keyword_count, regex_count, contains, threshold, min, max, clamp, abs
};

} // namespace dsl_detail

using dsl_detail::Op;
using dsl_detail::ValueType;

namespace {
constexpr double kBound = 1e12;
} // namespace

struct DslExpression::Node {
    Op op;
    ValueType type = ValueType::number;
    double number = 0.0;
    std::string str;
    std::optional<std::regex> pattern;
    std::vector<std::shared_ptr<const Node>> args;
};

namespace {

using NodePtr = std::shared_ptr<const DslExpression::Node>;
using Node = DslExpression::Node;

class Parser {
public:
    explicit Parser(std::string_view src) : src_(src) {}

    NodePtr parse() {
        auto root = expr();
        skip_ws();
        if (pos_ != src_.size()) fail("unexpected trailing input");
        if (root->type != ValueType::number) fail("expression must evaluate to a number");
        return root;
    }

private:
    [[noreturn]] void fail(const std::string& what) const { throw DslParseError(std::string(src_), pos_, what); }

    void skip_ws() {
        while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    }

    bool accept(char c) {
        skip_ws();
        if (pos_ < src_.size() && src_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    void expect(char c) {
        if (!accept(c)) fail(std::string("expected '") + c + "'");
    }

    static NodePtr make(Op op, ValueType type, std::vector<NodePtr> args = {}) {
        auto n = std::make_shared<Node>();
        n->op = op;
        n->type = type;
        n->args = std::move(args);
        return n;
    }

    void require_number(const NodePtr& n) {
        if (n->type != ValueType::number) fail("numeric operand expected");
    }

    NodePtr expr() {
        auto lhs = term();
        for (;;) {
            if (accept('+')) {
                auto rhs = term();
                require_number(lhs);
                require_number(rhs);
                lhs = make(Op::add, ValueType::number, {lhs, rhs});
            } else if (accept('-')) {
                auto rhs = term();
                require_number(lhs);
                require_number(rhs);
                lhs = make(Op::sub, ValueType::number, {lhs, rhs});
            } else {
                return lhs;
            }
        }
    }

    NodePtr term() {
        auto lhs = unary();
        for (;;) {
            if (accept('*')) {
                auto rhs = unary();
                require_number(lhs);
                require_number(rhs);
                lhs = make(Op::mul, ValueType::number, {lhs, rhs});
            } else if (accept('/')) {
                auto rhs = unary();
                require_number(lhs);
                require_number(rhs);
                lhs = make(Op::div, ValueType::number, {lhs, rhs});
            } else {
                return lhs;
            }
        }
    }

    NodePtr unary() {
        if (accept('-')) {
            auto operand = unary();
            require_number(operand);
            return make(Op::neg, ValueType::number, {operand});
        }
        return primary();
    }

    NodePtr primary() {
        skip_ws();
        if (pos_ >= src_.size()) fail("unexpected end of expression");
        const char c = src_[pos_];
        if (c == '(') {
            ++pos_;
            auto inner = expr();
            expect(')');
            return inner;
        }
        if (c == '"') return string_literal();
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number_literal();
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return identifier();
        fail(std::string("unexpected character '") + c + "'");
    }

    NodePtr string_literal() {
        ++pos_;  // opening quote
        std::string value;
        while (pos_ < src_.size() && src_[pos_] != '"') {
            if (src_[pos_] == '\\' && pos_ + 1 < src_.size()) ++pos_;
            value.push_back(src_[pos_++]);
        }
        if (pos_ >= src_.size()) fail("unterminated string literal");
        ++pos_;
        auto n = std::make_shared<Node>();
        n->op = Op::string;
        n->type = ValueType::string;
        n->str = std::move(value);
        return n;
    }

    NodePtr number_literal() {
        const std::size_t start = pos_;
        while (pos_ < src_.size() &&
               (std::isdigit(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '.' || src_[pos_] == 'e' ||
                src_[pos_] == 'E' ||
                ((src_[pos_] == '-' || src_[pos_] == '+') && (src_[pos_ - 1] == 'e' || src_[pos_ - 1] == 'E')))) {
            ++pos_;
        }
        const std::string lit(src_.substr(start, pos_ - start));
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(lit, &used);
        } catch (const std::exception&) {
            pos_ = start;
            fail("malformed number '" + lit + "'");
        }
        if (used != lit.size() || !std::isfinite(v)) {
            pos_ = start;
            fail("malformed number '" + lit + "'");
        }
        auto n = std::make_shared<Node>();
        n->op = Op::number;
        n->number = v;
        return n;
    }

    NodePtr identifier() {
        const std::size_t start = pos_;
        while (pos_ < src_.size() && (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_')) ++pos_;
        const std::string name(src_.substr(start, pos_ - start));
        if (accept('(')) return call(name, start);
        if (name == "text") return make(Op::text, ValueType::string);
        auto n = std::make_shared<Node>();
        n->op = Op::field;
        n->str = name;
        return n;
    }

    NodePtr call(const std::string& name, std::size_t start) {
        std::vector<NodePtr> args;
        if (!accept(')')) {
            do {
                args.push_back(expr());
            } while (accept(','));
            expect(')');
        }
        auto arity = [&](std::size_t lo, std::size_t hi) {
            if (args.size() < lo || args.size() > hi) {
                pos_ = start;
                fail("wrong number of arguments to " + name);
            }
        };
        auto want = [&](std::size_t i, ValueType t) {
            if (args[i]->type != t) {
                pos_ = start;
                fail("argument " + std::to_string(i + 1) + " of " + name + " must be a " +
                     (t == ValueType::number ? "number" : "string"));
            }
        };
        auto want_literal = [&](std::size_t i) {
            if (args[i]->op != Op::string) {
                pos_ = start;
                fail("argument " + std::to_string(i + 1) + " of " + name + " must be a string literal");
            }
        };

        if (name == "field") {
            arity(1, 1);
            want_literal(0);
            auto n = std::make_shared<Node>();
            n->op = Op::field;
            n->str = args[0]->str;
            return n;
        }
        if (name == "length") {
            arity(1, 2);
            want(0, ValueType::string);
            if (args.size() == 2) want(1, ValueType::number);
            return make(Op::length, ValueType::number, std::move(args));
        }
        if (name == "keyword_count" || name == "contains") {
            arity(2, 2);
            want(0, ValueType::string);
            want_literal(1);
            return make(name == "contains" ? Op::contains : Op::keyword_count, ValueType::number, std::move(args));
        }
        if (name == "regex_count") {
            arity(2, 2);
            want(0, ValueType::string);
            want_literal(1);
            auto n = std::make_shared<Node>();
            n->op = Op::regex_count;
            n->args = std::move(args);
            try {
                n->pattern.emplace(n->args[1]->str, std::regex::ECMAScript);
            } catch (const std::regex_error& e) {
                pos_ = start;
                fail(std::string("invalid regex: ") + e.what());
            }
            return n;
        }
        if (name == "threshold" || name == "indicator") {
            arity(2, 2);
            want(0, ValueType::number);
            want(1, ValueType::number);
            return make(Op::threshold, ValueType::number, std::move(args));
        }
        if (name == "min" || name == "max") {
            arity(1, 16);
            for (std::size_t i = 0; i < args.size(); ++i) want(i, ValueType::number);
            return make(name == "min" ? Op::min : Op::max, ValueType::number, std::move(args));
        }
        if (name == "clamp") {
            arity(3, 3);
            for (std::size_t i = 0; i < 3; ++i) want(i, ValueType::number);
            return make(Op::clamp, ValueType::number, std::move(args));
        }
        if (name == "abs") {
            arity(1, 1);
            want(0, ValueType::number);
            return make(Op::abs, ValueType::number, std::move(args));
        }
        pos_ = start;
        fail("unknown function '" + name + "'");
    }

    std::string_view src_;
    std::size_t pos_ = 0;
};

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

double count_keyword(std::string_view text, std::string_view keyword) {
    if (keyword.empty() || text.empty()) return 0.0;
    const std::string hay = lower(text);
    const std::string needle = lower(keyword);
    double count = 0.0;
    for (std::size_t pos = hay.find(needle); pos != std::string::npos; pos = hay.find(needle, pos + needle.size())) {
        count += 1.0;
    }
    return count;
}

class Evaluator {
public:
    explicit Evaluator(const Observation& obs) : obs_(obs) {}

    bool flagged = false;

    double bound(double v) {
        if (v > kBound) {
            flagged = true;
            return kBound;
        }
        if (v < -kBound) {
            flagged = true;
            return -kBound;
        }
        return v;
    }

    std::string_view str(const Node& n) const {
        return n.op == Op::text ? std::string_view(obs_.text) : std::string_view(n.str);
    }

    double num(const Node& n) {
        switch (n.op) {
        case Op::number: return n.number;
        case Op::field: return obs_.numeric_field(n.str).value_or(0.0);
        case Op::add: return bound(num(*n.args[0]) + num(*n.args[1]));
        case Op::sub: return bound(num(*n.args[0]) - num(*n.args[1]));
        case Op::mul: return bound(num(*n.args[0]) * num(*n.args[1]));
        case Op::div: {
            const double a = num(*n.args[0]);
            const double b = num(*n.args[1]);
            if (b == 0.0) {
                flagged = true;
                return 0.0;
            }
            return bound(a / b);
        }
        case Op::neg: return -num(*n.args[0]);
        case Op::length: {
            const double len = static_cast<double>(str(*n.args[0]).size());
            if (n.args.size() == 1) return len;
            const double norm = num(*n.args[1]);
            if (norm == 0.0) {
                flagged = true;
                return 0.0;
            }
            return bound(len / norm);
        }
        case Op::keyword_count: return count_keyword(str(*n.args[0]), n.args[1]->str);
        case Op::contains: return count_keyword(str(*n.args[0]), n.args[1]->str) > 0.0 ? 1.0 : 0.0;
        case Op::regex_count: {
            const std::string_view s = str(*n.args[0]);
            using It = std::string_view::const_iterator;
            std::regex_iterator<It> it(s.begin(), s.end(), *n.pattern), end;
            return static_cast<double>(std::distance(it, end));
        }
        case Op::threshold: return num(*n.args[0]) > num(*n.args[1]) ? 1.0 : 0.0;
        case Op::min: {
            double m = num(*n.args[0]);
            for (std::size_t i = 1; i < n.args.size(); ++i) m = std::min(m, num(*n.args[i]));
            return m;
        }
        case Op::max: {
            double m = num(*n.args[0]);
            for (std::size_t i = 1; i < n.args.size(); ++i) m = std::max(m, num(*n.args[i]));
            return m;
        }
        case Op::clamp: {
            const double x = num(*n.args[0]);
            const double lo = num(*n.args[1]);
            const double hi = num(*n.args[2]);
            return std::min(std::max(x, lo), hi);
        }
        case Op::abs: return std::abs(num(*n.args[0]));
        case Op::string:
        case Op::text: break;
        }
        throw Error("feature expression: string used where a number is required");
    }

private:
    const Observation& obs_;
};

} // namespace

DslExpression DslExpression::parse(std::string_view source) {
    Parser p(source);
    return DslExpression(std::string(source), p.parse());
}

DslResult DslExpression::evaluate(const Observation& obs) const {
    Evaluator ev(obs);
    const double v = ev.num(*root_);
    return DslResult{v, ev.flagged};
}

} // namespace dial
