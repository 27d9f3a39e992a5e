#include "mrgbsde/expression.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <vector>

namespace mrgbsde::expr {

namespace {

enum class Kind {
    constant,
    var_t,
    var_x,
    var_z,
    var_y,
    add,
    sub,
    mul,
    div,
    pow,
    neg,
    call_exp,
    call_abs,
    call_min,
    call_max,
    call_pos,
    call_sq,
};

}  // namespace

struct Expression::Node {
    Kind kind = Kind::constant;
    double value = 0.0;
    int y_index = 0;  // 0-based component for var_y
    std::size_t offset = 0;
    std::vector<std::shared_ptr<const Node>> child;
};

namespace {

using NodePtr = std::shared_ptr<const Expression::Node>;
using Node = Expression::Node;

NodePtr make_node(Kind kind, std::size_t offset,
                  std::vector<NodePtr> child = {}, double value = 0.0,
                  int y_index = 0) {
    auto n = std::make_shared<Node>();
    n->kind = kind;
    n->value = value;
    n->y_index = y_index;
    n->offset = offset;
    n->child = std::move(child);
    return n;
}

struct Parser {
    const std::string& src;
    int n_components;
    std::size_t pos = 0;

    void skip_ws() {
        while (pos < src.size() && std::isspace(static_cast<unsigned char>(src[pos]))) ++pos;
    }

    bool at_end() {
        skip_ws();
        return pos >= src.size();
    }

    char peek() {
        skip_ws();
        return pos < src.size() ? src[pos] : '\0';
    }

    bool consume(char c) {
        skip_ws();
        if (pos < src.size() && src[pos] == c) {
            ++pos;
            return true;
        }
        return false;
    }

    [[noreturn]] void fail(const std::string& message, std::size_t at) {
        throw ParseError(message, at);
    }

    NodePtr parse_expression() {
        NodePtr lhs = parse_term();
        for (;;) {
            skip_ws();
            const std::size_t at = pos;
            if (consume('+')) {
                lhs = make_node(Kind::add, at, {lhs, parse_term()});
            } else if (consume('-')) {
                lhs = make_node(Kind::sub, at, {lhs, parse_term()});
            } else {
                return lhs;
            }
        }
    }

    NodePtr parse_term() {
        NodePtr lhs = parse_power();
        for (;;) {
            skip_ws();
            const std::size_t at = pos;
            if (consume('*')) {
                lhs = make_node(Kind::mul, at, {lhs, parse_power()});
            } else if (consume('/')) {
                lhs = make_node(Kind::div, at, {lhs, parse_power()});
            } else {
                return lhs;
            }
        }
    }

    // factor := '-' factor | primary ('^' factor)?
    // Unary minus binds looser than '^', which is right associative.
    NodePtr parse_power() {
        skip_ws();
        const std::size_t at = pos;
        if (consume('-')) {
            return make_node(Kind::neg, at, {parse_power()});
        }
        NodePtr base = parse_primary();
        skip_ws();
        const std::size_t caret = pos;
        if (consume('^')) {
            return make_node(Kind::pow, caret, {base, parse_power()});
        }
        return base;
    }

    NodePtr parse_primary() {
        skip_ws();
        if (pos >= src.size()) fail("unexpected end of expression", pos);
        const std::size_t at = pos;
        const char c = src[pos];
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            const char* begin = src.c_str() + pos;
            char* end = nullptr;
            const double v = std::strtod(begin, &end);
            if (end == begin) fail("malformed number", at);
            pos += static_cast<std::size_t>(end - begin);
            return make_node(Kind::constant, at, {}, v);
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            std::size_t e = pos;
            while (e < src.size() &&
                   (std::isalnum(static_cast<unsigned char>(src[e])) || src[e] == '_')) {
                ++e;
            }
            const std::string name = src.substr(pos, e - pos);
            pos = e;
            skip_ws();
            if (pos < src.size() && src[pos] == '(') {
                return parse_call(name, at);
            }
            return parse_variable(name, at);
        }
        if (consume('(')) {
            NodePtr inner = parse_expression();
            if (!consume(')')) fail("expected ')'", pos);
            return inner;
        }
        fail(std::string("unexpected character '") + c + "'", at);
    }

    NodePtr parse_variable(const std::string& name, std::size_t at) {
        if (name == "t") return make_node(Kind::var_t, at);
        if (name == "x") return make_node(Kind::var_x, at);
        if (name == "z") return make_node(Kind::var_z, at);
        if (name.size() >= 2 && name[0] == 'y') {
            bool digits = true;
            for (std::size_t i = 1; i < name.size(); ++i) {
                if (!std::isdigit(static_cast<unsigned char>(name[i]))) digits = false;
            }
            if (digits) {
                const int idx = std::atoi(name.c_str() + 1);
                if (idx < 1 || idx > n_components) {
                    fail("y index out of range: " + name, at);
                }
                return make_node(Kind::var_y, at, {}, 0.0, idx - 1);
            }
        }
        fail("unknown identifier '" + name + "'", at);
    }

    NodePtr parse_call(const std::string& name, std::size_t at) {
        Kind kind;
        std::size_t arity = 1;
        if (name == "exp") {
            kind = Kind::call_exp;
        } else if (name == "abs") {
            kind = Kind::call_abs;
        } else if (name == "pos") {
            kind = Kind::call_pos;
        } else if (name == "sq") {
            kind = Kind::call_sq;
        } else if (name == "min") {
            kind = Kind::call_min;
            arity = 2;
        } else if (name == "max") {
            kind = Kind::call_max;
            arity = 2;
        } else {
            fail("unknown function '" + name + "'", at);
        }
        if (!consume('(')) fail("expected '(' after function name", pos);
        std::vector<NodePtr> args;
        args.push_back(parse_expression());
        while (consume(',')) args.push_back(parse_expression());
        if (!consume(')')) fail("expected ')'", pos);
        if (args.size() != arity) {
            fail("function '" + name + "' takes " + std::to_string(arity) +
                     " argument(s), got " + std::to_string(args.size()),
                 at);
        }
        return make_node(kind, at, std::move(args));
    }
};

double eval_node(const Node& n, const Env& env) {
    auto finite = [&n](double v) {
        if (!std::isfinite(v)) {
            throw Error("non-finite value in expression (offset " +
                        std::to_string(n.offset) + ")");
        }
        return v;
    };
    switch (n.kind) {
        case Kind::constant: return n.value;
        case Kind::var_t: return env.t;
        case Kind::var_x: return env.x;
        case Kind::var_z: return env.z;
        case Kind::var_y: {
            const auto idx = static_cast<std::size_t>(n.y_index);
            if (idx >= env.y.size()) {
                throw Error("y" + std::to_string(n.y_index + 1) +
                            " unavailable in this context (offset " +
                            std::to_string(n.offset) + ")");
            }
            return env.y[idx];
        }
        case Kind::add: return finite(eval_node(*n.child[0], env) + eval_node(*n.child[1], env));
        case Kind::sub: return finite(eval_node(*n.child[0], env) - eval_node(*n.child[1], env));
        case Kind::mul: return finite(eval_node(*n.child[0], env) * eval_node(*n.child[1], env));
        case Kind::div: {
            const double num = eval_node(*n.child[0], env);
            const double den = eval_node(*n.child[1], env);
            if (den == 0.0) {
                throw Error("division by zero (offset " + std::to_string(n.offset) + ")");
            }
            return finite(num / den);
        }
        case Kind::pow:
            return finite(std::pow(eval_node(*n.child[0], env), eval_node(*n.child[1], env)));
        case Kind::neg: return -eval_node(*n.child[0], env);
        case Kind::call_exp: return finite(std::exp(eval_node(*n.child[0], env)));
        case Kind::call_abs: return std::abs(eval_node(*n.child[0], env));
        case Kind::call_pos: return std::max(eval_node(*n.child[0], env), 0.0);
        case Kind::call_sq: {
            const double v = eval_node(*n.child[0], env);
            return finite(v * v);
        }
        case Kind::call_min:
            return std::min(eval_node(*n.child[0], env), eval_node(*n.child[1], env));
        case Kind::call_max:
            return std::max(eval_node(*n.child[0], env), eval_node(*n.child[1], env));
    }
    throw Error("corrupt expression node");
}

bool node_uses(const Node& n, Kind kind, int y_index) {
    if (n.kind == kind && (kind != Kind::var_y || n.y_index == y_index)) return true;
    for (const auto& c : n.child) {
        if (node_uses(*c, kind, y_index)) return true;
    }
    return false;
}

}  // namespace

Expression Expression::parse(const std::string& source, int n_components) {
    Parser p{source, n_components};
    Expression e;
    e.root_ = p.parse_expression();
    p.skip_ws();
    if (p.pos != source.size()) {
        throw ParseError("trailing characters after expression", p.pos);
    }
    e.source_ = source;
    return e;
}

double Expression::eval(const Env& env) const {
    if (!root_) throw Error("evaluating an empty expression");
    return eval_node(*root_, env);
}

bool Expression::uses(const std::string& var) const {
    if (!root_) return false;
    if (var == "t") return node_uses(*root_, Kind::var_t, 0);
    if (var == "x") return node_uses(*root_, Kind::var_x, 0);
    if (var == "z") return node_uses(*root_, Kind::var_z, 0);
    if (var.size() >= 2 && var[0] == 'y') {
        const int idx = std::atoi(var.c_str() + 1);
        return node_uses(*root_, Kind::var_y, idx - 1);
    }
    return false;
}

}  // namespace mrgbsde::expr
