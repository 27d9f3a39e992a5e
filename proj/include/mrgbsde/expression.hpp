#pragma once

#include <memory>
#include <span>
#include <string>

#include "mrgbsde/errors.hpp"

namespace mrgbsde::expr {

// Evaluation context: scalar time, node position, gradient, and the y vector.
struct Env {
    double t = 0.0;
    double x = 0.0;
    double z = 0.0;
    std::span<const double> y;
};

// Arithmetic expression over t, x, z, y1..yN with + - * / ^, unary minus and
// the calls exp, abs, min, max, pos, sq. Parsed once, evaluated per node.
class Expression {
public:
    Expression() = default;

    // Throws ParseError with the offending source offset. n_components bounds
    // the admissible y index: y1..y<n_components>.
    static Expression parse(const std::string& source, int n_components);

    // Throws Error on division by zero or a non-finite result, with the
    // source offset of the offending operation.
    double eval(const Env& env) const;

    // Variable usage, var is one of "t", "x", "z", "y1".."yN".
    bool uses(const std::string& var) const;

    bool empty() const { return root_ == nullptr; }
    const std::string& source() const { return source_; }

    struct Node;  // opaque AST node

private:
    std::shared_ptr<const Node> root_;
    std::string source_;
};

}  // namespace mrgbsde::expr
