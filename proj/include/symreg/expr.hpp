#pragma once

// Expression DSL for candidate equation skeletons.
//
// Surface grammar (whitespace-insensitive):
//
//   expr    := term { ("+" | "-") term }
//   term    := unary { ("*" | "/") unary }
//   unary   := "-" unary | power
//   power   := primary [ ("^" | "**") unary ]          (right associative)
//   primary := number | variable | parameter
//            | func "(" expr ")" | "pow" "(" expr "," expr ")"
//            | "(" expr ")"
//   variable  := "x" digits | "x_" digits | declared feature name
//   parameter := "p" digits | "p_" digits              (index 0..9)
//   func      := neg | log | exp | sin | cos | sqrt | abs | square | inv
//   number    := digits [ "." digits ] [ ("e"|"E") ["+"|"-"] digits ]
//
// A minus sign directly in front of a numeric literal (and not followed by
// "^") folds into a negative constant, so printed constants such as "(-2.5)"
// parse back to the same Const node.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "symreg/matrix.hpp"
#include "symreg/rng.hpp"

namespace symreg::expr {

inline constexpr std::size_t kMaxParams = 10;
inline constexpr std::size_t kMaxDepth = 12;

enum class NodeKind { Const, Var, Param, Unary, Binary };
enum class UnaryOp { Neg, Log, Exp, Sin, Cos, Sqrt, Abs, Square, Inv };
enum class BinaryOp { Add, Sub, Mul, Div, Pow };

inline constexpr UnaryOp kUnaryOps[] = {UnaryOp::Neg, UnaryOp::Log,  UnaryOp::Exp,
                                        UnaryOp::Sin, UnaryOp::Cos,  UnaryOp::Sqrt,
                                        UnaryOp::Abs, UnaryOp::Square, UnaryOp::Inv};
inline constexpr BinaryOp kBinaryOps[] = {BinaryOp::Add, BinaryOp::Sub, BinaryOp::Mul,
                                          BinaryOp::Div, BinaryOp::Pow};

std::string_view name_of(UnaryOp op);
std::string_view name_of(BinaryOp op);

// Immutable expression tree with shared structure. Copies are cheap.
class Expression {
public:
    Expression();  // the constant 0

    static Expression constant(double value);
    static Expression variable(std::size_t index);
    static Expression parameter(std::size_t index);
    static Expression unary(UnaryOp op, Expression child);
    static Expression binary(BinaryOp op, Expression lhs, Expression rhs);

    NodeKind kind() const;
    double value() const;         // Const only
    std::size_t index() const;    // Var / Param only
    UnaryOp unary_op() const;     // Unary only
    BinaryOp binary_op() const;   // Binary only
    const Expression& child() const;  // Unary only
    const Expression& lhs() const;    // Binary only
    const Expression& rhs() const;    // Binary only

    std::size_t depth() const;
    std::size_t size() const;

    // Structural equality.
    friend bool operator==(const Expression& a, const Expression& b);

private:
    struct Node;
    explicit Expression(std::shared_ptr<const Node> node) : node_(std::move(node)) {}
    std::shared_ptr<const Node> node_;
};

struct Skeleton {
    Expression expression;
    std::size_t arity = 0;
    std::size_t param_count = 0;
    std::string source_text;

    // Structural comparison; source_text is not part of identity.
    friend bool operator==(const Skeleton& a, const Skeleton& b) {
        return a.arity == b.arity && a.param_count == b.param_count &&
               a.expression == b.expression;
    }
};

// Renumbers parameters densely in pre-order first-occurrence order and
// checks every invariant. Throws ParseError (position 0) on violation.
Skeleton make_skeleton(const Expression& e, std::size_t arity, std::string source_text = {});

Skeleton parse(std::string_view text, std::size_t arity,
               std::span<const std::string> feature_names = {});

std::string print(const Expression& e);
inline std::string print(const Skeleton& s) { return print(s.expression); }

// Returns an empty list when the skeleton satisfies every invariant.
std::vector<std::string> violations(const Skeleton& s);

// Row-wise evaluation. Rows with a domain violation come back as NaN.
// Throws Error on arity mismatch or a short parameter vector.
std::vector<double> evaluate(const Skeleton& s, const Matrix& features,
                             std::span<const double> params);

// p0*x0 + p1*x1 + ... + pk, capped so it fits in kMaxParams slots.
Skeleton linear_skeleton(std::size_t arity);

struct RandomTreeOptions {
    std::size_t max_depth = 3;
    std::size_t first_param = 0;  // index for the first fresh parameter
    std::size_t max_new_params = kMaxParams;
    bool random_constants = false;  // draw arbitrary reals instead of small literals
};

Expression random_expression(Rng& rng, std::size_t arity, const RandomTreeOptions& opts);

// One random edit: subtree replacement, operator swap, unary wrap or
// parameter scaling. Falls back to the input when no edit fits the caps.
Skeleton random_mutation(const Skeleton& s, std::uint64_t seed);

} // namespace symreg::expr
