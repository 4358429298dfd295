#include <array>
#include <cmath>
#include <optional>
#include <functional>

#include "symreg/error.hpp"
#include "symreg/expr.hpp"

namespace symreg::expr {

namespace {

constexpr std::array<double, 5> kSmallConstants = {0.5, 1.0, 2.0, 3.0, 10.0};

struct TreeBuilder {
    Rng& rng;
    std::size_t arity;
    const RandomTreeOptions& opts;
    std::size_t next_param;
    std::size_t params_left;

    Expression leaf() {
        const double u = rng.uniform();
        if (u < 0.3 && params_left > 0) {
            --params_left;
            return Expression::parameter(next_param++);
        }
        if (u < 0.8 || arity == 0) {
            if (arity == 0) return constant();
            return Expression::variable(rng.index(arity));
        }
        return constant();
    }

    Expression constant() {
        if (opts.random_constants) {
            // Mix of magnitudes and signs to exercise printing.
            const double mag = std::pow(10.0, rng.uniform(-4.0, 4.0));
            return Expression::constant(rng.coin(0.5) ? -mag : mag);
        }
        return Expression::constant(kSmallConstants[rng.index(kSmallConstants.size())]);
    }

    Expression grow(std::size_t depth_left) {
        if (depth_left <= 1 || rng.coin(0.35)) return leaf();
        if (rng.coin(0.35)) {
            const UnaryOp op = kUnaryOps[rng.index(std::size(kUnaryOps))];
            return Expression::unary(op, grow(depth_left - 1));
        }
        const BinaryOp op = kBinaryOps[rng.index(std::size(kBinaryOps))];
        Expression l = grow(depth_left - 1);
        Expression r = grow(depth_left - 1);
        return Expression::binary(op, std::move(l), std::move(r));
    }
};

// Rebuilds `e` with the node at pre-order position `target` replaced.
Expression rewrite(const Expression& e, std::size_t target, std::size_t& counter,
                   const std::function<Expression(const Expression&)>& edit) {
    const std::size_t here = counter++;
    if (here == target) return edit(e);
    switch (e.kind()) {
        case NodeKind::Unary: {
            if (target >= here + e.size()) return e;
            return Expression::unary(e.unary_op(), rewrite(e.child(), target, counter, edit));
        }
        case NodeKind::Binary: {
            if (target >= here + e.size()) return e;
            const std::size_t left_end = counter + e.lhs().size();
            if (target < left_end) {
                Expression l = rewrite(e.lhs(), target, counter, edit);
                return Expression::binary(e.binary_op(), std::move(l), e.rhs());
            }
            counter = left_end;
            Expression r = rewrite(e.rhs(), target, counter, edit);
            return Expression::binary(e.binary_op(), e.lhs(), std::move(r));
        }
        default: return e;
    }
}

Expression replace_at(const Expression& e, std::size_t target,
                      const std::function<Expression(const Expression&)>& edit) {
    std::size_t counter = 0;
    return rewrite(e, target, counter, edit);
}

void operator_positions(const Expression& e, std::size_t& counter, std::vector<std::size_t>& out) {
    const std::size_t here = counter++;
    if (e.kind() == NodeKind::Unary) {
        out.push_back(here);
        operator_positions(e.child(), counter, out);
    } else if (e.kind() == NodeKind::Binary) {
        out.push_back(here);
        operator_positions(e.lhs(), counter, out);
        operator_positions(e.rhs(), counter, out);
    }
}

std::optional<Expression> swap_operator(const Expression& root, Rng& rng) {
    std::vector<std::size_t> ops;
    std::size_t counter = 0;
    operator_positions(root, counter, ops);
    if (ops.empty()) return std::nullopt;
    const std::size_t target = ops[rng.index(ops.size())];
    return replace_at(root, target, [&](const Expression& node) {
        if (node.kind() == NodeKind::Unary) {
            UnaryOp op = node.unary_op();
            while (op == node.unary_op()) op = kUnaryOps[rng.index(std::size(kUnaryOps))];
            return Expression::unary(op, node.child());
        }
        BinaryOp op = node.binary_op();
        while (op == node.binary_op()) op = kBinaryOps[rng.index(std::size(kBinaryOps))];
        return Expression::binary(op, node.lhs(), node.rhs());
    });
}

} // namespace

Expression random_expression(Rng& rng, std::size_t arity, const RandomTreeOptions& opts) {
    TreeBuilder b{rng, arity, opts, opts.first_param, opts.max_new_params};
    return b.grow(std::max<std::size_t>(opts.max_depth, 1));
}

Skeleton random_mutation(const Skeleton& s, std::uint64_t seed) {
    Rng rng(seed);
    constexpr int kAttempts = 16;
    for (int attempt = 0; attempt < kAttempts; ++attempt) {
        const std::size_t target = rng.index(s.expression.size());
        const std::size_t free_slots = kMaxParams - std::min(kMaxParams, s.param_count);
        std::optional<Expression> edited;
        switch (rng.index(4)) {
            case 0: {
                RandomTreeOptions opts;
                opts.max_depth = 1 + rng.index(3);
                opts.first_param = s.param_count;
                opts.max_new_params = free_slots;
                edited = replace_at(s.expression, target, [&](const Expression&) {
                    return random_expression(rng, s.arity, opts);
                });
                break;
            }
            case 1: edited = swap_operator(s.expression, rng); break;
            case 2: {
                const UnaryOp op = kUnaryOps[rng.index(std::size(kUnaryOps))];
                edited = replace_at(s.expression, target, [&](const Expression& node) {
                    return Expression::unary(op, node);
                });
                break;
            }
            case 3: {
                if (free_slots == 0) break;
                edited = replace_at(s.expression, target, [&](const Expression& node) {
                    return Expression::binary(BinaryOp::Mul, Expression::parameter(s.param_count),
                                              node);
                });
                break;
            }
        }
        if (!edited || edited->depth() > kMaxDepth) continue;
        try {
            Skeleton out = make_skeleton(*edited, s.arity);
            out.source_text = print(out);
            return out;
        } catch (const ParseError&) {
            continue;
        }
    }
    return s;
}

} // namespace symreg::expr
