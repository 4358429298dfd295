#include "symreg/expr.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <limits>
#include <optional>
#include <unordered_map>

#include "symreg/error.hpp"

namespace symreg::expr {

struct Expression::Node {
    NodeKind kind;
    double value = 0.0;
    std::size_t index = 0;
    UnaryOp unary = UnaryOp::Neg;
    BinaryOp binary = BinaryOp::Add;
    std::optional<Expression> lhs;
    std::optional<Expression> rhs;
    std::size_t depth = 1;
    std::size_t size = 1;
};

std::string_view name_of(UnaryOp op) {
    switch (op) {
        case UnaryOp::Neg: return "neg";
        case UnaryOp::Log: return "log";
        case UnaryOp::Exp: return "exp";
        case UnaryOp::Sin: return "sin";
        case UnaryOp::Cos: return "cos";
        case UnaryOp::Sqrt: return "sqrt";
        case UnaryOp::Abs: return "abs";
        case UnaryOp::Square: return "square";
        case UnaryOp::Inv: return "inv";
    }
    return "?";
}

std::string_view name_of(BinaryOp op) {
    switch (op) {
        case BinaryOp::Add: return "+";
        case BinaryOp::Sub: return "-";
        case BinaryOp::Mul: return "*";
        case BinaryOp::Div: return "/";
        case BinaryOp::Pow: return "^";
    }
    return "?";
}

Expression::Expression() : Expression(constant(0.0)) {}

Expression Expression::constant(double value) {
    auto n = std::make_shared<Node>();
    n->kind = NodeKind::Const;
    n->value = value;
    return Expression(std::move(n));
}

Expression Expression::variable(std::size_t index) {
    auto n = std::make_shared<Node>();
    n->kind = NodeKind::Var;
    n->index = index;
    return Expression(std::move(n));
}

Expression Expression::parameter(std::size_t index) {
    auto n = std::make_shared<Node>();
    n->kind = NodeKind::Param;
    n->index = index;
    return Expression(std::move(n));
}

Expression Expression::unary(UnaryOp op, Expression child) {
    auto n = std::make_shared<Node>();
    n->kind = NodeKind::Unary;
    n->unary = op;
    n->depth = child.depth() + 1;
    n->size = child.size() + 1;
    n->lhs = std::move(child);
    return Expression(std::move(n));
}

Expression Expression::binary(BinaryOp op, Expression lhs, Expression rhs) {
    auto n = std::make_shared<Node>();
    n->kind = NodeKind::Binary;
    n->binary = op;
    n->depth = std::max(lhs.depth(), rhs.depth()) + 1;
    n->size = lhs.size() + rhs.size() + 1;
    n->lhs = std::move(lhs);
    n->rhs = std::move(rhs);
    return Expression(std::move(n));
}

NodeKind Expression::kind() const { return node_->kind; }
double Expression::value() const { return node_->value; }
std::size_t Expression::index() const { return node_->index; }
UnaryOp Expression::unary_op() const { return node_->unary; }
BinaryOp Expression::binary_op() const { return node_->binary; }
const Expression& Expression::child() const { return *node_->lhs; }
const Expression& Expression::lhs() const { return *node_->lhs; }
const Expression& Expression::rhs() const { return *node_->rhs; }
std::size_t Expression::depth() const { return node_->depth; }
std::size_t Expression::size() const { return node_->size; }

bool operator==(const Expression& a, const Expression& b) {
    if (a.node_ == b.node_) return true;
    if (a.kind() != b.kind() || a.size() != b.size()) return false;
    switch (a.kind()) {
        case NodeKind::Const: return a.value() == b.value();
        case NodeKind::Var:
        case NodeKind::Param: return a.index() == b.index();
        case NodeKind::Unary: return a.unary_op() == b.unary_op() && a.child() == b.child();
        case NodeKind::Binary:
            return a.binary_op() == b.binary_op() && a.lhs() == b.lhs() && a.rhs() == b.rhs();
    }
    return false;
}

namespace {

Expression renumber(const Expression& e, std::unordered_map<std::size_t, std::size_t>& slots) {
    switch (e.kind()) {
        case NodeKind::Const:
        case NodeKind::Var: return e;
        case NodeKind::Param: {
            auto [it, inserted] = slots.try_emplace(e.index(), slots.size());
            if (it->second == e.index()) return e;
            return Expression::parameter(it->second);
        }
        case NodeKind::Unary: {
            Expression c = renumber(e.child(), slots);
            if (c == e.child()) return e;
            return Expression::unary(e.unary_op(), std::move(c));
        }
        case NodeKind::Binary: {
            // Left subtree first so numbering follows reading order.
            Expression l = renumber(e.lhs(), slots);
            Expression r = renumber(e.rhs(), slots);
            return Expression::binary(e.binary_op(), std::move(l), std::move(r));
        }
    }
    return e;
}

void collect_violations(const Expression& e, std::size_t arity, std::vector<std::size_t>& params,
                        std::vector<std::string>& out) {
    switch (e.kind()) {
        case NodeKind::Const:
            if (!std::isfinite(e.value())) out.push_back("non-finite constant");
            break;
        case NodeKind::Var:
            if (e.index() >= arity)
                out.push_back("variable x" + std::to_string(e.index()) + " out of range for arity " +
                              std::to_string(arity));
            break;
        case NodeKind::Param:
            if (e.index() >= kMaxParams)
                out.push_back("parameter p" + std::to_string(e.index()) + " exceeds the " +
                              std::to_string(kMaxParams) + "-parameter cap");
            params.push_back(e.index());
            break;
        case NodeKind::Unary: collect_violations(e.child(), arity, params, out); break;
        case NodeKind::Binary:
            collect_violations(e.lhs(), arity, params, out);
            collect_violations(e.rhs(), arity, params, out);
            break;
    }
}

std::size_t count_distinct(std::vector<std::size_t> v) {
    std::sort(v.begin(), v.end());
    return static_cast<std::size_t>(std::unique(v.begin(), v.end()) - v.begin());
}

} // namespace

std::vector<std::string> violations(const Skeleton& s) {
    std::vector<std::string> out;
    std::vector<std::size_t> seen;
    collect_violations(s.expression, s.arity, seen, out);
    const std::size_t distinct = count_distinct(seen);
    if (distinct != s.param_count) out.push_back("param_count does not match referenced slots");
    if (s.param_count > kMaxParams) out.push_back("more than 10 parameter slots");
    // Dense prefix: every slot below param_count is referenced.
    for (std::size_t idx : seen)
        if (idx >= distinct) {
            out.push_back("parameter slots are not a dense prefix");
            break;
        }
    return out;
}

Skeleton make_skeleton(const Expression& e, std::size_t arity, std::string source_text) {
    std::unordered_map<std::size_t, std::size_t> slots;
    Expression canonical = renumber(e, slots);
    Skeleton s{std::move(canonical), arity, slots.size(), std::move(source_text)};
    if (auto v = violations(s); !v.empty()) throw ParseError(v.front(), 0);
    return s;
}

// ---------------------------------------------------------------------------
// Parsing

namespace {

enum class Tok { Number, Ident, LParen, RParen, Comma, Plus, Minus, Star, Slash, Caret, End };

struct Token {
    Tok kind;
    std::size_t pos;
    std::string_view text;
    double number = 0.0;
};

class Lexer {
public:
    explicit Lexer(std::string_view src) : src_(src) {}

    std::vector<Token> run() {
        std::vector<Token> out;
        while (true) {
            while (i_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[i_]))) ++i_;
            if (i_ >= src_.size()) {
                out.push_back({Tok::End, i_, {}});
                return out;
            }
            const char c = src_[i_];
            const std::size_t start = i_;
            if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
                out.push_back(number());
            } else if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
                while (i_ < src_.size() &&
                       (std::isalnum(static_cast<unsigned char>(src_[i_])) || src_[i_] == '_'))
                    ++i_;
                out.push_back({Tok::Ident, start, src_.substr(start, i_ - start)});
            } else {
                Tok k;
                std::size_t len = 1;
                switch (c) {
                    case '(': k = Tok::LParen; break;
                    case ')': k = Tok::RParen; break;
                    case ',': k = Tok::Comma; break;
                    case '+': k = Tok::Plus; break;
                    case '-': k = Tok::Minus; break;
                    case '/': k = Tok::Slash; break;
                    case '^': k = Tok::Caret; break;
                    case '*':
                        if (i_ + 1 < src_.size() && src_[i_ + 1] == '*') {
                            k = Tok::Caret;
                            len = 2;
                        } else {
                            k = Tok::Star;
                        }
                        break;
                    default:
                        throw ParseError("unexpected character '" + std::string(1, c) +
                                             "' at position " + std::to_string(start),
                                         start);
                }
                i_ += len;
                out.push_back({k, start, src_.substr(start, len)});
            }
        }
    }

private:
    Token number() {
        const std::size_t start = i_;
        auto digits = [&] {
            std::size_t n = 0;
            while (i_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[i_]))) ++i_, ++n;
            return n;
        };
        std::size_t n = digits();
        if (i_ < src_.size() && src_[i_] == '.') {
            ++i_;
            n += digits();
        }
        if (n == 0) throw ParseError("malformed number at position " + std::to_string(start), start);
        if (i_ < src_.size() && (src_[i_] == 'e' || src_[i_] == 'E')) {
            std::size_t save = i_++;
            if (i_ < src_.size() && (src_[i_] == '+' || src_[i_] == '-')) ++i_;
            if (digits() == 0) i_ = save;  // "2e" is 2 followed by identifier e
        }
        std::string_view text = src_.substr(start, i_ - start);
        double v = 0.0;
        auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
        if (ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(v))
            throw ParseError("malformed number '" + std::string(text) + "' at position " +
                                 std::to_string(start),
                             start);
        return {Tok::Number, start, text, v};
    }

    std::string_view src_;
    std::size_t i_ = 0;
};

std::optional<UnaryOp> unary_by_name(std::string_view name) {
    for (UnaryOp op : kUnaryOps)
        if (name_of(op) == name) return op;
    return std::nullopt;
}

// Parses "x12"/"x_12" style tokens; returns the numeric suffix.
std::optional<std::size_t> indexed_name(std::string_view name, char prefix) {
    if (name.size() < 2 || name[0] != prefix) return std::nullopt;
    std::string_view rest = name.substr(1);
    if (rest.front() == '_') rest.remove_prefix(1);
    if (rest.empty() || rest.size() > 6) return std::nullopt;
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(rest.data(), rest.data() + rest.size(), v);
    if (ec != std::errc() || ptr != rest.data() + rest.size()) return std::nullopt;
    return v;
}

class Parser {
public:
    Parser(std::vector<Token> toks, std::size_t arity, std::span<const std::string> names)
        : toks_(std::move(toks)), arity_(arity), names_(names) {}

    Expression parse_all() {
        Expression e = expr();
        if (peek().kind != Tok::End) fail("unexpected '" + std::string(peek().text) + "'");
        return e;
    }

private:
    const Token& peek(std::size_t ahead = 0) const {
        return toks_[std::min(pos_ + ahead, toks_.size() - 1)];
    }
    const Token& take() { return toks_[pos_ < toks_.size() - 1 ? pos_++ : pos_]; }

    [[noreturn]] void fail(const std::string& what) const {
        const Token& t = peek();
        std::string msg = what;
        if (t.kind == Tok::End) {
            if (what.rfind("unexpected", 0) == 0) msg = "unexpected end of input";
        }
        throw ParseError(msg + " at position " + std::to_string(t.pos), t.pos);
    }

    void expect(Tok kind, const char* what) {
        if (peek().kind != kind) fail(std::string("expected ") + what);
        take();
    }

    Expression expr() {
        Expression lhs = term();
        while (peek().kind == Tok::Plus || peek().kind == Tok::Minus) {
            BinaryOp op = take().kind == Tok::Plus ? BinaryOp::Add : BinaryOp::Sub;
            lhs = Expression::binary(op, std::move(lhs), term());
        }
        return lhs;
    }

    Expression term() {
        Expression lhs = unary();
        while (peek().kind == Tok::Star || peek().kind == Tok::Slash) {
            BinaryOp op = take().kind == Tok::Star ? BinaryOp::Mul : BinaryOp::Div;
            lhs = Expression::binary(op, std::move(lhs), unary());
        }
        return lhs;
    }

    Expression unary() {
        if (peek().kind == Tok::Minus) {
            if (peek(1).kind == Tok::Number && peek(2).kind != Tok::Caret) {
                take();
                return Expression::constant(-take().number);
            }
            take();
            return Expression::unary(UnaryOp::Neg, unary());
        }
        return power();
    }

    Expression power() {
        Expression base = primary();
        if (peek().kind == Tok::Caret) {
            take();
            return Expression::binary(BinaryOp::Pow, std::move(base), unary());
        }
        return base;
    }

    Expression primary() {
        const Token& t = peek();
        switch (t.kind) {
            case Tok::Number: take(); return Expression::constant(t.number);
            case Tok::LParen: {
                take();
                Expression e = expr();
                expect(Tok::RParen, "')'");
                return e;
            }
            case Tok::Ident: return identifier();
            default: fail(t.kind == Tok::End ? "unexpected end of input"
                                             : "unexpected '" + std::string(t.text) + "'");
        }
    }

    Expression identifier() {
        const Token t = take();
        const std::string_view name = t.text;
        if (peek().kind == Tok::LParen) {
            if (name == "pow") {
                take();
                Expression a = expr();
                expect(Tok::Comma, "','");
                Expression b = expr();
                expect(Tok::RParen, "')'");
                return Expression::binary(BinaryOp::Pow, std::move(a), std::move(b));
            }
            if (auto op = unary_by_name(name)) {
                take();
                Expression c = expr();
                expect(Tok::RParen, "')'");
                return Expression::unary(*op, std::move(c));
            }
            throw ParseError("unknown function '" + std::string(name) + "' at position " +
                                 std::to_string(t.pos),
                             t.pos);
        }
        for (std::size_t i = 0; i < names_.size(); ++i)
            if (names_[i] == name) return Expression::variable(i);
        if (auto idx = indexed_name(name, 'x')) {
            if (*idx >= arity_)
                throw ParseError("variable '" + std::string(name) + "' out of range for arity " +
                                     std::to_string(arity_) + " at position " +
                                     std::to_string(t.pos),
                                 t.pos);
            return Expression::variable(*idx);
        }
        if (auto idx = indexed_name(name, 'p')) {
            if (*idx >= kMaxParams)
                throw ParseError("parameter '" + std::string(name) + "' exceeds the 10-parameter cap" +
                                     " at position " + std::to_string(t.pos),
                                 t.pos);
            return Expression::parameter(*idx);
        }
        throw ParseError("unknown identifier '" + std::string(name) + "' at position " +
                             std::to_string(t.pos),
                         t.pos);
    }

    std::vector<Token> toks_;
    std::size_t pos_ = 0;
    std::size_t arity_;
    std::span<const std::string> names_;
};

} // namespace

Skeleton parse(std::string_view text, std::size_t arity, std::span<const std::string> feature_names) {
    Parser p(Lexer(text).run(), arity, feature_names);
    Expression e = p.parse_all();
    return make_skeleton(e, arity, std::string(text));
}

// ---------------------------------------------------------------------------
// Printing

namespace {

void append_number(std::string& out, double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    out.append(buf, ptr);
}

void print_into(const Expression& e, std::string& out) {
    switch (e.kind()) {
        case NodeKind::Const:
            if (std::signbit(e.value())) {
                out += '(';
                append_number(out, e.value());
                out += ')';
            } else {
                append_number(out, e.value());
            }
            return;
        case NodeKind::Var:
            out += 'x';
            out += std::to_string(e.index());
            return;
        case NodeKind::Param:
            out += 'p';
            out += std::to_string(e.index());
            return;
        case NodeKind::Unary:
            // "(-2)" would read back as a constant, so negated literals keep
            // the function form.
            if (e.unary_op() == UnaryOp::Neg && e.child().kind() != NodeKind::Const) {
                out += "(-";
                print_into(e.child(), out);
                out += ')';
                return;
            }
            out += name_of(e.unary_op());
            out += '(';
            print_into(e.child(), out);
            out += ')';
            return;
        case NodeKind::Binary:
            out += '(';
            print_into(e.lhs(), out);
            out += ' ';
            out += name_of(e.binary_op());
            out += ' ';
            print_into(e.rhs(), out);
            out += ')';
            return;
    }
}

} // namespace

std::string print(const Expression& e) {
    std::string out;
    print_into(e, out);
    return out;
}

// ---------------------------------------------------------------------------
// Evaluation

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

inline double finite_or_nan(double v) { return std::isfinite(v) ? v : kNaN; }

double apply(UnaryOp op, double v) {
    switch (op) {
        case UnaryOp::Neg: return -v;
        case UnaryOp::Log: return v > 0.0 ? std::log(v) : kNaN;
        case UnaryOp::Exp: return std::exp(v);
        case UnaryOp::Sin: return std::sin(v);
        case UnaryOp::Cos: return std::cos(v);
        case UnaryOp::Sqrt: return v >= 0.0 ? std::sqrt(v) : kNaN;
        case UnaryOp::Abs: return std::fabs(v);
        case UnaryOp::Square: return v * v;
        case UnaryOp::Inv: return v != 0.0 ? 1.0 / v : kNaN;
    }
    return kNaN;
}

double apply(BinaryOp op, double a, double b) {
    switch (op) {
        case BinaryOp::Add: return a + b;
        case BinaryOp::Sub: return a - b;
        case BinaryOp::Mul: return a * b;
        case BinaryOp::Div: return b != 0.0 ? a / b : kNaN;
        case BinaryOp::Pow:
            // std::pow(1, NaN) and pow(NaN, 0) are 1; keep invalid rows invalid.
            if (std::isnan(a) || std::isnan(b)) return kNaN;
            return std::pow(a, b);
    }
    return kNaN;
}

void eval_into(const Expression& e, const Matrix& x, std::span<const double> params,
               std::vector<double>& out) {
    const std::size_t n = x.rows();
    out.resize(n);
    switch (e.kind()) {
        case NodeKind::Const: std::fill(out.begin(), out.end(), e.value()); return;
        case NodeKind::Param: std::fill(out.begin(), out.end(), params[e.index()]); return;
        case NodeKind::Var:
            for (std::size_t r = 0; r < n; ++r) out[r] = x(r, e.index());
            return;
        case NodeKind::Unary:
            eval_into(e.child(), x, params, out);
            for (double& v : out) v = finite_or_nan(apply(e.unary_op(), v));
            return;
        case NodeKind::Binary: {
            eval_into(e.lhs(), x, params, out);
            std::vector<double> rhs;
            eval_into(e.rhs(), x, params, rhs);
            for (std::size_t r = 0; r < n; ++r)
                out[r] = finite_or_nan(apply(e.binary_op(), out[r], rhs[r]));
            return;
        }
    }
}

} // namespace

std::vector<double> evaluate(const Skeleton& s, const Matrix& features,
                             std::span<const double> params) {
    if (features.cols() != s.arity)
        throw Error("feature matrix has " + std::to_string(features.cols()) +
                    " columns, skeleton arity is " + std::to_string(s.arity));
    if (params.size() < s.param_count)
        throw Error("skeleton needs " + std::to_string(s.param_count) + " parameters, got " +
                    std::to_string(params.size()));
    std::vector<double> out;
    eval_into(s.expression, features, params, out);
    for (double& v : out) v = finite_or_nan(v);
    return out;
}

Skeleton linear_skeleton(std::size_t arity) {
    const std::size_t terms = std::min(arity, kMaxParams - 1);
    std::size_t slot = 0;
    std::optional<Expression> sum;
    for (std::size_t i = 0; i < terms; ++i) {
        Expression t = Expression::binary(BinaryOp::Mul, Expression::parameter(slot++),
                                          Expression::variable(i));
        sum = sum ? Expression::binary(BinaryOp::Add, *sum, t) : t;
    }
    Expression c = Expression::parameter(slot);
    Expression e = sum ? Expression::binary(BinaryOp::Add, *sum, c) : c;
    return make_skeleton(e, arity, print(e));
}

} // namespace symreg::expr
