#include "symreg/context.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <limits>

#include "symreg/error.hpp"
#include "symreg/rng.hpp"

namespace symreg::context {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kTinyDenominator = 1e-12;

constexpr Transform kTransforms[] = {Transform::Identity, Transform::Log,    Transform::Exp,
                                     Transform::Sin,      Transform::Cos,    Transform::Sqrt,
                                     Transform::Square,   Transform::Inv,    Transform::Abs};
constexpr Combiner kCombiners[] = {Combiner::Product, Combiner::Ratio, Combiner::Sum,
                                   Combiner::Difference};

} // namespace

std::string_view name_of(Transform t) {
    switch (t) {
        case Transform::Identity: return "identity";
        case Transform::Log: return "log";
        case Transform::Exp: return "exp";
        case Transform::Sin: return "sin";
        case Transform::Cos: return "cos";
        case Transform::Sqrt: return "sqrt";
        case Transform::Square: return "square";
        case Transform::Inv: return "inv";
        case Transform::Abs: return "abs";
    }
    return "?";
}

std::string_view name_of(Combiner c) {
    switch (c) {
        case Combiner::Product: return "product";
        case Combiner::Ratio: return "ratio";
        case Combiner::Sum: return "sum";
        case Combiner::Difference: return "difference";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// Parsing

namespace {

struct Tok {
    enum Kind { Word, Number, LParen, RParen, Comma, Tilde, Equals, End } kind;
    std::string_view text;
};

std::vector<Tok> tokenize(std::string_view line, std::size_t line_no) {
    std::vector<Tok> out;
    std::size_t i = 0;
    while (i < line.size()) {
        const char c = line[i];
        if (std::isspace(static_cast<unsigned char>(c))) {
            ++i;
        } else if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            std::size_t j = i;
            while (j < line.size() && (std::isalnum(static_cast<unsigned char>(line[j])) || line[j] == '_')) ++j;
            out.push_back({Tok::Word, line.substr(i, j - i)});
            i = j;
        } else if (std::isdigit(static_cast<unsigned char>(c))) {
            std::size_t j = i;
            while (j < line.size() && std::isdigit(static_cast<unsigned char>(line[j]))) ++j;
            out.push_back({Tok::Number, line.substr(i, j - i)});
            i = j;
        } else {
            Tok::Kind k;
            switch (c) {
                case '(': k = Tok::LParen; break;
                case ')': k = Tok::RParen; break;
                case ',': k = Tok::Comma; break;
                case '~': k = Tok::Tilde; break;
                case '=': k = Tok::Equals; break;
                default:
                    throw ParseError("unexpected character '" + std::string(1, c) + "' (line " +
                                         std::to_string(line_no) + ")",
                                     line_no);
            }
            out.push_back({k, line.substr(i, 1)});
            ++i;
        }
    }
    out.push_back({Tok::End, {}});
    return out;
}

std::optional<Transform> transform_by_name(std::string_view s) {
    for (Transform t : kTransforms)
        if (name_of(t) == s) return t;
    return std::nullopt;
}

std::optional<Combiner> combiner_by_name(std::string_view s) {
    for (Combiner c : kCombiners)
        if (name_of(c) == s) return c;
    return std::nullopt;
}

class LineParser {
public:
    LineParser(std::vector<Tok> toks, std::size_t line_no, std::size_t arity,
               std::span<const std::string> names)
        : toks_(std::move(toks)), line_(line_no), arity_(arity), names_(names) {}

    Directive directive() {
        const Tok head = take();
        if (head.kind != Tok::Word) fail("expected a directive name");
        Directive d;
        if (head.text == "stats") {
            d = stats();
        } else if (head.text == "sample") {
            d = sample();
        } else if (head.text == "r2") {
            R2Fit fit;
            fit.y = target_term();
            expect(Tok::Tilde, "'~'");
            fit.x = feature_term(0);
            if (peek().kind == Tok::Word && peek().text == "coef") {
                take();
                fit.coefficients = true;
            }
            d = fit;
        } else if (head.text == "corr") {
            Correlation corr;
            corr.y = target_term();
            expect(Tok::Tilde, "'~'");
            corr.x = feature_term(0);
            d = corr;
        } else {
            fail("unknown directive '" + std::string(head.text) + "'");
        }
        if (peek().kind != Tok::End) fail("unexpected '" + std::string(peek().text) + "'");
        return d;
    }

private:
    const Tok& peek() const { return toks_[pos_]; }
    Tok take() { return pos_ + 1 < toks_.size() ? toks_[pos_++] : toks_[pos_]; }

    [[noreturn]] void fail(const std::string& msg) const {
        throw ParseError(msg + " (line " + std::to_string(line_) + ")", line_);
    }

    void expect(Tok::Kind k, const char* what) {
        if (peek().kind != k) fail(std::string("expected ") + what);
        take();
    }

    bool is_target(std::string_view w) const { return w == "y" || w == "Y" || w == "target"; }

    std::optional<std::size_t> feature_index(std::string_view w) const {
        for (std::size_t i = 0; i < names_.size(); ++i)
            if (names_[i] == w) return i;
        if (w.size() >= 2 && (w[0] == 'x' || w[0] == 'X')) {
            std::string_view digits = w.substr(1);
            if (!digits.empty() && digits.front() == '_') digits.remove_prefix(1);
            std::size_t v = 0;
            auto [p, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), v);
            if (!digits.empty() && ec == std::errc() && p == digits.data() + digits.size()) {
                if (v >= arity_)
                    fail("feature index " + std::to_string(v) + " out of range for arity " +
                         std::to_string(arity_));
                return v;
            }
        }
        return std::nullopt;
    }

    std::size_t feature(const Tok& t) {
        if (t.kind != Tok::Word) fail("expected a feature");
        if (auto idx = feature_index(t.text)) return *idx;
        fail("unknown feature '" + std::string(t.text) + "'");
    }

    DescribeStats stats() {
        DescribeStats s;
        if (peek().kind == Tok::Word && peek().text == "all") {
            take();
            s.all = true;
            s.columns.push_back(std::nullopt);
            for (std::size_t i = 0; i < arity_; ++i) s.columns.emplace_back(i);
            return s;
        }
        while (peek().kind == Tok::Word) {
            const Tok t = take();
            if (is_target(t.text))
                s.columns.push_back(std::nullopt);
            else
                s.columns.emplace_back(feature(t));
        }
        if (s.columns.empty()) fail("stats needs 'all' or at least one column");
        return s;
    }

    SampleRows sample() {
        SampleRows s;
        if (peek().kind != Tok::Number) fail("sample needs a row count");
        s.count = parse_number(take().text);
        if (s.count == 0) fail("sample count must be positive");
        while (peek().kind == Tok::Word) {
            const Tok key = take();
            expect(Tok::Equals, "'='");
            const Tok value = take();
            if (key.text == "sort") {
                if (value.text == "y_asc") s.sort = SortKey::TargetAsc;
                else if (value.text == "y_desc") s.sort = SortKey::TargetDesc;
                else if (value.text == "none") s.sort = SortKey::None;
                else fail("unknown sort key '" + std::string(value.text) + "'");
            } else if (key.text == "seed") {
                if (value.kind != Tok::Number) fail("seed must be a non-negative integer");
                s.seed = parse_number(value.text);
            } else {
                fail("unknown sample option '" + std::string(key.text) + "'");
            }
        }
        return s;
    }

    std::uint64_t parse_number(std::string_view text) const {
        std::uint64_t v = 0;
        auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
        if (ec != std::errc() || p != text.data() + text.size()) fail("number out of range");
        return v;
    }

    TargetTransform target_term() {
        const Tok t = take();
        if (t.kind != Tok::Word) fail("expected a target term");
        if (is_target(t.text)) return TargetTransform::Identity;
        if (peek().kind == Tok::LParen) {
            take();
            const Tok inner = take();
            if (!is_target(inner.text)) fail("target term must be y or log(y)");
            expect(Tok::RParen, "')'");
            if (t.text == "log") return TargetTransform::Log;
            if (t.text == "identity") return TargetTransform::Identity;
            if (transform_by_name(t.text)) fail("target transform must be identity or log");
            fail("unknown transform '" + std::string(t.text) + "'");
        }
        fail("target term must be y or log(y)");
    }

    FeatureTerm feature_term(std::size_t depth) {
        const Tok t = take();
        if (t.kind != Tok::Word) fail("expected a feature term");
        if (peek().kind != Tok::LParen) {
            if (is_target(t.text)) fail("the target cannot appear on the feature side");
            return FeatureTerm::of(feature(t));
        }
        take();
        if (auto c = combiner_by_name(t.text)) {
            FeatureTerm term;
            term.feature = feature(take());
            expect(Tok::Comma, "','");
            term.second = feature(take());
            term.combiner = *c;
            expect(Tok::RParen, "')'");
            return term;
        }
        auto tr = transform_by_name(t.text);
        if (!tr) fail("unknown transform '" + std::string(t.text) + "'");
        if (depth >= kMaxTransformDepth) fail("transforms nest at most 3 deep");
        FeatureTerm inner = feature_term(depth + 1);
        expect(Tok::RParen, "')'");
        if (*tr != Transform::Identity) inner.transforms.insert(inner.transforms.begin(), *tr);
        return inner;
    }

    std::vector<Tok> toks_;
    std::size_t pos_ = 0;
    std::size_t line_;
    std::size_t arity_;
    std::span<const std::string> names_;
};

} // namespace

AnalysisSpec parse_spec(std::string_view text, std::size_t arity, std::span<const std::string> names) {
    AnalysisSpec spec;
    spec.arity = arity;
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(start, end - start);
        ++line_no;
        start = end + 1;
        if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        auto toks = tokenize(line, line_no);
        if (toks.size() == 1) continue;
        if (spec.directives.size() == kMaxDirectives)
            throw ParseError("too many directives (max " + std::to_string(kMaxDirectives) + ") (line " +
                                 std::to_string(line_no) + ")",
                             line_no);
        LineParser p(std::move(toks), line_no, arity, names);
        spec.directives.push_back(p.directive());
        spec.lines.push_back(line_no);
    }
    return spec;
}

// ---------------------------------------------------------------------------
// Printing and key names

namespace {

std::string term_text(const FeatureTerm& t) {
    std::string base;
    if (t.combiner)
        base = std::string(name_of(*t.combiner)) + "(x" + std::to_string(t.feature) + ", x" +
               std::to_string(t.second) + ")";
    else
        base = "x" + std::to_string(t.feature);
    for (auto it = t.transforms.rbegin(); it != t.transforms.rend(); ++it)
        base = std::string(name_of(*it)) + "(" + base + ")";
    return base;
}

std::string target_text(TargetTransform y) { return y == TargetTransform::Log ? "log(y)" : "y"; }

// Key labels follow the reference hint layout: features read "X_i" when
// bare or under one transform, and "x_i" when nested deeper
// (e.g. r2_log(Y)_log(sin(x_0))).
std::string term_key(const FeatureTerm& t) {
    const std::string prefix = t.transforms.size() >= 2 ? "x_" : "X_";
    std::string base;
    if (t.combiner)
        base = std::string(name_of(*t.combiner)) + "(" + prefix + std::to_string(t.feature) + "," +
               prefix + std::to_string(t.second) + ")";
    else
        base = prefix + std::to_string(t.feature);
    for (auto it = t.transforms.rbegin(); it != t.transforms.rend(); ++it)
        base = std::string(name_of(*it)) + "(" + base + ")";
    return base;
}

std::string target_key(TargetTransform y) { return y == TargetTransform::Log ? "log(Y)" : "Y"; }

std::string column_key(const std::optional<std::size_t>& c) {
    return c ? "X_" + std::to_string(*c) : "Y";
}

} // namespace

std::string print_spec(const AnalysisSpec& spec) {
    std::string out;
    for (const Directive& d : spec.directives) {
        std::visit(
            [&](const auto& v) {
                using T = std::decay_t<decltype(v)>;
                if constexpr (std::is_same_v<T, DescribeStats>) {
                    out += "stats";
                    if (v.all) {
                        out += " all";
                    } else {
                        for (const auto& c : v.columns) out += c ? " x" + std::to_string(*c) : " y";
                    }
                } else if constexpr (std::is_same_v<T, SampleRows>) {
                    out += "sample " + std::to_string(v.count) + " sort=";
                    out += v.sort == SortKey::TargetAsc ? "y_asc" : v.sort == SortKey::TargetDesc ? "y_desc" : "none";
                    if (v.seed != 0) out += " seed=" + std::to_string(v.seed);
                } else if constexpr (std::is_same_v<T, R2Fit>) {
                    out += "r2 " + target_text(v.y) + " ~ " + term_text(v.x);
                    if (v.coefficients) out += " coef";
                } else {
                    out += "corr " + target_text(v.y) + " ~ " + term_text(v.x);
                }
            },
            d);
        out += '\n';
    }
    return out;
}

AnalysisSpec default_hint_spec(std::size_t arity) {
    AnalysisSpec spec;
    spec.arity = arity;
    auto add = [&](Directive d) {
        spec.directives.push_back(std::move(d));
        spec.lines.push_back(spec.directives.size());
    };
    add(SampleRows{12, SortKey::TargetAsc, 0});
    DescribeStats all;
    all.all = true;
    all.columns.push_back(std::nullopt);
    for (std::size_t i = 0; i < arity; ++i) all.columns.emplace_back(i);
    add(all);
    for (std::size_t i = 0; i < arity; ++i) add(R2Fit{FeatureTerm::of(i), TargetTransform::Identity, false});
    for (std::size_t i = 0; i < arity; ++i)
        add(R2Fit{FeatureTerm::of(i, {Transform::Log}), TargetTransform::Log, false});
    for (std::size_t i = 0; i < arity; ++i)
        for (Transform t : {Transform::Sin, Transform::Cos, Transform::Exp, Transform::Sqrt})
            add(R2Fit{FeatureTerm::of(i, {Transform::Log, t}), TargetTransform::Log, false});
    return spec;
}

// ---------------------------------------------------------------------------
// Execution

const Entry* AnalysisReport::find(std::string_view key) const {
    for (const Entry& e : entries)
        if (e.key == key) return &e;
    return nullptr;
}

double AnalysisReport::number(std::string_view key) const {
    const Entry* e = find(key);
    if (!e || !std::holds_alternative<double>(e->value))
        throw Error("report has no numeric entry '" + std::string(key) + "'");
    return std::get<double>(e->value);
}

namespace {

double apply(Transform t, double v) {
    double r = kNaN;
    switch (t) {
        case Transform::Identity: r = v; break;
        case Transform::Log: r = v > 0.0 ? std::log(v) : kNaN; break;
        case Transform::Exp: r = std::exp(v); break;
        case Transform::Sin: r = std::sin(v); break;
        case Transform::Cos: r = std::cos(v); break;
        case Transform::Sqrt: r = v >= 0.0 ? std::sqrt(v) : kNaN; break;
        case Transform::Square: r = v * v; break;
        case Transform::Inv: r = std::fabs(v) > kTinyDenominator ? 1.0 / v : kNaN; break;
        case Transform::Abs: r = std::fabs(v); break;
    }
    return std::isfinite(r) ? r : kNaN;
}

double combine(Combiner c, double a, double b) {
    double r = kNaN;
    switch (c) {
        case Combiner::Product: r = a * b; break;
        case Combiner::Ratio: r = std::fabs(b) > kTinyDenominator ? a / b : kNaN; break;
        case Combiner::Sum: r = a + b; break;
        case Combiner::Difference: r = a - b; break;
    }
    return std::isfinite(r) ? r : kNaN;
}

double term_value(const FeatureTerm& t, std::span<const double> row) {
    double v = t.combiner ? combine(*t.combiner, row[t.feature], row[t.second]) : row[t.feature];
    for (auto it = t.transforms.rbegin(); it != t.transforms.rend() && !std::isnan(v); ++it) v = apply(*it, v);
    return v;
}

double target_value(TargetTransform t, double y) {
    return t == TargetTransform::Log ? apply(Transform::Log, y) : y;
}

struct Paired {
    std::vector<double> x, y;
};

Paired paired_values(const FeatureTerm& xt, TargetTransform yt, const data::Dataset& d) {
    Paired p;
    for (std::size_t r = 0; r < d.rows(); ++r) {
        const double xv = term_value(xt, d.features.row(r));
        const double yv = target_value(yt, d.target[r]);
        if (std::isnan(xv) || std::isnan(yv)) continue;
        p.x.push_back(xv);
        p.y.push_back(yv);
    }
    return p;
}

struct Moments {
    double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
};

Moments moments(const Paired& p) {
    Moments m;
    const double n = static_cast<double>(p.x.size());
    for (std::size_t i = 0; i < p.x.size(); ++i) m.mx += p.x[i], m.my += p.y[i];
    m.mx /= n;
    m.my /= n;
    for (std::size_t i = 0; i < p.x.size(); ++i) {
        const double dx = p.x[i] - m.mx, dy = p.y[i] - m.my;
        m.sxx += dx * dx;
        m.syy += dy * dy;
        m.sxy += dx * dy;
    }
    return m;
}

class Executor {
public:
    Executor(const data::Dataset& d, std::uint64_t seed, AnalysisReport& out)
        : data_(d), seed_(seed), out_(out) {}

    void run(const DescribeStats& s) {
        const data::Summary summary = data::describe(data_);
        for (const auto& c : s.columns) {
            const data::ColumnSummary& col = c ? summary.features.at(*c) : summary.target;
            const std::string label = column_key(c);
            push("mean_" + label, col.mean);
            push("std_" + label, col.std);
            push("min_" + label, col.min);
            push("max_" + label, col.max);
        }
    }

    void run(const SampleRows& s) {
        const std::size_t n = data_.rows();
        std::vector<std::size_t> idx(n);
        for (std::size_t i = 0; i < n; ++i) idx[i] = i;
        Rng rng(derive_seed(seed_, s.seed, 0x5a3e1u));
        const std::size_t take = std::min(s.count, n);
        for (std::size_t i = 0; i < take; ++i) std::swap(idx[i], idx[i + rng.index(n - i)]);
        idx.resize(take);
        if (s.sort != SortKey::None) {
            std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
                return s.sort == SortKey::TargetAsc ? data_.target[a] < data_.target[b]
                                                    : data_.target[a] > data_.target[b];
            });
        }
        RowSample sample;
        sample.sort = s.sort;
        for (std::size_t r : idx) {
            const auto row = data_.features.row(r);
            sample.x.emplace_back(row.begin(), row.end());
            sample.y.push_back(data_.target[r]);
        }
        out_.entries.push_back({"samples_" + std::to_string(take), std::move(sample), std::nullopt});
    }

    void run(const R2Fit& f) {
        const std::string suffix = target_key(f.y) + "_" + term_key(f.x);
        const std::string key = "r2_" + suffix;
        const Paired p = paired_values(f.x, f.y, data_);
        if (p.x.size() < kMinValidRows) {
            push(key + "_na", static_cast<double>(p.x.size()));
            return;
        }
        const Moments m = moments(p);
        if (!(m.syy > 0.0)) throw Error(key + ": target term has zero variance");
        FitDetail detail;
        detail.valid_rows = p.x.size();
        if (m.sxx > 0.0) {
            detail.slope = m.sxy / m.sxx;
            detail.intercept = m.my - detail.slope * m.mx;
            double ss_res = 0;
            for (std::size_t i = 0; i < p.x.size(); ++i) {
                const double r = p.y[i] - (detail.intercept + detail.slope * p.x[i]);
                ss_res += r * r;
            }
            detail.r2 = std::clamp(1.0 - ss_res / m.syy, 0.0, 1.0);
        } else {
            // Constant regressor: the fit is the mean predictor.
            detail.slope = 0.0;
            detail.intercept = m.my;
            detail.r2 = 0.0;
        }
        if (!std::isfinite(detail.slope) || !std::isfinite(detail.intercept))
            throw Error(key + ": fit overflowed");
        out_.entries.push_back({key, detail.r2, detail});
        if (f.coefficients) {
            push("slope_" + suffix, detail.slope);
            push("intercept_" + suffix, detail.intercept);
        }
    }

    void run(const Correlation& c) {
        const std::string key = "corr_" + target_key(c.y) + "_" + term_key(c.x);
        const Paired p = paired_values(c.x, c.y, data_);
        if (p.x.size() < kMinValidRows) {
            push(key + "_na", static_cast<double>(p.x.size()));
            return;
        }
        const Moments m = moments(p);
        if (!(m.syy > 0.0) || !(m.sxx > 0.0)) throw Error(key + ": zero variance, correlation undefined");
        push(key, std::clamp(m.sxy / std::sqrt(m.sxx * m.syy), -1.0, 1.0));
    }

private:
    void push(std::string key, double v) { out_.entries.push_back({std::move(key), v, std::nullopt}); }

    const data::Dataset& data_;
    std::uint64_t seed_;
    AnalysisReport& out_;
};

} // namespace

AnalysisReport execute(const AnalysisSpec& spec, const data::Dataset& data, std::uint64_t seed) {
    AnalysisReport report;
    report.source = print_spec(spec);
    for (std::size_t i = 0; i < spec.directives.size(); ++i) {
        const std::size_t mark = report.entries.size();
        try {
            if (spec.arity != data.arity())
                throw Error("spec arity " + std::to_string(spec.arity) + " does not match data arity " +
                            std::to_string(data.arity()));
            Executor ex(data, seed, report);
            std::visit([&](const auto& d) { ex.run(d); }, spec.directives[i]);
        } catch (const std::exception& e) {
            report.entries.resize(mark);
            const std::size_t line = i < spec.lines.size() ? spec.lines[i] : i + 1;
            report.execution_errors.push_back("line " + std::to_string(line) + ": " + e.what());
        }
    }
    return report;
}

// ---------------------------------------------------------------------------
// Rendering

std::string format_stat(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    double r = std::fabs(v) < 1e15 ? std::round(v * 1000.0) / 1000.0 : v;
    if (r == 0.0) r = 0.0;  // drop the sign of -0
    char buf[64];
    const double mag = std::fabs(r);
    std::to_chars_result res;
    if (mag == 0.0 || (mag >= 1e-4 && mag < 1e16))
        res = std::to_chars(buf, buf + sizeof buf, r, std::chars_format::fixed);
    else
        res = std::to_chars(buf, buf + sizeof buf, r, std::chars_format::scientific);
    std::string s(buf, res.ptr);
    if (s.find_first_of(".e") == std::string::npos) s += ".0";
    return s;
}

namespace {

std::string fixed3(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, 3);
    std::string s(buf, res.ptr);
    if (s == "-0.000") s = "0.000";
    return s;
}

} // namespace

std::string render(const AnalysisReport& report) {
    std::string out;
    for (const Entry& e : report.entries) {
        const auto* sample = std::get_if<RowSample>(&e.value);
        if (!sample) continue;
        out += "### " + std::to_string(sample->y.size()) + " Random Samples (X, Y)";
        if (sample->sort == SortKey::TargetAsc) out += " (Sorted by Y from small to large)";
        if (sample->sort == SortKey::TargetDesc) out += " (Sorted by Y from large to small)";
        out += ":\n";
        for (std::size_t i = 0; i < sample->y.size(); ++i) {
            out += "X[" + std::to_string(i) + "] = [";
            for (std::size_t c = 0; c < sample->x[i].size(); ++c) {
                if (c) out += ", ";
                out += fixed3(sample->x[i][c]);
            }
            out += "], Y[" + std::to_string(i) + "] = " + fixed3(sample->y[i]) + "\n";
        }
    }
    std::string stats;
    for (const Entry& e : report.entries) {
        const auto* v = std::get_if<double>(&e.value);
        if (!v) continue;
        if (!stats.empty()) stats += ", ";
        stats += "'" + e.key + "': " + format_stat(*v);
    }
    if (!stats.empty()) out += "Statistics: {" + stats + "}\n";
    if (!report.execution_errors.empty()) {
        out += "Analysis errors: ";
        for (std::size_t i = 0; i < report.execution_errors.size(); ++i) {
            if (i) out += "; ";
            out += report.execution_errors[i];
        }
        out += "\n";
    }
    return out;
}

nlohmann::json to_json(const AnalysisReport& report) {
    nlohmann::json entries = nlohmann::json::array();
    for (const Entry& e : report.entries) {
        nlohmann::json j;
        j["key"] = e.key;
        if (const auto* v = std::get_if<double>(&e.value)) {
            j["value"] = *v;
        } else {
            const auto& s = std::get<RowSample>(e.value);
            j["x"] = s.x;
            j["y"] = s.y;
        }
        if (e.fit) {
            j["slope"] = e.fit->slope;
            j["intercept"] = e.fit->intercept;
            j["valid_rows"] = e.fit->valid_rows;
        }
        entries.push_back(std::move(j));
    }
    return {{"source", report.source}, {"entries", entries}, {"errors", report.execution_errors}};
}

} // namespace symreg::context
