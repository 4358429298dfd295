#pragma once

// Dataset-analysis programs: a small directive language whose results are
// rendered into equation-generation prompts.
//
// One directive per line; '#' starts a comment.
//
//   stats all | stats <col>...                      col := y | x<i> | <name>
//   sample <n> [sort=y_asc|y_desc|none] [seed=<k>]
//   r2   <yterm> ~ <xterm> [coef]
//   corr <yterm> ~ <xterm>
//
//   yterm := y | log(y)
//   xterm := x<i> | <name> | <transform>(<xterm>) | <combiner>(<feat>, <feat>)
//   transform := identity | log | exp | sin | cos | sqrt | square | inv | abs
//   combiner  := product | ratio | sum | difference
//
// Transforms nest at most three deep. Rows where a transform is undefined
// (log or sqrt out of domain, division by ~0, overflow) are masked for that
// directive only; fits with fewer than 8 usable rows report "<key>_na".

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "symreg/data.hpp"

namespace symreg::context {

inline constexpr std::size_t kMaxDirectives = 64;
inline constexpr std::size_t kMaxTransformDepth = 3;
inline constexpr std::size_t kMinValidRows = 8;

enum class Transform { Identity, Log, Exp, Sin, Cos, Sqrt, Square, Inv, Abs };
enum class Combiner { Product, Ratio, Sum, Difference };
enum class TargetTransform { Identity, Log };
enum class SortKey { TargetAsc, TargetDesc, None };

std::string_view name_of(Transform t);
std::string_view name_of(Combiner c);

struct FeatureTerm {
    std::vector<Transform> transforms;  // outermost first
    std::size_t feature = 0;
    std::optional<Combiner> combiner;
    std::size_t second = 0;  // right operand when combined

    static FeatureTerm of(std::size_t feature, std::vector<Transform> transforms = {}) {
        return {std::move(transforms), feature, std::nullopt, 0};
    }
    bool operator==(const FeatureTerm&) const = default;
};

struct DescribeStats {
    // nullopt entries stand for the target.
    std::vector<std::optional<std::size_t>> columns;
    bool all = false;
    bool operator==(const DescribeStats&) const = default;
};

struct SampleRows {
    std::size_t count = 12;
    SortKey sort = SortKey::TargetAsc;
    std::uint64_t seed = 0;
    bool operator==(const SampleRows&) const = default;
};

struct R2Fit {
    FeatureTerm x;
    TargetTransform y = TargetTransform::Identity;
    bool coefficients = false;  // also report slope_ and intercept_ keys
    bool operator==(const R2Fit&) const = default;
};

struct Correlation {
    FeatureTerm x;
    TargetTransform y = TargetTransform::Identity;
    bool operator==(const Correlation&) const = default;
};

using Directive = std::variant<DescribeStats, SampleRows, R2Fit, Correlation>;

struct AnalysisSpec {
    std::vector<Directive> directives;
    std::vector<std::size_t> lines;  // source line of each directive (1-based)
    std::size_t arity = 0;
    bool operator==(const AnalysisSpec& o) const { return directives == o.directives && arity == o.arity; }
};

// Throws ParseError("<message> (line N)") on the first bad line.
AnalysisSpec parse_spec(std::string_view text, std::size_t arity,
                        std::span<const std::string> feature_names = {});

// One directive per line, canonical spelling.
std::string print_spec(const AnalysisSpec& spec);

// The fixed statistical-hint program: 12 sorted samples, column stats,
// linear and log-log R2 for every feature, then log(t(x_i)) fits for
// t in {sin, cos, exp, sqrt}.
AnalysisSpec default_hint_spec(std::size_t arity);

struct RowSample {
    std::vector<std::vector<double>> x;
    std::vector<double> y;
    SortKey sort = SortKey::TargetAsc;
    bool operator==(const RowSample&) const = default;
};

struct FitDetail {
    double r2 = 0.0;
    double slope = 0.0;
    double intercept = 0.0;
    std::size_t valid_rows = 0;
    bool operator==(const FitDetail&) const = default;
};

struct Entry {
    std::string key;
    std::variant<double, RowSample> value;
    std::optional<FitDetail> fit;
    bool operator==(const Entry&) const = default;
};

struct AnalysisReport {
    std::vector<Entry> entries;
    std::vector<std::string> execution_errors;
    std::string source;

    bool empty() const noexcept { return entries.empty() && execution_errors.empty(); }
    const Entry* find(std::string_view key) const;
    // Numeric value for `key`; throws Error when absent.
    double number(std::string_view key) const;
    bool operator==(const AnalysisReport&) const = default;
};

// Runs every directive independently against `data`. Pure: no I/O, no clock.
AnalysisReport execute(const AnalysisSpec& spec, const data::Dataset& data, std::uint64_t seed);

// Prompt block: sample lines, one "Statistics: {...}" line, then an
// "Analysis errors: ..." line when any directive failed.
std::string render(const AnalysisReport& report);

nlohmann::json to_json(const AnalysisReport& report);

// Python-style repr of round(v, 3), e.g. 21.331, 1.0, 0.03.
std::string format_stat(double v);

} // namespace symreg::context
