#include "symreg/generate.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "symreg/rng.hpp"

namespace symreg::generate {

namespace {

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open script file '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::string> split_on_separator(const std::string& text) {
    std::vector<std::string> out;
    std::string current;
    std::istringstream in(text);
    std::string line;
    bool any = false;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line == "---") {
            out.push_back(current);
            current.clear();
            any = false;
            continue;
        }
        current += line + "\n";
        any = any || line.find_first_not_of(" \t") != std::string::npos;
    }
    if (any) out.push_back(current);
    return out;
}

std::vector<std::string> string_array(const nlohmann::json& j, const std::string& what) {
    if (!j.is_array()) throw Error(what + " must be an array of strings");
    std::vector<std::string> out;
    for (const auto& v : j) {
        if (!v.is_string()) throw Error(what + " must be an array of strings");
        out.push_back(v.get<std::string>());
    }
    return out;
}

std::string format_fitness(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 6);
    return std::string(buf, res.ptr);
}

// Body of every fenced block tagged `tag`, in order of appearance.
std::vector<std::string> fenced_blocks(const std::string& text, const std::string& tag) {
    std::vector<std::string> out;
    const std::string open = "```" + tag;
    std::size_t pos = 0;
    while ((pos = text.find(open, pos)) != std::string::npos) {
        std::size_t body = pos + open.size();
        if (body < text.size() && !std::isspace(static_cast<unsigned char>(text[body]))) {
            pos = body;  // e.g. ```exprs
            continue;
        }
        const std::size_t close = text.find("```", body);
        if (close == std::string::npos) break;
        // Drop the remainder of the fence line so body line 1 is the first real line.
        std::size_t first = body;
        while (first < close && (text[first] == ' ' || text[first] == '\t' || text[first] == '\r')) ++first;
        if (first < close && text[first] == '\n') body = first + 1;
        out.push_back(text.substr(body, close - body));
        pos = close + 3;
    }
    return out;
}

std::string variable_list(std::size_t arity) {
    std::string s;
    for (std::size_t i = 0; i < arity; ++i) s += (i ? ", x" : "x") + std::to_string(i);
    return s;
}

std::string problem_section(const data::ProblemSpec& p, std::size_t arity) {
    std::string out = "## Problem\n";
    if (!p.instructions.empty()) out += p.instructions + "\n";
    out += "Find an equation for y in terms of " + variable_list(arity) + ".\n";
    out += "- y: " + (p.target_description.empty() ? std::string("target") : p.target_description) + "\n";
    for (std::size_t i = 0; i < arity; ++i) {
        out += "- x" + std::to_string(i) + ": ";
        out += i < p.variable_descriptions.size() && !p.variable_descriptions[i].empty()
                   ? p.variable_descriptions[i]
                   : "input " + std::to_string(i);
        out += "\n";
    }
    return out + "\n";
}

} // namespace

// ---------------------------------------------------------------------------
// Scripted

ScriptedGenerator::ScriptedGenerator(std::vector<std::string> equation_script,
                                     std::vector<std::string> analysis_script)
    : equations_(std::move(equation_script)), analyses_(std::move(analysis_script)) {}

std::unique_ptr<ScriptedGenerator> ScriptedGenerator::from_file(const std::filesystem::path& path) {
    const std::string text = read_file(path);
    if (path.extension() == ".json") {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(text);
        } catch (const nlohmann::json::exception& e) {
            throw Error("invalid script JSON '" + path.string() + "': " + e.what());
        }
        if (j.is_array()) return std::make_unique<ScriptedGenerator>(string_array(j, "script"));
        if (!j.is_object()) throw Error("script '" + path.string() + "' must be an array or object");
        std::vector<std::string> eq, an;
        if (j.contains("equation")) eq = string_array(j["equation"], "script.equation");
        if (j.contains("analysis")) an = string_array(j["analysis"], "script.analysis");
        return std::make_unique<ScriptedGenerator>(std::move(eq), std::move(an));
    }
    return std::make_unique<ScriptedGenerator>(split_on_separator(text));
}

GeneratorResponse ScriptedGenerator::generate(const GeneratorRequest& request) {
    std::lock_guard lock(mutex_);
    const auto& script = request.purpose == Purpose::Analysis ? analyses_ : equations_;
    std::size_t& cursor = request.purpose == Purpose::Analysis ? analysis_cursor_ : equation_cursor_;
    GeneratorResponse r;
    for (std::size_t i = 0; i < request.n_samples; ++i) {
        if (script.empty()) {
            r.raw_texts.emplace_back();
            r.failed.push_back(true);
            r.failure_messages.push_back("script has no entries for this purpose");
            continue;
        }
        r.raw_texts.push_back(script[cursor % script.size()]);
        r.failed.push_back(false);
        r.failure_messages.emplace_back();
        ++cursor;
    }
    return r;
}

// ---------------------------------------------------------------------------
// Mutation

MutationGenerator::MutationGenerator(std::size_t arity, std::uint64_t seed, double malformed_rate)
    : arity_(arity), seed_(seed), malformed_rate_(malformed_rate) {}

GeneratorResponse MutationGenerator::generate(const GeneratorRequest& request) {
    std::uint64_t call;
    {
        std::lock_guard lock(mutex_);
        call = calls_++;
    }
    GeneratorResponse r;
    for (std::size_t i = 0; i < request.n_samples; ++i) {
        const std::uint64_t s = derive_seed(seed_, call, i);
        r.raw_texts.push_back(request.purpose == Purpose::Analysis ? analysis_sample(s)
                                                                   : equation_sample(request.prompt, s));
        r.failed.push_back(false);
        r.failure_messages.emplace_back();
    }
    return r;
}

std::string MutationGenerator::equation_sample(const std::string& prompt, std::uint64_t seed) const {
    Rng rng(seed);
    std::vector<expr::Skeleton> parents;
    for (const std::string& body : fenced_blocks(prompt, "expr")) {
        try {
            parents.push_back(expr::parse(body, arity_));
        } catch (const Error&) {
            // grammar examples and stray blocks are not parents
        }
    }
    if (parents.empty()) parents.push_back(expr::linear_skeleton(arity_));
    // Demonstrations are listed worst first; favour the best one.
    const std::size_t pick = rng.coin(0.5) ? parents.size() - 1 : rng.index(parents.size());
    expr::Skeleton child = expr::random_mutation(parents[pick], rng.next());
    if (rng.coin(0.3)) child = expr::random_mutation(child, rng.next());
    return "<thought>mutate equation_v" + std::to_string(pick) + "</thought>\n```expr\n" + expr::print(child) +
           "\n```\n";
}

std::string MutationGenerator::analysis_sample(std::uint64_t seed) const {
    Rng rng(seed);
    static constexpr const char* kTransforms[] = {"log", "exp", "sin", "cos", "sqrt", "square", "inv", "abs"};
    static constexpr const char* kCombiners[] = {"product", "ratio", "sum", "difference"};
    auto feature = [&] { return "x" + std::to_string(rng.index(arity_)); };
    std::string out = "<thought>random probe</thought>\n```analysis\n";
    if (rng.coin(0.5)) out += "sample 12 sort=y_asc\n";
    out += "stats all\n";
    const std::size_t n = 2 + rng.index(5);
    for (std::size_t i = 0; i < n; ++i) {
        switch (rng.index(4)) {
            case 0: out += "r2 y ~ " + feature() + "\n"; break;
            case 1: out += "r2 log(y) ~ log(" + feature() + ")\n"; break;
            case 2:
                out += "r2 log(y) ~ log(" + std::string(kTransforms[rng.index(std::size(kTransforms))]) + "(" +
                       feature() + "))\n";
                break;
            default:
                if (arity_ >= 2) {
                    out += "corr log(y) ~ log(" + std::string(kCombiners[rng.index(std::size(kCombiners))]) + "(" +
                           feature() + ", " + feature() + "))\n";
                } else {
                    out += "corr y ~ " + feature() + "\n";
                }
        }
    }
    if (malformed_rate_ > 0.0 && rng.coin(malformed_rate_)) out += "r2 y ~ frobnicate(x0)\n";
    return out + "```\n";
}

// ---------------------------------------------------------------------------
// Prompts

std::string report_block(const context::AnalysisReport& report) {
    const std::string body = context::render(report);
    if (body.empty()) return {};
    return "## Dataset information\n"
           "Results of the analysis program run on the training data (samples, summary statistics, "
           "transform fit scores):\n" +
           body + "\n";
}

std::string build_equation_prompt(const data::ProblemSpec& problem, std::size_t arity,
                                  std::span<const fit::Candidate> demos,
                                  const context::AnalysisReport* report) {
    std::string out =
        "You are helping with symbolic regression: propose an equation skeleton whose free "
        "parameters will be fitted to a scientific dataset.\n\n";
    out += problem_section(problem, arity);
    if (report) out += report_block(*report);

    out += "## Previous equations (worst to best)\n";
    if (demos.empty()) {
        out += "### equation_v0 (not evaluated yet)\n```expr\n" + expr::print(expr::linear_skeleton(arity)) +
               "\n```\n";
    } else {
        for (std::size_t i = 0; i < demos.size(); ++i) {
            out += "### equation_v" + std::to_string(i);
            out += std::isfinite(demos[i].fitness)
                       ? " (fitness " + format_fitness(demos[i].fitness) + ", higher is better)"
                       : std::string(" (not evaluated yet)");
            out += "\n```expr\n" + expr::print(demos[i].skeleton) + "\n```\n";
        }
    }
    const std::size_t next = std::max<std::size_t>(demos.size(), 1);
    out += "\n## Your task\n";
    out += "Write equation_v" + std::to_string(next) + ", an improved version of equation_v" +
           std::to_string(next - 1) + ".\n";
    out += "First reason briefly inside a <thought>...</thought> block. After </thought>, output exactly "
           "one fenced block:\n```expr\n<expression>\n```\n";
    out += "Grammar: variables " + variable_list(arity) +
           "; parameters p0..p9; operators + - * / ^; functions neg log exp sin cos sqrt abs square inv "
           "and pow(a, b).\n";
    out += "Parameters start at 1.0 and are fitted for you. Use at most 10 parameters.\n";
    return out;
}

std::string build_analysis_prompt(const data::ProblemSpec& problem, std::size_t arity,
                                  const std::string& feedback) {
    std::string out =
        "You are helping with symbolic regression. Before an equation is proposed, write a short data "
        "analysis program; its results will be shown to whoever writes the equation.\n\n";
    out += problem_section(problem, arity);
    out += "## Analysis language\n"
           "One directive per line, '#' starts a comment, at most 64 directives.\n"
           "  stats all | stats y x0 ...        mean, std, min and max per column\n"
           "  sample N [sort=y_asc|y_desc|none]  N random rows\n"
           "  r2 <yterm> ~ <xterm> [coef]        least-squares line fit, reports R^2 (coef adds slope and "
           "intercept)\n"
           "  corr <yterm> ~ <xterm>             Pearson correlation\n"
           "yterm: y | log(y)\n"
           "xterm: a feature, a transform of an xterm (up to 3 deep) or a combiner of two features\n";
    out += "Features: " + variable_list(arity) + "\n";
    out += "Transforms: identity log exp sin cos sqrt square inv abs\n"
           "Combiners: product(a, b) ratio(a, b) sum(a, b) difference(a, b)\n"
           "Rows where a transform is undefined are skipped for that directive.\n"
           "Example: r2 log(y) ~ log(ratio(x0, x1))\n\n";
    out += "## Your task\n"
           "Pick analyses that would reveal the functional form. Reason briefly inside "
           "<thought>...</thought>, then output exactly one fenced block:\n```analysis\n<directives>\n```\n";
    if (!feedback.empty()) {
        out += "\n## Feedback\nYour previous analysis program failed: " + feedback +
               "\nFix the problem in the new program.\n";
    }
    return out;
}

expr::Skeleton extract_expression(const std::string& raw, std::size_t arity,
                                  std::span<const std::string> feature_names) {
    const auto blocks = fenced_blocks(raw, "expr");
    if (blocks.empty()) throw ExtractionError("no ```expr block found");
    try {
        expr::Skeleton s = expr::parse(blocks.back(), arity, feature_names);
        return s;
    } catch (const ParseError& e) {
        throw ExtractionError(std::string("expression does not parse: ") + e.what());
    }
}

context::AnalysisSpec extract_spec(const std::string& raw, std::size_t arity,
                                   std::span<const std::string> feature_names) {
    const auto blocks = fenced_blocks(raw, "analysis");
    if (blocks.empty()) throw ExtractionError("no ```analysis block found");
    try {
        return context::parse_spec(blocks.back(), arity, feature_names);
    } catch (const ParseError& e) {
        throw ExtractionError(e.what());
    }
}

} // namespace symreg::generate
