#include "symreg/cli.hpp"

#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "symreg/context.hpp"
#include "symreg/data.hpp"
#include "symreg/error.hpp"
#include "symreg/fit.hpp"
#include "symreg/harness.hpp"
#include "symreg/search.hpp"

namespace symreg::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Options {
    std::string config, mode, generator, out, problem, data, expr, spec, script, model, base_url;
    std::uint64_t seed = 0;
    std::size_t iterations = 0, workers = 0;
    double malformed_rate = -1;
    bool seed_set = false, verify = false, as_json = false;
};

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error("cannot open '" + p.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json read_json(const fs::path& p) {
    try {
        return json::parse(read_file(p));
    } catch (const json::exception& e) {
        throw Error("malformed JSON in '" + p.string() + "': " + e.what());
    }
}

void apply_generator_flags(const Options& o, harness::GeneratorSettings& g) {
    if (!o.generator.empty()) g.kind = o.generator;
    if (!o.script.empty()) g.script = o.script;
    if (!o.model.empty()) g.remote.model = o.model;
    if (!o.base_url.empty()) g.remote.base_url = o.base_url;
    if (o.malformed_rate >= 0) g.malformed_rate = o.malformed_rate;
    if (g.kind == "scripted" && g.script.empty()) throw Error("--generator scripted needs --script");
}

void apply_search_flags(const Options& o, search::SearchConfig& c) {
    if (o.seed_set) c.seed = o.seed;
    if (o.iterations) c.iterations = o.iterations;
    if (!o.mode.empty()) c.mode = search::mode_from_name(o.mode);
}

int cmd_run(const Options& o, std::ostream& out) {
    search::SearchConfig cfg;
    harness::GeneratorSettings gen;
    if (!o.config.empty()) {
        json j = read_json(o.config);
        if (j.contains("generator")) {
            gen = harness::generator_from_json(j["generator"], fs::path(o.config).parent_path());
            j.erase("generator");
        }
        cfg = search::config_from_json(j);
    }
    apply_search_flags(o, cfg);
    apply_generator_flags(o, gen);
    cfg.validate();

    const auto spec = data::load_problem_spec(o.problem);
    const auto train = search::load_training(spec);
    auto generator = harness::make_generator(gen, train.arity(), cfg.seed);
    search::TestLoader loader = [&]() -> std::optional<data::Dataset> {
        if (!spec.test_path) return std::nullopt;
        return data::load_csv(*spec.test_path);
    };
    const auto trace = search::run(cfg, spec, train, loader, *generator);
    const fs::path path = o.out.empty()
                              ? fs::path(spec.name + "." + std::string(search::name_of(cfg.mode)) + ".trace.jsonl")
                              : fs::path(o.out);
    search::write_trace(trace, path);
    json s = search::summary_json(trace);
    s["trace"] = path.string();
    out << s.dump(2) << "\n";
    return 0;
}

int cmd_suite(const Options& o, std::ostream& out, std::ostream& err) {
    if (o.verify && !o.out.empty() && o.config.empty()) {
        const std::string problem = harness::verify_suite(o.out);
        if (!problem.empty()) throw Error("verification failed for '" + o.out + "': " + problem);
        out << "verified " << o.out << "\n";
        return 0;
    }
    if (o.config.empty()) throw Error("suite needs --config (or --verify with --out)");
    auto cfg = harness::load_suite_config(o.config);
    if (!o.out.empty()) cfg.output_dir = o.out;
    if (o.workers) cfg.workers = o.workers;
    if (!o.mode.empty()) cfg.modes = {search::mode_from_name(o.mode)};
    apply_search_flags(o, cfg.base);
    apply_generator_flags(o, cfg.generator);
    cfg.validate();

    if (!o.verify) {
        const auto report = harness::run_suite(cfg, &err);
        std::size_t failures = 0;
        for (const auto& r : report.runs) failures += r.ok ? 0 : 1;
        out << "runs " << report.runs.size() << ", executed " << report.executed << ", failed " << failures
            << ", summary " << (cfg.output_dir / "summary.json").string() << "\n";
        if (failures) return 2;
        return 0;
    }
    const std::string problem = harness::verify_suite(cfg.output_dir);
    if (!problem.empty()) throw Error("verification failed for '" + cfg.output_dir.string() + "': " + problem);
    out << "verified " << cfg.output_dir.string() << "\n";
    return 0;
}

data::Dataset dataset_from_flags(const Options& o) {
    if (!o.data.empty()) return data::load_csv(o.data);
    if (!o.problem.empty()) return search::load_training(data::load_problem_spec(o.problem));
    throw Error("needs --data or --problem");
}

void print_report(const context::AnalysisReport& r, bool as_json, std::ostream& out) {
    if (as_json) out << context::to_json(r).dump(2) << "\n";
    else out << context::render(r) << "\n";
}

int cmd_analyze(const Options& o, std::ostream& out) {
    if (o.spec.empty()) throw Error("analyze needs --spec");
    const auto d = dataset_from_flags(o);
    const std::string text = fs::exists(o.spec) ? read_file(o.spec) : o.spec;
    const auto spec = context::parse_spec(text, d.arity(), d.feature_names);
    print_report(context::execute(spec, d, o.seed), o.as_json, out);
    return 0;
}

int cmd_hint(const Options& o, std::ostream& out) {
    const auto d = dataset_from_flags(o);
    print_report(context::execute(context::default_hint_spec(d.arity()), d, o.seed), o.as_json, out);
    return 0;
}

int cmd_eval(const Options& o, std::ostream& out) {
    if (o.expr.empty()) throw Error("eval needs --expr");
    const auto d = dataset_from_flags(o);
    std::string text = o.expr;
    if (fs::is_regular_file(text)) text = read_file(text);
    const auto skeleton = expr::parse(text, d.arity(), d.feature_names);
    const auto view = data::split(d, o.seed);
    const auto c = fit::evaluate_candidate(skeleton, view, {}, o.seed);
    json j = search::candidate_json(c);
    const double full = c.valid() ? fit::heldout_nmse(c, d) : fit::kInfiniteError;
    j["nmse"] = std::isfinite(full) ? json(full) : json(nullptr);
    out << j.dump(2) << "\n";
    return 0;
}

} // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Symbolic regression with data-analysis context"};
    app.require_subcommand(1);
    Options o;

    auto add_seed = [&](CLI::App* c) {
        c->add_option("--seed", o.seed, "Random seed")->each([&](const std::string&) { o.seed_set = true; });
    };
    auto add_generator = [&](CLI::App* c) {
        c->add_option("--generator", o.generator, "Generator kind")
            ->check(CLI::IsMember({"remote", "scripted", "mutation"}));
        c->add_option("--script", o.script, "Script file for the scripted generator");
        c->add_option("--model", o.model, "Model name for the remote generator");
        c->add_option("--base-url", o.base_url, "Base URL for the remote generator");
        c->add_option("--malformed-rate", o.malformed_rate, "Malformed analysis rate for the mutation generator")
            ->check(CLI::Range(0.0, 1.0));
    };
    auto add_mode = [&](CLI::App* c) {
        c->add_option("--mode", o.mode, "Search mode")->check(CLI::IsMember({"llm-sr", "statistical-hint", "proaug"}));
    };

    auto* run = app.add_subcommand("run", "Run one search on one problem");
    run->add_option("--problem", o.problem, "Problem JSON")->required();
    run->add_option("--config", o.config, "Search config JSON");
    run->add_option("--out", o.out, "Trace output path");
    run->add_option("--iterations", o.iterations, "Iteration count");
    add_seed(run);
    add_mode(run);
    add_generator(run);

    auto* suite = app.add_subcommand("suite", "Run or verify an experiment suite");
    suite->add_option("--config", o.config, "Suite config JSON");
    suite->add_option("--out", o.out, "Output directory");
    suite->add_option("--workers", o.workers, "Parallel runs")->check(CLI::PositiveNumber);
    suite->add_option("--iterations", o.iterations, "Iteration count");
    suite->add_flag("--verify", o.verify, "Check summary.json against the traces without running");
    add_seed(suite);
    add_mode(suite);
    add_generator(suite);

    auto* analyze = app.add_subcommand("analyze", "Execute an analysis program on a dataset");
    analyze->add_option("--data", o.data, "CSV file");
    analyze->add_option("--problem", o.problem, "Problem JSON (uses its training data)");
    analyze->add_option("--spec", o.spec, "Analysis program file or inline text")->required();
    analyze->add_flag("--json", o.as_json, "Print JSON instead of prompt text");
    add_seed(analyze);

    auto* hint = app.add_subcommand("hint", "Print the fixed statistical hint for a dataset");
    hint->add_option("--data", o.data, "CSV file");
    hint->add_option("--problem", o.problem, "Problem JSON (uses its training data)");
    hint->add_flag("--json", o.as_json, "Print JSON instead of prompt text");
    add_seed(hint);

    auto* eval = app.add_subcommand("eval", "Fit one expression and report its scores");
    eval->add_option("--data", o.data, "CSV file");
    eval->add_option("--problem", o.problem, "Problem JSON (uses its training data)");
    eval->add_option("--expr", o.expr, "Expression skeleton or a file holding one")->required();
    add_seed(eval);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e, out, err);
        err << "usage error: " << e.what() << "\n";
        return 1;
    }

    try {
        if (app.got_subcommand(run)) return cmd_run(o, out);
        if (app.got_subcommand(suite)) return cmd_suite(o, out, err);
        if (app.got_subcommand(analyze)) return cmd_analyze(o, out);
        if (app.got_subcommand(hint)) return cmd_hint(o, out);
        if (app.got_subcommand(eval)) return cmd_eval(o, out);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}

} // namespace symreg::cli
