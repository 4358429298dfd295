#include <doctest.h>

#include <cmath>
#include <map>

#include "symreg/rng.hpp"
#include "symreg/search.hpp"

using namespace symreg;
using namespace symreg::search;

namespace {

fit::Candidate cand(const std::string& text, double fitness, std::size_t arity = 1) {
    fit::Candidate c;
    c.skeleton = expr::parse(text, arity);
    c.fitness = fitness;
    c.val_nmse = -fitness;
    return c;
}

data::Dataset dataset(std::size_t n, std::size_t arity, std::uint64_t seed,
                      const std::function<double(const std::vector<double>&)>& f, double lo = 1.0,
                      double hi = 5.0) {
    Rng rng(seed);
    std::vector<std::vector<double>> rows;
    data::Dataset d;
    for (std::size_t c = 0; c < arity; ++c) d.feature_names.push_back("x" + std::to_string(c));
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> row;
        for (std::size_t c = 0; c < arity; ++c) row.push_back(rng.uniform(lo, hi));
        d.target.push_back(f(row));
        rows.push_back(row);
    }
    d.features = Matrix::from_rows(rows);
    return d;
}

data::ProblemSpec spec_for(const std::string& name, std::size_t arity) {
    data::ProblemSpec p;
    p.name = name;
    for (std::size_t i = 0; i < arity; ++i) p.variable_descriptions.push_back("feature " + std::to_string(i));
    p.target_description = "target";
    return p;
}

TestLoader no_test() {
    return [] { return std::optional<data::Dataset>(); };
}

nlohmann::json without_mode(const std::string& trace) {
    nlohmann::json lines = nlohmann::json::array();
    std::size_t start = 0;
    while (start < trace.size()) {
        const auto end = trace.find('\n', start);
        lines.push_back(nlohmann::json::parse(trace.substr(start, end - start)));
        start = end + 1;
    }
    lines[0]["config"].erase("mode");
    lines[0]["config"].erase("memo_cache");
    lines[0]["config"].erase("inject_report");
    return lines;
}

const std::string kPowerLaw = "<thought>power law</thought>\n```expr\np0 * x0^p1 * x1^p2 * x2^p3 * x3^p4\n```";

} // namespace

TEST_CASE("buffer: round-robin routing") {
    ExperienceBuffer b(4, 32);
    for (int i = 0; i < 8; ++i) CHECK(b.insert(cand("p0 * x0 + " + std::to_string(i), -1.0 - i)));
    CHECK(b.counter() == 8);
    for (const auto& island : b.islands()) CHECK(island.size() == 2);
    CHECK(b.size() == 8);
}

TEST_CASE("buffer: invalid candidates are dropped without advancing the counter") {
    ExperienceBuffer b(2, 4);
    fit::Candidate bad = cand("x0", -1.0);
    bad.fitness = fit::kInvalidFitness;
    CHECK_FALSE(b.insert(bad));
    CHECK(b.counter() == 0);
    CHECK(b.empty());
}

TEST_CASE("buffer: full island rejects a worse candidate") {
    ExperienceBuffer b(1, 3);
    b.insert(cand("x0", -0.1));
    b.insert(cand("p0*x0", -0.2));
    b.insert(cand("p0+x0", -0.3));
    const auto before = b.islands();
    CHECK_FALSE(b.insert(cand("sin(x0)", -0.9)));
    CHECK(b.counter() == 4);
    REQUIRE(b.islands()[0].size() == 3);
    for (std::size_t i = 0; i < 3; ++i) CHECK(b.islands()[0][i].fitness == before[0][i].fitness);

    CHECK(b.insert(cand("cos(x0)", -0.15)));
    REQUIRE(b.islands()[0].size() == 3);
    CHECK(b.islands()[0][1].fitness == -0.15);
    CHECK(b.islands()[0][2].fitness == -0.2);
}

TEST_CASE("buffer: duplicates keep the better copy") {
    ExperienceBuffer b(1, 8);
    b.insert(cand("p0*x0", -0.5));
    b.insert(cand("x0 + p0", -0.2));
    CHECK(b.insert(cand("p0 * x0", -0.1)));
    REQUIRE(b.islands()[0].size() == 2);
    CHECK(b.islands()[0][0].fitness == -0.1);
    CHECK(expr::print(b.islands()[0][0].skeleton) == "(p0 * x0)");
    CHECK_FALSE(b.insert(cand("(p0*x0)", -0.4)));
    CHECK(b.islands()[0].size() == 2);
}

TEST_CASE("buffer: capacity and ordering hold under random inserts") {
    ExperienceBuffer b(3, 5);
    Rng rng(3);
    for (int i = 0; i < 500; ++i) {
        fit::Candidate c = cand("p0*x0 + " + std::to_string(rng.index(40)), -rng.uniform(0, 3));
        if (rng.coin(0.1)) c.fitness = fit::kInvalidFitness;
        b.insert(c);
        for (const auto& island : b.islands()) {
            CHECK(island.size() <= 5);
            for (std::size_t k = 0; k < island.size(); ++k) {
                CHECK(std::isfinite(island[k].fitness));
                if (k) CHECK(island[k - 1].fitness >= island[k].fitness);
            }
        }
    }
}

TEST_CASE("demonstrations: equal fitness is uniform") {
    ExperienceBuffer b(1, 8);
    for (int i = 0; i < 4; ++i) b.insert(cand("p0*x0 + " + std::to_string(i), -0.5));
    std::map<std::string, int> counts;
    const int draws = 100000;
    for (int s = 0; s < draws; ++s) counts[expr::print(sample_demonstrations(b, 1, 1.0, s, 1)[0].skeleton)]++;
    REQUIRE(counts.size() == 4);
    for (const auto& [k, v] : counts) CHECK(std::fabs(v / double(draws) - 0.25) <= 0.02 * 0.25);
}

TEST_CASE("demonstrations: softmax ratio e:1 for a unit fitness gap") {
    ExperienceBuffer b(1, 8);
    b.insert(cand("x0", 0.0));
    b.insert(cand("p0*x0", -1.0));
    int better = 0, worse = 0;
    for (int s = 0; s < 100000; ++s) {
        const auto d = sample_demonstrations(b, 1, 1.0, derive_seed(7, s), 1);
        (d[0].fitness == 0.0 ? better : worse)++;
    }
    const double ratio = double(better) / worse;
    CHECK(std::fabs(ratio / std::exp(1.0) - 1.0) <= 0.02);
}

TEST_CASE("demonstrations: whole island ascending, empty buffer seed, shift invariance, floor") {
    ExperienceBuffer b(1, 8);
    b.insert(cand("x0", -0.25));
    b.insert(cand("p0*x0", -1.5));
    b.insert(cand("p0+x0", -0.75));
    auto all = sample_demonstrations(b, 3, 1.0, 5, 1);
    REQUIRE(all.size() == 3);
    CHECK(all[0].fitness == -1.5);
    CHECK(all[1].fitness == -0.75);
    CHECK(all[2].fitness == -0.25);
    CHECK(sample_demonstrations(b, 10, 1.0, 5, 1).size() == 3);

    ExperienceBuffer empty(2, 4);
    auto seed = sample_demonstrations(empty, 2, 1.0, 0, 3);
    REQUIRE(seed.size() == 1);
    CHECK(seed[0].skeleton == expr::linear_skeleton(3));
    CHECK_FALSE(seed[0].valid());

    ExperienceBuffer shifted(1, 8);
    shifted.insert(cand("x0", 0.75));
    shifted.insert(cand("p0*x0", -0.5));
    shifted.insert(cand("p0+x0", 0.25));
    for (std::uint64_t s = 0; s < 200; ++s) {
        const auto a = sample_demonstrations(b, 2, 1.0, s, 1);
        const auto c = sample_demonstrations(shifted, 2, 1.0, s, 1);
        REQUIRE(a.size() == c.size());
        for (std::size_t i = 0; i < a.size(); ++i) CHECK(expr::print(a[i].skeleton) == expr::print(c[i].skeleton));
    }

    // Below the floor every candidate weighs the same.
    ExperienceBuffer deep(1, 8);
    deep.insert(cand("x0", -50.0));
    deep.insert(cand("p0*x0", -500.0));
    int first = 0;
    for (int s = 0; s < 20000; ++s) first += sample_demonstrations(deep, 1, 1.0, s, 1, -10.0)[0].fitness == -50.0;
    CHECK(std::fabs(first / 20000.0 - 0.5) < 0.02);
}

TEST_CASE("config json round trip and validation") {
    SearchConfig c;
    c.iterations = 17;
    c.mode = Mode::StatisticalHint;
    c.optimizer.restarts = 2;
    c.decoding.stop = {"</x>"};
    c.split_seed = 44;
    auto back = config_from_json(to_json(c));
    CHECK(to_json(back) == to_json(c));
    CHECK_THROWS_AS(config_from_json({{"iterashuns", 3}}), Error);
    CHECK_THROWS_AS(config_from_json({{"optimizer", {{"restart", 3}}}}), Error);
    CHECK_THROWS_AS(config_from_json({{"iterations", 0}}), Error);
    CHECK_THROWS_AS(config_from_json({{"mode", "gp"}}), Error);
    CHECK_THROWS_AS(config_from_json({{"island_capacity", 1}, {"k_demos", 2}}), Error);
    CHECK(mode_from_name("proaug") == Mode::ProAug);
}

TEST_CASE("run: linear data converges with the mutation generator") {
    const auto d = dataset(40, 1, 1, [](const auto& r) { return 2.0 * r[0]; }, 1.0, 10.0);
    SearchConfig cfg;
    cfg.iterations = 30;
    cfg.mode = Mode::LlmSr;
    cfg.seed = 4;
    generate::MutationGenerator gen(1, 4);
    auto trace = run(cfg, spec_for("linear", 1), d, no_test(), gen);
    REQUIRE(trace.iterations.size() == 30);
    CHECK(trace.iterations.back().best_nmse <= 1e-6);
    CHECK(trace.best.valid());
}

TEST_CASE("run: statistical hint with a scripted power law finds the ratio law at once") {
    const auto d = dataset(20, 4, 9, [](const auto& r) { return r[0] * r[1] / (r[2] * r[3]); });
    SearchConfig cfg;
    cfg.iterations = 3;
    cfg.mode = Mode::StatisticalHint;
    generate::ScriptedGenerator gen({kPowerLaw});
    auto trace = run(cfg, spec_for("ratio", 4), d, no_test(), gen);
    CHECK(trace.iterations[0].best_nmse <= 1e-6);
    REQUIRE(trace.iterations[0].analysis.has_value());
    CHECK(trace.iterations[0].analysis->report->find("r2_log(Y)_log(X_0)") != nullptr);
    CHECK_FALSE(trace.iterations[1].analysis.has_value());
    for (const auto& rec : trace.iterations) {
        CHECK(rec.report_injected);
        CHECK(rec.prompt.find("Statistics: {'mean_Y'") != std::string::npos);
    }
    const auto& p = trace.best.fit.params;
    REQUIRE(p.size() == 5);
    CHECK(std::fabs(p[1] - 1) <= 0.01);
    CHECK(std::fabs(p[2] - 1) <= 0.01);
    CHECK(std::fabs(p[3] + 1) <= 0.01);
    CHECK(std::fabs(p[4] + 1) <= 0.01);
}

TEST_CASE("run: identical inputs give byte-identical traces, best-so-far is monotone") {
    const auto d = dataset(50, 2, 2, [](const auto& r) { return std::sin(r[0]) * r[1]; });
    SearchConfig cfg;
    cfg.iterations = 12;
    cfg.mode = Mode::ProAug;
    cfg.seed = 21;
    auto once = [&] {
        generate::MutationGenerator gen(2, 8, 0.3);
        return serialize_trace(run(cfg, spec_for("sinmul", 2), d, no_test(), gen));
    };
    const std::string a = once();
    CHECK(a == once());

    generate::MutationGenerator gen(2, 8, 0.3);
    const auto trace = run(cfg, spec_for("sinmul", 2), d, no_test(), gen);
    const auto traj = trajectory(trace);
    for (std::size_t i = 1; i < traj.size(); ++i) CHECK(traj[i] <= traj[i - 1]);
    CHECK(traj.front() <= trace.seed_candidate.val_nmse);
    for (const auto& rec : trace.iterations) {
        REQUIRE(rec.analysis.has_value());
        CHECK(rec.analysis->attempts.size() <= cfg.retry_budget + 1);
    }
}

TEST_CASE("run: malformed samples are retried within budget, then discarded") {
    const auto d = dataset(30, 1, 3, [](const auto& r) { return 3.0 * r[0] + 1.0; });
    SearchConfig cfg;
    cfg.iterations = 1;
    cfg.samples_per_prompt = 2;
    cfg.mode = Mode::LlmSr;
    // Initial answers for samples 0 and 1, then re-asks in sample order.
    generate::ScriptedGenerator gen({"no block", "junk", "```expr\nx0 +\n```", "```expr\np0*x0 + p1\n```", "junk",
                                     "junk", "junk"});
    auto trace = run(cfg, spec_for("lin", 1), d, no_test(), gen);
    const auto& samples = trace.iterations[0].samples;
    REQUIRE(samples.size() == 2);
    CHECK(samples[0].attempts.size() == 3);
    CHECK(samples[0].attempts[0].error.find("no ```expr block") != std::string::npos);
    CHECK(samples[0].attempts[1].error.find("does not parse") != std::string::npos);
    CHECK(samples[0].attempts[2].error.empty());
    CHECK(samples[0].expression.has_value());
    CHECK(samples[1].attempts.size() == cfg.retry_budget + 1);
    CHECK_FALSE(samples[1].expression.has_value());
    for (const auto& a : samples[1].attempts) CHECK_FALSE(a.error.empty());
}

TEST_CASE("run: failed analysis falls back to the last report and feeds the error back") {
    const auto d = dataset(30, 1, 3, [](const auto& r) { return r[0] * r[0]; });
    SearchConfig cfg;
    cfg.iterations = 3;
    cfg.mode = Mode::ProAug;
    cfg.retry_budget = 1;
    const std::string good = "```analysis\nr2 log(y) ~ log(x0)\n```";
    const std::string bad = "```analysis\nr2 y ~ frobnicate(x0)\n```";
    // iteration 0: bad, good; iteration 1: bad, bad (fallback); iteration 2: good.
    generate::ScriptedGenerator gen({"```expr\np0*x0^p1\n```"}, {bad, good, bad, bad, good});
    auto trace = run(cfg, spec_for("sq", 1), d, no_test(), gen);
    const auto& it0 = *trace.iterations[0].analysis;
    CHECK(it0.attempts.size() == 2);
    CHECK(it0.prompts[1].find("unknown transform 'frobnicate' (line 1)") != std::string::npos);
    CHECK(it0.spec == std::optional<std::string>("r2 log(y) ~ log(x0)\n"));
    const auto& it1 = *trace.iterations[1].analysis;
    CHECK(it1.fallback);
    CHECK(trace.iterations[1].report_injected);
    CHECK(trace.iterations[1].prompt.find("'r2_log(Y)_log(X_0)': 1.0") != std::string::npos);
    const auto& it2 = *trace.iterations[2].analysis;
    CHECK(it2.prompts[0].find("frobnicate") != std::string::npos);
    CHECK_FALSE(it2.fallback);
}

TEST_CASE("run: memo cache does not change results") {
    const auto d = dataset(30, 2, 5, [](const auto& r) { return r[0] / r[1]; });
    SearchConfig cfg;
    cfg.iterations = 6;
    cfg.mode = Mode::ProAug;
    auto go = [&](bool memo) {
        cfg.memo_cache = memo;
        generate::ScriptedGenerator gen({"```expr\np0*x0/x1\n```"}, {"```analysis\nstats all\nsample 4\n```"});
        return run(cfg, spec_for("r", 2), d, no_test(), gen);
    };
    const auto cached = go(true);
    const auto fresh = go(false);
    CHECK(cached.timings.cache_hits == 5);
    CHECK(fresh.timings.cache_hits == 0);
    CHECK(without_mode(serialize_trace(cached)) == without_mode(serialize_trace(fresh)));
}

TEST_CASE("run: test data is loaded once, after the loop") {
    const auto d = dataset(30, 1, 6, [](const auto& r) { return 2.0 * r[0]; });
    const auto test = dataset(10, 1, 7, [](const auto& r) { return 2.0 * r[0]; });
    int loads = 0;
    struct Watch final : generate::Generator {
        int* loads;
        generate::ScriptedGenerator inner{{"```expr\np0*x0\n```"}};
        bool loaded_early = false;
        generate::GeneratorResponse generate(const generate::GeneratorRequest& r) override {
            loaded_early = loaded_early || *loads > 0;
            return inner.generate(r);
        }
        std::string name() const override { return "watch"; }
    } gen;
    gen.loads = &loads;
    SearchConfig cfg;
    cfg.iterations = 4;
    cfg.mode = Mode::LlmSr;
    auto trace = run(cfg, spec_for("t", 1), d, [&] { ++loads; return std::optional(test); }, gen);
    CHECK(loads == 1);
    CHECK_FALSE(gen.loaded_early);
    REQUIRE(trace.test_nmse.has_value());
    CHECK(*trace.test_nmse <= 1e-12);
}

TEST_CASE("run: with injection disabled proaug equals llm-sr; enabled, prompts differ by the block") {
    const auto d = dataset(40, 2, 8, [](const auto& r) { return r[0] * r[0] + r[1]; });
    SearchConfig cfg;
    cfg.iterations = 8;
    cfg.seed = 3;
    const std::vector<std::string> eq = {"```expr\np0*x0^2 + p1*x1\n```", "```expr\np0*x0 + p1\n```",
                                         "```expr\nexp(p0*x1)\n```"};
    const std::vector<std::string> an = {"```analysis\nstats all\nr2 y ~ square(x0)\n```"};
    auto go = [&](Mode m, bool inject) {
        cfg.mode = m;
        cfg.inject_report = inject;
        generate::ScriptedGenerator gen(eq, an);
        return run(cfg, spec_for("quad", 2), d, no_test(), gen);
    };
    const auto base = go(Mode::LlmSr, true);
    const auto off = go(Mode::ProAug, false);
    CHECK(without_mode(serialize_trace(base)) == without_mode(serialize_trace(off)));
    const auto on = go(Mode::ProAug, true);
    REQUIRE(on.iterations.size() == base.iterations.size());
    for (std::size_t t = 0; t < on.iterations.size(); ++t) {
        const std::string block = generate::report_block(*on.iterations[t].analysis->report);
        const std::string& p = on.iterations[t].prompt;
        const auto at = p.find(block);
        REQUIRE(at != std::string::npos);
        CHECK(p.substr(0, at) + p.substr(at + block.size()) == base.iterations[t].prompt);
    }
}

TEST_CASE("run: perturbing tr-val rows leaves analysis reports and fits unchanged") {
    const auto d = dataset(40, 2, 10, [](const auto& r) { return r[0] * std::log(r[1]); });
    SearchConfig cfg;
    cfg.iterations = 4;
    cfg.mode = Mode::ProAug;
    cfg.seed = 12;
    const auto split = data::split(d, cfg.effective_split_seed(), cfg.split_ratio);
    auto perturbed = d;
    for (std::size_t r : split.tr_val_rows) perturbed.target[r] += 1.0;

    auto go = [&](const data::Dataset& data) {
        generate::ScriptedGenerator gen({"```expr\np0*x0*log(x1)\n```", "```expr\np0*x0 + p1*x1\n```"},
                                        {"```analysis\nsample 5\nstats all\nr2 y ~ product(x0, x1)\n```"});
        return run(cfg, spec_for("leak", 2), data, no_test(), gen);
    };
    const auto a = go(d);
    const auto b = go(perturbed);
    bool fitness_moved = false;
    for (std::size_t t = 0; t < a.iterations.size(); ++t) {
        CHECK(*a.iterations[t].analysis->report == *b.iterations[t].analysis->report);
        for (std::size_t i = 0; i < a.iterations[t].samples.size(); ++i) {
            const auto& ca = a.iterations[t].samples[i].candidate;
            const auto& cb = b.iterations[t].samples[i].candidate;
            CHECK(ca.fit == cb.fit);
            fitness_moved = fitness_moved || ca.fitness != cb.fitness;
        }
    }
    CHECK(fitness_moved);
}

TEST_CASE("serialization: records and summary") {
    const auto d = dataset(20, 1, 11, [](const auto& r) { return r[0]; });
    SearchConfig cfg;
    cfg.iterations = 2;
    cfg.mode = Mode::LlmSr;
    generate::ScriptedGenerator gen({"```expr\nx0\n```"});
    const auto trace = run(cfg, spec_for("id", 1), d, no_test(), gen);
    const auto recs = trace_records(trace);
    REQUIRE(recs.size() == 4);
    CHECK(recs[0]["type"] == "header");
    CHECK(recs[0]["split"]["tr_tr_rows"] == 16);
    CHECK(recs[1]["type"] == "iteration");
    CHECK(recs[1]["analysis"].is_null());
    CHECK(recs[3]["type"] == "final");
    CHECK(recs[3]["test_nmse"].is_null());
    const std::string text = serialize_trace(trace);
    CHECK(std::count(text.begin(), text.end(), '\n') == 4);
    CHECK(text.find("timings") == std::string::npos);
    const auto s = summary_json(trace);
    CHECK(s["trajectory"].size() == 2);
    CHECK(s.contains("timings_seconds"));
}
