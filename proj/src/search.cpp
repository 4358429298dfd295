#include "symreg/search.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>

#include "symreg/rng.hpp"

namespace symreg::search {

namespace {

// Seed-derivation tags, one per consumer of randomness.
constexpr std::uint64_t kFitTag = 0xf17;
constexpr std::uint64_t kDemoTag = 0xde30;
constexpr std::uint64_t kAnalysisTag = 0xa7a1;
constexpr std::uint64_t kSeedSlot = ~std::uint64_t{0};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

} // namespace

std::string_view name_of(Mode m) {
    switch (m) {
        case Mode::LlmSr: return "llm-sr";
        case Mode::StatisticalHint: return "statistical-hint";
        case Mode::ProAug: return "proaug";
    }
    return "?";
}

Mode mode_from_name(std::string_view s) {
    for (Mode m : {Mode::LlmSr, Mode::StatisticalHint, Mode::ProAug})
        if (name_of(m) == s) return m;
    throw Error("unknown mode '" + std::string(s) + "' (expected llm-sr, statistical-hint or proaug)");
}

void SearchConfig::validate() const {
    if (iterations < 1) throw Error("iterations must be at least 1");
    if (samples_per_prompt < 1) throw Error("samples_per_prompt must be at least 1");
    if (repeats < 1) throw Error("repeats must be at least 1");
    if (islands < 1) throw Error("islands must be at least 1");
    if (k_demos < 1) throw Error("k_demos must be at least 1");
    if (island_capacity < k_demos) throw Error("island_capacity must be at least k_demos");
    if (!(sampling_temperature > 0.0)) throw Error("sampling_temperature must be positive");
    if (!(split_ratio > 0.0 && split_ratio < 1.0)) throw Error("split_ratio must lie in (0, 1)");
    if (optimizer.restarts < 1) throw Error("optimizer.restarts must be at least 1");
}

nlohmann::json to_json(const SearchConfig& c) {
    return {
        {"iterations", c.iterations},
        {"samples_per_prompt", c.samples_per_prompt},
        {"repeats", c.repeats},
        {"mode", name_of(c.mode)},
        {"islands", c.islands},
        {"island_capacity", c.island_capacity},
        {"sampling_temperature", c.sampling_temperature},
        {"k_demos", c.k_demos},
        {"fitness_floor", c.fitness_floor},
        {"seed", c.seed},
        {"retry_budget", c.retry_budget},
        {"split_ratio", c.split_ratio},
        {"split_seed", c.effective_split_seed()},
        {"split_stratified", false},
        {"inject_report", c.inject_report},
        {"memo_cache", c.memo_cache},
        {"optimizer",
         {{"restarts", c.optimizer.restarts},
          {"max_iterations", c.optimizer.max_iterations},
          {"max_evaluations", c.optimizer.max_evaluations},
          {"gradient_step", c.optimizer.gradient_step},
          {"gradient_tolerance", c.optimizer.gradient_tolerance},
          {"penalty", c.optimizer.penalty}}},
        {"decoding",
         {{"temperature", c.decoding.temperature},
          {"max_tokens", c.decoding.max_tokens},
          {"stop", c.decoding.stop}}},
    };
}

namespace {

template <class T>
void take(const nlohmann::json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw Error(std::string("config key '") + key + "' has the wrong type");
    }
}

void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> known, const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (std::none_of(known.begin(), known.end(), [&](const char* k) { return it.key() == k; }))
            throw Error("unknown config key '" + where + it.key() + "'");
    }
}

} // namespace

SearchConfig config_from_json(const nlohmann::json& j, SearchConfig c) {
    if (!j.is_object()) throw Error("search config must be a JSON object");
    reject_unknown(j,
                   {"iterations", "samples_per_prompt", "repeats", "mode", "islands", "island_capacity",
                    "sampling_temperature", "k_demos", "fitness_floor", "seed", "retry_budget", "split_ratio",
                    "split_seed", "split_stratified", "inject_report", "memo_cache", "optimizer", "decoding"},
                   "");
    take(j, "iterations", c.iterations);
    take(j, "samples_per_prompt", c.samples_per_prompt);
    take(j, "repeats", c.repeats);
    if (j.contains("mode")) {
        std::string m;
        take(j, "mode", m);
        c.mode = mode_from_name(m);
    }
    take(j, "islands", c.islands);
    take(j, "island_capacity", c.island_capacity);
    take(j, "sampling_temperature", c.sampling_temperature);
    take(j, "k_demos", c.k_demos);
    take(j, "fitness_floor", c.fitness_floor);
    take(j, "seed", c.seed);
    take(j, "retry_budget", c.retry_budget);
    take(j, "split_ratio", c.split_ratio);
    if (j.contains("split_seed")) {
        std::uint64_t s = 0;
        take(j, "split_seed", s);
        c.split_seed = s;
    }
    if (j.contains("split_stratified") && j["split_stratified"] != false)
        throw Error("stratified splits are not supported");
    take(j, "inject_report", c.inject_report);
    take(j, "memo_cache", c.memo_cache);
    if (j.contains("optimizer")) {
        const auto& o = j["optimizer"];
        if (!o.is_object()) throw Error("config key 'optimizer' must be an object");
        reject_unknown(o, {"restarts", "max_iterations", "max_evaluations", "gradient_step", "gradient_tolerance",
                           "penalty"},
                       "optimizer.");
        take(o, "restarts", c.optimizer.restarts);
        take(o, "max_iterations", c.optimizer.max_iterations);
        take(o, "max_evaluations", c.optimizer.max_evaluations);
        take(o, "gradient_step", c.optimizer.gradient_step);
        take(o, "gradient_tolerance", c.optimizer.gradient_tolerance);
        take(o, "penalty", c.optimizer.penalty);
    }
    if (j.contains("decoding")) {
        const auto& d = j["decoding"];
        if (!d.is_object()) throw Error("config key 'decoding' must be an object");
        reject_unknown(d, {"temperature", "max_tokens", "stop"}, "decoding.");
        take(d, "temperature", c.decoding.temperature);
        take(d, "max_tokens", c.decoding.max_tokens);
        take(d, "stop", c.decoding.stop);
    }
    c.validate();
    return c;
}

// ---------------------------------------------------------------------------
// Buffer

ExperienceBuffer::ExperienceBuffer(std::size_t islands, std::size_t capacity)
    : islands_(std::max<std::size_t>(islands, 1)), capacity_(std::max<std::size_t>(capacity, 1)) {}

std::size_t ExperienceBuffer::size() const noexcept {
    std::size_t n = 0;
    for (const auto& i : islands_) n += i.size();
    return n;
}

bool ExperienceBuffer::insert(const fit::Candidate& c) {
    if (!c.valid()) return false;
    auto& island = islands_[counter_++ % islands_.size()];
    const std::string key = expr::print(c.skeleton);
    auto dup = std::find_if(island.begin(), island.end(),
                            [&](const fit::Candidate& m) { return expr::print(m.skeleton) == key; });
    if (dup != island.end()) {
        if (c.fitness <= dup->fitness) return false;
        island.erase(dup);
    }
    if (island.size() >= capacity_ && c.fitness <= island.back().fitness) return false;
    auto pos = std::upper_bound(island.begin(), island.end(), c.fitness,
                                [](double f, const fit::Candidate& m) { return f > m.fitness; });
    island.insert(pos, c);
    if (island.size() > capacity_) island.pop_back();
    return true;
}

std::vector<fit::Candidate> sample_demonstrations(const ExperienceBuffer& buffer, std::size_t k,
                                                  double temperature, std::uint64_t seed, std::size_t arity,
                                                  double floor) {
    std::vector<std::size_t> nonempty;
    for (std::size_t i = 0; i < buffer.islands().size(); ++i)
        if (!buffer.islands()[i].empty()) nonempty.push_back(i);
    if (nonempty.empty()) {
        fit::Candidate c;
        c.skeleton = expr::linear_skeleton(arity);
        c.generator_tag = "seed";
        return {c};
    }
    Rng rng(seed);
    const auto& island = buffer.islands()[nonempty[rng.index(nonempty.size())]];
    k = std::min(k, island.size());

    double top = floor;
    for (const auto& c : island) top = std::max(top, std::max(c.fitness, floor));
    std::vector<double> weight(island.size());
    for (std::size_t i = 0; i < island.size(); ++i)
        weight[i] = std::exp((std::max(island[i].fitness, floor) - top) / temperature);

    std::vector<fit::Candidate> out;
    std::vector<bool> taken(island.size(), false);
    for (std::size_t draw = 0; draw < k; ++draw) {
        double total = 0;
        for (std::size_t i = 0; i < island.size(); ++i)
            if (!taken[i]) total += weight[i];
        const double u = rng.uniform() * total;
        double acc = 0;
        std::size_t chosen = island.size();
        for (std::size_t i = 0; i < island.size(); ++i) {
            if (taken[i]) continue;
            chosen = i;  // last untaken absorbs rounding
            acc += weight[i];
            if (u < acc) break;
        }
        taken[chosen] = true;
        out.push_back(island[chosen]);
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const fit::Candidate& a, const fit::Candidate& b) { return a.fitness < b.fitness; });
    return out;
}

// ---------------------------------------------------------------------------
// Loop

data::Dataset load_training(const data::ProblemSpec& problem) {
    data::Dataset train = data::load_csv(problem.data_path);
    if (!problem.variable_descriptions.empty() && problem.variable_descriptions.size() != train.arity())
        throw DataError("problem '" + problem.name + "' describes " +
                              std::to_string(problem.variable_descriptions.size()) + " variables but '" +
                              problem.data_path.string() + "' has " + std::to_string(train.arity()));
    return train;
}

RunTrace run(const SearchConfig& config, const data::ProblemSpec& problem, generate::Generator& generator) {
    const data::Dataset train = load_training(problem);
    TestLoader loader = [&]() -> std::optional<data::Dataset> {
        if (!problem.test_path) return std::nullopt;
        return data::load_csv(*problem.test_path);
    };
    return run(config, problem, train, loader, generator);
}

RunTrace run(const SearchConfig& config, const data::ProblemSpec& problem, const data::Dataset& train,
             const TestLoader& load_test, generate::Generator& generator) {
    config.validate();
    data::check(train);
    const auto run_start = Clock::now();

    RunTrace trace;
    trace.problem = problem.name;
    trace.group = problem.group;
    trace.config = config;
    const data::SplitView split = data::split(train, config.effective_split_seed(), config.split_ratio);
    trace.train_rows = train.rows();
    trace.tr_tr_rows = split.tr_tr.rows();
    trace.tr_val_rows = split.tr_val.rows();
    const std::size_t arity = train.arity();
    const auto& names = train.feature_names;

    ExperienceBuffer buffer(config.islands, config.island_capacity);
    auto t0 = Clock::now();
    fit::Candidate seed = fit::evaluate_candidate(expr::linear_skeleton(arity), split, config.optimizer,
                                                  derive_seed(config.seed, kFitTag, kSeedSlot));
    trace.timings.fitting += seconds_since(t0);
    seed.iteration_born = 0;
    seed.generator_tag = "seed";
    trace.seed_candidate = seed;
    buffer.insert(seed);
    fit::Candidate best = seed;
    auto improves = [](const fit::Candidate& c, const fit::Candidate& incumbent) {
        return c.valid() && (!incumbent.valid() || c.val_nmse < incumbent.val_nmse);
    };

    // Analysis runs on tr-tr only, with a seed fixed per split so memoised
    // reports equal recomputed ones.
    const std::uint64_t analysis_seed = derive_seed(config.effective_split_seed(), kAnalysisTag);
    std::map<std::string, context::AnalysisReport> cache;
    auto analyse = [&](const context::AnalysisSpec& spec) {
        const std::string key = context::print_spec(spec);
        if (config.memo_cache) {
            if (auto it = cache.find(key); it != cache.end()) {
                ++trace.timings.cache_hits;
                return it->second;
            }
        }
        context::AnalysisReport r = context::execute(spec, split.tr_tr, analysis_seed);
        if (config.memo_cache) cache.emplace(key, r);
        return r;
    };

    const bool analysis_on = config.inject_report && config.mode != Mode::LlmSr;
    std::optional<context::AnalysisReport> report;
    std::string feedback;

    for (std::size_t t = 0; t < config.iterations; ++t) {
        IterationRecord rec;
        rec.iteration = t;

        t0 = Clock::now();
        if (analysis_on && config.mode == Mode::StatisticalHint && t == 0) {
            AnalysisRecord a;
            const auto spec = context::default_hint_spec(arity);
            a.spec = context::print_spec(spec);
            report = analyse(spec);
            a.report = report;
            rec.analysis = std::move(a);
        } else if (analysis_on && config.mode == Mode::ProAug) {
            AnalysisRecord a;
            std::optional<context::AnalysisSpec> spec;
            for (std::size_t attempt = 0; attempt <= config.retry_budget && !spec; ++attempt) {
                const std::string prompt = generate::build_analysis_prompt(problem, arity, feedback);
                a.prompts.push_back(prompt);
                generate::GeneratorRequest req{prompt, 1, config.decoding, generate::Purpose::Analysis};
                const auto resp = generator.generate(req);
                Attempt at{resp.raw_texts.at(0), {}};
                try {
                    if (resp.failed.at(0)) throw generate::ExtractionError("generator failed: " + resp.failure_messages.at(0));
                    spec = generate::extract_spec(at.raw, arity, names);
                } catch (const generate::ExtractionError& e) {
                    at.error = e.what();
                    feedback = at.error;
                }
                a.attempts.push_back(std::move(at));
            }
            if (spec) {
                feedback.clear();
                a.spec = context::print_spec(*spec);
                report = analyse(*spec);
                a.report = report;
            } else {
                a.fallback = true;
            }
            rec.analysis = std::move(a);
        }
        trace.timings.analysis += seconds_since(t0);

        rec.report_injected = analysis_on && report.has_value();
        const auto demos = sample_demonstrations(buffer, config.k_demos, config.sampling_temperature,
                                                 derive_seed(config.seed, kDemoTag, t), arity,
                                                 config.fitness_floor);
        rec.prompt = generate::build_equation_prompt(problem, arity, demos, rec.report_injected ? &*report : nullptr);

        t0 = Clock::now();
        generate::GeneratorRequest req{rec.prompt, config.samples_per_prompt, config.decoding,
                                       generate::Purpose::Equation};
        const auto resp = generator.generate(req);
        trace.timings.generation += seconds_since(t0);

        // Samples are handled strictly in index order so buffer state is reproducible.
        for (std::size_t i = 0; i < config.samples_per_prompt; ++i) {
            SampleRecord s;
            std::string raw = resp.raw_texts.at(i);
            bool failed = resp.failed.at(i);
            std::string failure = resp.failure_messages.at(i);
            std::optional<expr::Skeleton> skeleton;
            for (std::size_t attempt = 0;; ++attempt) {
                Attempt at{raw, {}};
                try {
                    if (failed) throw generate::ExtractionError("generator failed: " + failure);
                    skeleton = generate::extract_expression(raw, arity, names);
                } catch (const generate::ExtractionError& e) {
                    at.error = e.what();
                }
                s.attempts.push_back(std::move(at));
                if (skeleton || attempt == config.retry_budget) break;
                t0 = Clock::now();
                generate::GeneratorRequest again{rec.prompt, 1, config.decoding, generate::Purpose::Equation};
                const auto r2 = generator.generate(again);
                trace.timings.generation += seconds_since(t0);
                raw = r2.raw_texts.at(0);
                failed = r2.failed.at(0);
                failure = r2.failure_messages.at(0);
            }
            if (skeleton) {
                t0 = Clock::now();
                fit::Candidate c = fit::evaluate_candidate(*skeleton, split, config.optimizer,
                                                           derive_seed(config.seed, kFitTag, t, i));
                trace.timings.fitting += seconds_since(t0);
                c.iteration_born = t;
                c.generator_tag = generator.name();
                s.expression = expr::print(c.skeleton);
                s.inserted = buffer.insert(c);
                if (improves(c, best)) best = c;
                s.candidate = std::move(c);
            }
            rec.samples.push_back(std::move(s));
        }
        rec.best_nmse = best.valid() ? best.val_nmse : fit::kInfiniteError;
        rec.best_expression = expr::print(best.skeleton);
        trace.iterations.push_back(std::move(rec));
    }

    trace.best = best;
    // The only read of test data.
    if (auto test = load_test(); test && best.valid()) trace.test_nmse = fit::heldout_nmse(best, *test);
    trace.timings.total = seconds_since(run_start);
    return trace;
}

// ---------------------------------------------------------------------------
// Serialization

nlohmann::json candidate_json(const fit::Candidate& c) {
    return {
        {"expression", expr::print(c.skeleton)},
        {"param_count", c.skeleton.param_count},
        {"params", c.fit.params},
        {"train_mse", c.fit.train_mse},
        {"converged", c.fit.converged},
        {"restarts_used", c.fit.restarts_used},
        {"evaluations", c.fit.evaluations},
        {"fitness", c.fitness},
        {"val_nmse", c.val_nmse},
        {"valid", c.valid()},
        {"iteration_born", c.iteration_born},
        {"generator", c.generator_tag},
    };
}

namespace {

nlohmann::json attempts_json(const std::vector<Attempt>& attempts) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& a : attempts) out.push_back({{"raw", a.raw}, {"error", a.error}});
    return out;
}

nlohmann::json report_json(const context::AnalysisReport& r) {
    nlohmann::json j = context::to_json(r);
    j["text"] = context::render(r);
    return j;
}

nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

} // namespace

std::vector<nlohmann::json> trace_records(const RunTrace& trace) {
    std::vector<nlohmann::json> out;
    out.push_back({
        {"type", "header"},
        {"problem", trace.problem},
        {"group", trace.group},
        {"config", to_json(trace.config)},
        {"split",
         {{"seed", trace.config.effective_split_seed()},
          {"ratio", trace.config.split_ratio},
          {"stratified", false},
          {"train_rows", trace.train_rows},
          {"tr_tr_rows", trace.tr_tr_rows},
          {"tr_val_rows", trace.tr_val_rows}}},
        {"seed_candidate", candidate_json(trace.seed_candidate)},
    });
    for (const auto& rec : trace.iterations) {
        nlohmann::json j;
        j["type"] = "iteration";
        j["iteration"] = rec.iteration;
        if (rec.analysis) {
            const auto& a = *rec.analysis;
            j["analysis"] = {{"prompts", a.prompts},
                             {"attempts", attempts_json(a.attempts)},
                             {"spec", a.spec ? nlohmann::json(*a.spec) : nlohmann::json(nullptr)},
                             {"fallback", a.fallback},
                             {"report", a.report ? report_json(*a.report) : nlohmann::json(nullptr)}};
        } else {
            j["analysis"] = nullptr;
        }
        j["report_injected"] = rec.report_injected;
        j["prompt"] = rec.prompt;
        nlohmann::json samples = nlohmann::json::array();
        for (const auto& s : rec.samples) {
            samples.push_back({{"attempts", attempts_json(s.attempts)},
                               {"expression", s.expression ? nlohmann::json(*s.expression) : nlohmann::json(nullptr)},
                               {"candidate", s.expression ? candidate_json(s.candidate) : nlohmann::json(nullptr)},
                               {"inserted", s.inserted}});
        }
        j["samples"] = std::move(samples);
        j["best_nmse"] = number_or_null(rec.best_nmse);
        j["best_expression"] = rec.best_expression;
        out.push_back(std::move(j));
    }
    out.push_back({{"type", "final"},
                   {"best", candidate_json(trace.best)},
                   {"test_nmse", trace.test_nmse ? number_or_null(*trace.test_nmse) : nlohmann::json(nullptr)}});
    return out;
}

std::string serialize_trace(const RunTrace& trace) {
    std::string out;
    for (const auto& r : trace_records(trace)) out += r.dump() + "\n";
    return out;
}

void write_trace(const RunTrace& trace, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const auto tmp = std::filesystem::path(path.string() + ".part");
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw Error("cannot write trace '" + path.string() + "'");
        out << serialize_trace(trace);
        if (!out) throw Error("failed writing trace '" + path.string() + "'");
    }
    std::filesystem::rename(tmp, path);
}

std::vector<double> trajectory(const RunTrace& trace) {
    std::vector<double> out;
    for (const auto& r : trace.iterations) out.push_back(r.best_nmse);
    return out;
}

nlohmann::json summary_json(const RunTrace& trace) {
    nlohmann::json traj = nlohmann::json::array();
    for (double v : trajectory(trace)) traj.push_back(number_or_null(v));
    return {
        {"problem", trace.problem},
        {"mode", name_of(trace.config.mode)},
        {"seed", trace.config.seed},
        {"iterations", trace.config.iterations},
        {"best", candidate_json(trace.best)},
        {"final_best_nmse", number_or_null(trace.best.valid() ? trace.best.val_nmse : fit::kInfiniteError)},
        {"test_nmse", trace.test_nmse ? number_or_null(*trace.test_nmse) : nlohmann::json(nullptr)},
        {"trajectory", traj},
        {"timings_seconds",
         {{"analysis", trace.timings.analysis},
          {"generation", trace.timings.generation},
          {"fitting", trace.timings.fitting},
          {"total", trace.timings.total},
          {"analysis_cache_hits", trace.timings.cache_hits}}},
    };
}

} // namespace symreg::search
