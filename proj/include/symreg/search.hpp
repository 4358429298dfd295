#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "symreg/context.hpp"
#include "symreg/data.hpp"
#include "symreg/fit.hpp"
#include "symreg/generate.hpp"

namespace symreg::search {

enum class Mode { LlmSr, StatisticalHint, ProAug };

std::string_view name_of(Mode m);
Mode mode_from_name(std::string_view s);  // "llm-sr" | "statistical-hint" | "proaug"

struct SearchConfig {
    std::size_t iterations = 150;
    std::size_t samples_per_prompt = 2;
    std::size_t repeats = 3;
    Mode mode = Mode::ProAug;
    std::size_t islands = 4;
    std::size_t island_capacity = 32;
    double sampling_temperature = 1.0;
    std::size_t k_demos = 2;
    double fitness_floor = -10.0;  // fitnesses are clamped here before the softmax
    std::uint64_t seed = 0;
    std::size_t retry_budget = 3;  // re-asks per malformed sample or analysis program
    double split_ratio = data::kDefaultSplitRatio;
    std::optional<std::uint64_t> split_seed;  // defaults to seed
    bool inject_report = true;  // false skips the analysis phase entirely
    bool memo_cache = true;
    fit::OptimizerConfig optimizer;
    generate::Decoding decoding;

    std::uint64_t effective_split_seed() const { return split_seed.value_or(seed); }
    void validate() const;  // throws Error
};

nlohmann::json to_json(const SearchConfig& c);
// Overlays the keys present in `j` onto `base`. Unknown keys are an error.
SearchConfig config_from_json(const nlohmann::json& j, SearchConfig base = {});

// ---------------------------------------------------------------------------

class ExperienceBuffer {
public:
    ExperienceBuffer(std::size_t islands, std::size_t capacity);

    // Invalid candidates are dropped without touching the counter. Valid ones
    // go to island (counter mod N). Returns true when stored.
    bool insert(const fit::Candidate& c);

    const std::vector<std::vector<fit::Candidate>>& islands() const noexcept { return islands_; }
    std::size_t counter() const noexcept { return counter_; }
    std::size_t capacity() const noexcept { return capacity_; }
    std::size_t size() const noexcept;
    bool empty() const noexcept { return size() == 0; }

private:
    std::vector<std::vector<fit::Candidate>> islands_;  // each sorted by fitness, best first
    std::size_t capacity_;
    std::size_t counter_ = 0;
};

// One island chosen uniformly among non-empty ones, then k draws without
// replacement with weights exp((max(f, floor) - fmax) / temperature).
// Returned ascending by fitness. An empty buffer yields the linear seed
// (unevaluated) as the only demonstration.
std::vector<fit::Candidate> sample_demonstrations(const ExperienceBuffer& buffer, std::size_t k,
                                                  double temperature, std::uint64_t seed,
                                                  std::size_t arity, double floor = -10.0);

// ---------------------------------------------------------------------------

struct Attempt {
    std::string raw;
    std::string error;  // empty on success
};

struct SampleRecord {
    std::vector<Attempt> attempts;
    std::optional<std::string> expression;  // canonical print of the accepted skeleton
    fit::Candidate candidate;               // meaningful when expression is set
    bool inserted = false;
};

struct AnalysisRecord {
    std::vector<std::string> prompts;
    std::vector<Attempt> attempts;
    std::optional<std::string> spec;  // canonical text of the accepted program
    bool fallback = false;            // every attempt failed; previous report reused
    std::optional<context::AnalysisReport> report;
};

struct IterationRecord {
    std::size_t iteration = 0;
    std::optional<AnalysisRecord> analysis;
    bool report_injected = false;
    std::string prompt;
    std::vector<SampleRecord> samples;
    double best_nmse = fit::kInfiniteError;
    std::string best_expression;
};

struct PhaseTimings {
    double analysis = 0, generation = 0, fitting = 0, total = 0;
    std::size_t cache_hits = 0;
};

struct RunTrace {
    std::string problem;
    std::string group = "default";
    SearchConfig config;
    std::size_t train_rows = 0, tr_tr_rows = 0, tr_val_rows = 0;
    fit::Candidate seed_candidate;
    std::vector<IterationRecord> iterations;
    fit::Candidate best;
    std::optional<double> test_nmse;
    PhaseTimings timings;  // wall clock, kept out of the trace file
};

using TestLoader = std::function<std::optional<data::Dataset>()>;

// Training CSV of a problem, checked against its variable descriptions.
data::Dataset load_training(const data::ProblemSpec& problem);

// Loads the training CSV up front and the test CSV (when present) once, after the loop.
RunTrace run(const SearchConfig& config, const data::ProblemSpec& problem, generate::Generator& generator);

RunTrace run(const SearchConfig& config, const data::ProblemSpec& problem, const data::Dataset& train,
             const TestLoader& load_test, generate::Generator& generator);

// JSON-lines: one "header" record, one record per iteration, one "final" record.
std::vector<nlohmann::json> trace_records(const RunTrace& trace);
std::string serialize_trace(const RunTrace& trace);
void write_trace(const RunTrace& trace, const std::filesystem::path& path);

// Per-run summary: best candidate, test NMSE, trajectory, timings.
nlohmann::json summary_json(const RunTrace& trace);

std::vector<double> trajectory(const RunTrace& trace);  // best-so-far tr-val NMSE per iteration

nlohmann::json candidate_json(const fit::Candidate& c);

} // namespace symreg::search
