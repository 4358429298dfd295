#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "symreg/generate.hpp"
#include "symreg/search.hpp"

namespace symreg::harness {

struct GeneratorSettings {
    std::string kind = "mutation";  // mutation | scripted | remote
    std::filesystem::path script;   // scripted only
    double malformed_rate = 0.0;    // mutation only
    generate::RemoteChatConfig remote;
};

// Builds a fresh generator for one run.
std::unique_ptr<generate::Generator> make_generator(const GeneratorSettings& settings, std::size_t arity,
                                                    std::uint64_t seed);

GeneratorSettings generator_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);

struct SuiteConfig {
    std::vector<std::filesystem::path> problems;  // problem JSON files
    std::vector<search::Mode> modes;
    std::size_t repeats = 3;
    search::SearchConfig base;
    GeneratorSettings generator;
    std::filesystem::path output_dir = "runs";
    std::size_t workers = 1;

    void validate() const;
};

// Relative paths resolve against base_dir.
SuiteConfig suite_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
SuiteConfig load_suite_config(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Statistics

struct VarianceStats {
    std::size_t count = 0;
    double mean = 0, median = 0, q1 = 0, q3 = 0, iqr = 0, min = 0, max = 0;
};

// Quartiles are medians of the lower and upper halves, each half including
// the overall median when the count is odd.
VarianceStats variance_stats(std::span<const double> values);
// Same on log10(v), with v floored at 1e-300 so exact fits stay finite.
VarianceStats log10_variance_stats(std::span<const double> values);

using Trajectories = std::map<std::string, std::vector<double>>;  // problem -> best-so-far NMSE per iteration

// Fraction of problems where a is strictly below b at t; ties count one half.
double win_rate(const Trajectories& a, const Trajectories& b, std::size_t t);
std::vector<double> win_rate_curve(const Trajectories& a, const Trajectories& b);

// Element-wise mean over repeats.
std::vector<double> average_trajectory(const std::vector<std::vector<double>>& repeats);

// ---------------------------------------------------------------------------
// Suite

struct RunEntry {
    std::string problem;
    std::string group;
    search::Mode mode = search::Mode::ProAug;
    std::size_t repeat = 0;
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    double final_val_nmse = fit::kInfiniteError;
    std::optional<double> test_nmse;
    std::string best_expression;
    std::vector<double> trajectory;
    std::string trace_path;  // relative to the output directory

    // Test NMSE when available, else final tr-val NMSE.
    double final_nmse() const { return test_nmse.value_or(final_val_nmse); }
};

struct SuiteReport {
    std::vector<RunEntry> runs;
    std::size_t executed = 0;  // runs performed in this invocation (others were resumed)
    nlohmann::json summary;    // contents of summary.json
};

std::filesystem::path trace_path(const std::filesystem::path& out, const std::string& problem, search::Mode mode,
                                 std::size_t repeat);

SuiteReport run_suite(const SuiteConfig& config, std::ostream* log = nullptr);

// Pure reduction over run entries; the order of `runs` is the config order.
nlohmann::json build_summary(const std::vector<RunEntry>& runs, const std::vector<std::string>& problems,
                             const std::vector<search::Mode>& modes, std::size_t repeats);

// Rebuilds every entry from the trace files alone and checks summary.json against it.
// Returns an empty string when consistent, otherwise a description of the first mismatch.
std::string verify_suite(const std::filesystem::path& output_dir);

std::string trajectories_csv(const std::vector<RunEntry>& runs);

// Reads the trace written by search::write_trace back into an entry.
RunEntry entry_from_trace(const std::filesystem::path& path);

} // namespace symreg::harness
