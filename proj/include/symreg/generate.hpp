#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "symreg/context.hpp"
#include "symreg/data.hpp"
#include "symreg/error.hpp"
#include "symreg/fit.hpp"

namespace symreg::generate {

enum class Purpose { Equation, Analysis };

struct Decoding {
    double temperature = 0.8;
    std::size_t max_tokens = 2048;
    std::vector<std::string> stop;
};

struct GeneratorRequest {
    std::string prompt;
    std::size_t n_samples = 2;
    Decoding decoding;
    Purpose purpose = Purpose::Equation;
};

struct Usage {
    std::size_t prompt_tokens = 0;
    std::size_t completion_tokens = 0;
};

struct GeneratorResponse {
    std::vector<std::string> raw_texts;  // always n_samples long
    std::vector<bool> failed;            // true where a sample is padding
    std::vector<std::string> failure_messages;
    std::optional<Usage> usage;
    std::chrono::duration<double> latency{0.0};
    nlohmann::json transcript;  // wire-level log, remote only
};

class Generator {
public:
    virtual ~Generator() = default;
    // Safe to call concurrently.
    virtual GeneratorResponse generate(const GeneratorRequest& request) = 0;
    virtual std::string name() const = 0;
};

// Replays canned outputs, cycling, with one cursor per purpose.
class ScriptedGenerator final : public Generator {
public:
    explicit ScriptedGenerator(std::vector<std::string> equation_script,
                               std::vector<std::string> analysis_script = {});

    // JSON: ["...", ...] or {"equation": [...], "analysis": [...]}.
    // Any other file: entries separated by lines consisting of "---".
    static std::unique_ptr<ScriptedGenerator> from_file(const std::filesystem::path& path);

    GeneratorResponse generate(const GeneratorRequest& request) override;
    std::string name() const override { return "scripted"; }

private:
    std::vector<std::string> equations_;
    std::vector<std::string> analyses_;
    std::size_t equation_cursor_ = 0;
    std::size_t analysis_cursor_ = 0;
    std::mutex mutex_;
};

// LLM-free stand-in: mutates the ```expr demonstrations found in the prompt
// and emits random analysis programs for analysis requests.
class MutationGenerator final : public Generator {
public:
    MutationGenerator(std::size_t arity, std::uint64_t seed, double malformed_rate = 0.0);

    GeneratorResponse generate(const GeneratorRequest& request) override;
    std::string name() const override { return "mutation"; }

private:
    std::string equation_sample(const std::string& prompt, std::uint64_t seed) const;
    std::string analysis_sample(std::uint64_t seed) const;

    std::size_t arity_;
    std::uint64_t seed_;
    double malformed_rate_;
    std::uint64_t calls_ = 0;
    std::mutex mutex_;
};

struct RemoteChatConfig {
    std::string base_url = "https://api.openai.com/v1";
    std::string model;
    double timeout_seconds = 120.0;
    std::string api_key_env = "SYMREG_API_KEY";
};

// OpenAI-style POST {base_url}/chat/completions.
class RemoteChat final : public Generator {
public:
    explicit RemoteChat(RemoteChatConfig config);

    GeneratorResponse generate(const GeneratorRequest& request) override;
    std::string name() const override { return "remote"; }

private:
    RemoteChatConfig config_;
    std::string api_key_;
};

// ---------------------------------------------------------------------------
// Prompts

// Text inserted into the equation prompt for a report; empty for an empty report.
std::string report_block(const context::AnalysisReport& report);

// demos: ascending fitness (worst first). With no demos the linear seed is shown as v0.
std::string build_equation_prompt(const data::ProblemSpec& problem, std::size_t arity,
                                  std::span<const fit::Candidate> demos,
                                  const context::AnalysisReport* report);

// feedback: error text from the previous failed analysis program, if any.
std::string build_analysis_prompt(const data::ProblemSpec& problem, std::size_t arity,
                                  const std::string& feedback = {});

class ExtractionError : public Error {
public:
    using Error::Error;
};

// Parses the last ```expr block. Throws ExtractionError.
expr::Skeleton extract_expression(const std::string& raw, std::size_t arity,
                                  std::span<const std::string> feature_names = {});

// Parses the last ```analysis block. Throws ExtractionError.
context::AnalysisSpec extract_spec(const std::string& raw, std::size_t arity,
                                   std::span<const std::string> feature_names = {});

} // namespace symreg::generate
