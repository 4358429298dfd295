#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "symreg/matrix.hpp"

namespace symreg::data {

struct Dataset {
    std::vector<std::string> feature_names;
    std::string target_name = "y";
    Matrix features;  // n x d
    std::vector<double> target;

    std::size_t rows() const noexcept { return target.size(); }
    std::size_t arity() const noexcept { return features.cols(); }

    // Rows selected by index, in the given order.
    Dataset subset(const std::vector<std::size_t>& rows) const;

    bool operator==(const Dataset&) const = default;
};

// Throws DataError unless n >= 1, d >= 1, names match and all values are finite.
void check(const Dataset& d);

// Reads a headered CSV. The target is the column named "target" when one
// exists, otherwise the last column.
Dataset load_csv(const std::filesystem::path& path);
Dataset parse_csv(const std::string& text, const std::string& source = "<memory>");
void write_csv(const Dataset& d, const std::filesystem::path& path);

// Partition of the training data: parameters are fitted on tr_tr, fitness
// is measured on tr_val. Test data lives outside this view on purpose.
struct SplitView {
    Dataset tr_tr;
    Dataset tr_val;
    std::uint64_t split_seed = 0;
    double split_ratio = 0.8;
    std::vector<std::size_t> tr_tr_rows;  // indices into the training data
    std::vector<std::size_t> tr_val_rows;
};

inline constexpr double kDefaultSplitRatio = 0.8;

// Seeded shuffle, then the first round(ratio * n) rows go to tr_tr.
SplitView split(const Dataset& d, std::uint64_t seed, double ratio = kDefaultSplitRatio);

struct ColumnSummary {
    std::string name;
    double mean = 0.0;
    double std = 0.0;  // population standard deviation
    double min = 0.0;
    double max = 0.0;
};

struct Summary {
    std::vector<ColumnSummary> features;
    ColumnSummary target;
};

ColumnSummary summarize(std::span<const double> values, std::string name = {});
Summary describe(const Dataset& d);

struct ProblemSpec {
    std::string name;
    std::string group = "default";
    std::vector<std::string> variable_descriptions;
    std::string target_description;
    std::string instructions;
    std::filesystem::path data_path;
    std::optional<std::filesystem::path> test_path;
    std::optional<std::string> ground_truth;
};

// JSON problem file; relative data paths resolve against the file's directory.
ProblemSpec load_problem_spec(const std::filesystem::path& path);

struct Problem {
    ProblemSpec spec;
    Dataset train;
    std::optional<Dataset> test;
};

Problem load_problem(const ProblemSpec& spec);

} // namespace symreg::data
