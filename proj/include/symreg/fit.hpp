#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "symreg/data.hpp"
#include "symreg/error.hpp"
#include "symreg/expr.hpp"

namespace symreg::fit {

inline constexpr double kInvalidFitness = -std::numeric_limits<double>::infinity();
inline constexpr double kInfiniteError = std::numeric_limits<double>::infinity();

struct OptimizerConfig {
    std::size_t restarts = 4;  // first start is all-ones, the rest standard normal
    std::size_t max_iterations = 500;
    std::size_t max_evaluations = 5000;  // per restart
    double gradient_step = 1e-6;         // relative: h = step * max(1, |theta|)
    double gradient_tolerance = 1e-8;
    double penalty = 1e10;  // added per non-finite row
};

struct FitResult {
    std::vector<double> params;
    double train_mse = kInfiniteError;
    bool converged = false;
    std::size_t restarts_used = 0;
    std::size_t evaluations = 0;

    bool operator==(const FitResult&) const = default;
};

struct Candidate {
    expr::Skeleton skeleton;
    FitResult fit;
    double fitness = kInvalidFitness;  // -NMSE on tr-val
    double val_nmse = kInfiniteError;
    std::size_t iteration_born = 0;
    std::string generator_tag;

    bool valid() const noexcept;
};

class DegenerateTargetError : public Error {
public:
    DegenerateTargetError() : Error("degenerate target variance") {}
};

// Mean squared error; any non-finite prediction gives +inf.
double mse(std::span<const double> predicted, std::span<const double> actual);

// sum (f - y)^2 / sum (y - mean y)^2. Non-finite predictions give +inf.
double nmse(std::span<const double> predicted, std::span<const double> actual);

FitResult fit_params(const expr::Skeleton& skeleton, const data::Dataset& tr_tr,
                     const OptimizerConfig& config, std::uint64_t seed);

// Fits on tr_tr and scores on tr_val. Never sees test rows.
Candidate evaluate_candidate(const expr::Skeleton& skeleton, const data::SplitView& split,
                             const OptimizerConfig& config, std::uint64_t seed);

// NMSE of a fitted candidate on held-out data; +inf when undefined.
double heldout_nmse(const Candidate& c, const data::Dataset& d);

} // namespace symreg::fit
