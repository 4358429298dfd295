#include <doctest.h>

#include <cmath>
#include <limits>

#include "symreg/fit.hpp"
#include "symreg/rng.hpp"

using namespace symreg;
using namespace symreg::fit;

namespace {

data::Dataset make_dataset(const Matrix& x, std::vector<double> y) {
    data::Dataset d;
    for (std::size_t c = 0; c < x.cols(); ++c) d.feature_names.push_back("x" + std::to_string(c));
    d.features = x;
    d.target = std::move(y);
    return d;
}

data::Dataset ratio_law_dataset(std::uint64_t seed, std::size_t n) {
    Rng rng(seed);
    Matrix x(n, 4);
    std::vector<double> y(n);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < 4; ++c) x(r, c) = rng.uniform(1.0, 5.0);
        y[r] = x(r, 0) * x(r, 1) / (x(r, 2) * x(r, 3));
    }
    return make_dataset(x, y);
}

// Closed-form best scale c for y ~ c * f, and the resulting MSE.
std::pair<double, double> best_scale(const std::vector<double>& f, const std::vector<double>& y) {
    double fy = 0, ff = 0;
    for (std::size_t i = 0; i < f.size(); ++i) fy += f[i] * y[i], ff += f[i] * f[i];
    const double c = fy / ff;
    double sse = 0;
    for (std::size_t i = 0; i < f.size(); ++i) sse += (c * f[i] - y[i]) * (c * f[i] - y[i]);
    return {c, sse / static_cast<double>(f.size())};
}

// Grid search with step refinement over the four exponents; the scale is
// solved in closed form at each grid point.
std::array<double, 4> brute_force_exponents(const data::Dataset& d) {
    std::array<double, 4> best = {0, 0, 0, 0};
    double best_mse = std::numeric_limits<double>::infinity();
    auto score = [&](const std::array<double, 4>& e) {
        std::vector<double> f(d.rows());
        for (std::size_t r = 0; r < d.rows(); ++r) {
            double v = 1;
            for (std::size_t c = 0; c < 4; ++c) v *= std::pow(d.features(r, c), e[c]);
            f[r] = v;
        }
        return best_scale(f, d.target).second;
    };
    std::array<double, 4> centre = {0, 0, 0, 0};
    double step = 0.5;
    int span = 4;
    for (int round = 0; round < 12; ++round) {
        std::array<double, 4> e;
        for (int a = -span; a <= span; ++a)
            for (int b = -span; b <= span; ++b)
                for (int c = -span; c <= span; ++c)
                    for (int g = -span; g <= span; ++g) {
                        e = {centre[0] + a * step, centre[1] + b * step, centre[2] + c * step,
                             centre[3] + g * step};
                        const double m = score(e);
                        if (m < best_mse) best_mse = m, best = e;
                    }
        centre = best;
        step /= 2;
        span = 2;
    }
    return best;
}

} // namespace

TEST_CASE("mse hand cases") {
    CHECK(mse(std::vector<double>{1, 2}, std::vector<double>{1, 2}) == 0.0);
    CHECK(mse(std::vector<double>{0, 0}, std::vector<double>{1, -1}) == 1.0);
    CHECK(mse(std::vector<double>{std::nan(""), 2}, std::vector<double>{1, 2}) ==
          std::numeric_limits<double>::infinity());
    CHECK_THROWS_AS(mse(std::vector<double>{1}, std::vector<double>{1, 2}), Error);
}

TEST_CASE("nmse hand cases") {
    const std::vector<double> y = {1, 2, 3};
    CHECK(nmse(y, y) == 0.0);
    CHECK(nmse(std::vector<double>{2, 2, 2}, y) == 1.0);
    CHECK(nmse(std::vector<double>{1, 2, 4}, y) == 0.5);
    CHECK_THROWS_AS(nmse(std::vector<double>{1, 2}, std::vector<double>{3, 3}), DegenerateTargetError);
    CHECK_THROWS_WITH(nmse(std::vector<double>{1, 2}, std::vector<double>{3, 3}),
                      "degenerate target variance");
}

TEST_CASE("nmse and mse satisfy the variance-sum identity") {
    Rng rng(17);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 2 + rng.index(100);
        std::vector<double> p(n), y(n);
        for (std::size_t i = 0; i < n; ++i) y[i] = rng.normal() * 3 + 1, p[i] = y[i] + rng.normal();
        double mean = 0;
        for (double v : y) mean += v;
        mean /= n;
        double den = 0;
        for (double v : y) den += (v - mean) * (v - mean);
        const double lhs = nmse(p, y) * den, rhs = n * mse(p, y);
        CHECK(std::fabs(lhs - rhs) <= 1e-12 * rhs);
    }
}

TEST_CASE("fit_params recovers a scale factor") {
    Matrix x(10, 1);
    std::vector<double> y;
    for (int i = 1; i <= 10; ++i) x(i - 1, 0) = i, y.push_back(2.0 * i);
    const auto d = make_dataset(x, y);
    const FitResult r = fit_params(expr::parse("p0*x0", 1), d, {}, 1);
    REQUIRE(r.params.size() == 1);
    CHECK(std::fabs(r.params[0] - 2.0) < 1e-6);
    CHECK(r.converged);
    CHECK(r.restarts_used == 4);
}

TEST_CASE("fit_params slope matches closed-form OLS on noisy data") {
    Rng rng(23);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 10 + rng.index(50);
        Matrix x(n, 1);
        std::vector<double> y(n);
        const double slope = rng.uniform(-5, 5);
        for (std::size_t i = 0; i < n; ++i) {
            x(i, 0) = rng.uniform(-3, 3);
            y[i] = slope * x(i, 0) + rng.normal() * 0.5;
        }
        double xy = 0, xx = 0;
        for (std::size_t i = 0; i < n; ++i) xy += x(i, 0) * y[i], xx += x(i, 0) * x(i, 0);
        const FitResult r = fit_params(expr::parse("p0*x0", 1), make_dataset(x, y), {}, trial);
        CHECK(std::fabs(r.params[0] - xy / xx) < 1e-6);
    }
}

TEST_CASE("zero-parameter skeleton reports the direct MSE") {
    const auto d = make_dataset(Matrix::from_rows({{1}, {2}, {3}}), {1, 2, 4});
    const FitResult r = fit_params(expr::parse("x0", 1), d, {}, 0);
    CHECK(r.params.empty());
    CHECK(r.train_mse == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("power-law skeleton recovers the ratio law exponents") {
    const auto d = ratio_law_dataset(4, 20);
    const auto oracle = brute_force_exponents(d);
    for (std::size_t c = 0; c < 4; ++c) CHECK(std::fabs(oracle[c] - std::array{1., 1., -1., -1.}[c]) < 0.01);

    const auto s = expr::parse("p0 * x0^p1 * x1^p2 * x2^p3 * x3^p4", 4);
    const FitResult r = fit_params(s, d, {}, 9);
    REQUIRE(r.params.size() == 5);
    CHECK(std::fabs(r.params[1] - oracle[0]) < 0.01);
    CHECK(std::fabs(r.params[2] - oracle[1]) < 0.01);
    CHECK(std::fabs(r.params[3] - oracle[2]) < 0.01);
    CHECK(std::fabs(r.params[4] - oracle[3]) < 0.01);
    CHECK(r.train_mse <= 1e-10);
}

TEST_CASE("multi-start result is no worse than the all-ones start alone") {
    Rng rng(31);
    const char* forms[] = {"p0*sin(p1*x0)+p2", "p0*exp(p1*x0)", "p0/(p1+x0)", "p0*x0^p1+p2*x0"};
    for (const char* text : forms) {
        Matrix x(30, 1);
        std::vector<double> y(30);
        for (std::size_t i = 0; i < 30; ++i) x(i, 0) = rng.uniform(0.5, 4), y[i] = std::cos(x(i, 0)) + 0.1 * i;
        const auto d = make_dataset(x, y);
        const auto s = expr::parse(text, 1);
        OptimizerConfig single;
        single.restarts = 1;
        const FitResult ones = fit_params(s, d, single, 5);
        const FitResult multi = fit_params(s, d, {}, 5);
        CHECK(multi.train_mse <= ones.train_mse);
        CHECK(multi == fit_params(s, d, {}, 5));
    }
}

TEST_CASE("pathological skeletons do not throw") {
    const auto d = make_dataset(Matrix::from_rows({{-1}, {-2}, {-3}, {-4}}), {1, 2, 3, 4});
    const FitResult r = fit_params(expr::parse("p0*log(x0)", 1), d, {}, 0);
    CHECK(r.train_mse == std::numeric_limits<double>::infinity());
    CHECK_FALSE(r.converged);
}

TEST_CASE("evaluate_candidate scores on tr-val") {
    const auto d = ratio_law_dataset(8, 40);
    const auto split = data::split(d, 3);
    const Candidate exact = evaluate_candidate(expr::parse("p0 * x0^p1 * x1^p2 * x2^p3 * x3^p4", 4), split, {}, 1);
    CHECK(exact.valid());
    CHECK(exact.fitness <= 0.0);
    CHECK(std::fabs(exact.fitness) <= 1e-6);

    const Candidate mean_only = evaluate_candidate(expr::parse("p0", 4), split, {}, 1);
    CHECK(mean_only.fitness == doctest::Approx(-1.0).epsilon(0.2));

    const Candidate nan = evaluate_candidate(expr::parse("log(neg(x0))", 4), split, {}, 1);
    CHECK_FALSE(nan.valid());
    CHECK(nan.fitness == kInvalidFitness);
}

TEST_CASE("degenerate tr-val variance yields an invalid candidate") {
    data::Dataset d = make_dataset(Matrix::from_rows({{1}, {2}, {3}, {4}, {5}, {6}}), {1, 1, 1, 1, 1, 1});
    const auto split = data::split(d, 0);
    const Candidate c = evaluate_candidate(expr::parse("p0*x0", 1), split, {}, 0);
    CHECK_FALSE(c.valid());
}
