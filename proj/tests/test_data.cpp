#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "symreg/data.hpp"
#include "symreg/error.hpp"
#include "symreg/rng.hpp"

using namespace symreg;
using namespace symreg::data;

namespace {

Dataset random_dataset(Rng& rng, std::size_t n, std::size_t d) {
    Dataset ds;
    for (std::size_t c = 0; c < d; ++c) ds.feature_names.push_back("x" + std::to_string(c));
    ds.features = Matrix(n, d);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < d; ++c) ds.features(r, c) = rng.uniform(-10, 10);
        ds.target.push_back(rng.normal());
    }
    return ds;
}

std::vector<std::vector<double>> row_multiset(const Dataset& d) {
    std::vector<std::vector<double>> rows;
    for (std::size_t r = 0; r < d.rows(); ++r) {
        auto row = std::vector<double>(d.features.row(r).begin(), d.features.row(r).end());
        row.push_back(d.target[r]);
        rows.push_back(std::move(row));
    }
    std::sort(rows.begin(), rows.end());
    return rows;
}

} // namespace

TEST_CASE("parse_csv basics") {
    const Dataset d = parse_csv("x0,y\n1,2\n2,4\n");
    CHECK(d.rows() == 2);
    CHECK(d.arity() == 1);
    CHECK(d.feature_names == std::vector<std::string>{"x0"});
    CHECK(d.target_name == "y");
    CHECK(d.target == std::vector<double>{2, 4});
    CHECK(d.features(1, 0) == 2.0);
}

TEST_CASE("parse_csv honours a named target column and scientific notation") {
    const Dataset d = parse_csv("target, a ,b\n1e3,2.5,-3E-2\n\n4,+5,6\n");
    CHECK(d.feature_names == std::vector<std::string>{"a", "b"});
    CHECK(d.target == std::vector<double>{1000, 4});
    CHECK(d.features(0, 1) == -0.03);
    CHECK(d.features(1, 0) == 5.0);
}

TEST_CASE("parse_csv errors name the offending cell") {
    try {
        parse_csv("x0,x1,y\n1,2,3\n4,abc,6\n", "case.csv");
        FAIL("expected an error");
    } catch (const DataError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("'abc'") != std::string::npos);
        CHECK(msg.find("row 2") != std::string::npos);
        CHECK(msg.find("column 2") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_csv("x0,y\n"), DataError);
    CHECK_THROWS_AS(parse_csv("x0,y\n1,nan\n"), DataError);
    CHECK_THROWS_AS(parse_csv("x0,y\n1,2,3\n"), DataError);
    CHECK_THROWS_AS(load_csv("/nonexistent/file.csv"), DataError);
}

TEST_CASE("load_csv reads a four-feature file") {
    std::filesystem::create_directories(SYMREG_TEST_TMP);
    const auto path = std::filesystem::path(SYMREG_TEST_TMP) / "four.csv";
    {
        std::ofstream out(path);
        out << "x_0,x_1,x_2,x_3,y\n-32.193,4.357,4.774,1.672,2.588\n-8.799,2.543,2.522,2.127,2.918\n";
    }
    const Dataset d = load_csv(path);
    CHECK(d.arity() == 4);
    CHECK(d.rows() == 2);
    write_csv(d, path);
    CHECK(load_csv(path) == d);
}

TEST_CASE("split cardinality, disjointness and determinism") {
    Rng rng(1);
    const Dataset d = random_dataset(rng, 10, 2);
    const SplitView a = split(d, 42, 0.8);
    CHECK(a.tr_tr.rows() == 8);
    CHECK(a.tr_val.rows() == 2);
    std::vector<std::size_t> all = a.tr_tr_rows;
    all.insert(all.end(), a.tr_val_rows.begin(), a.tr_val_rows.end());
    std::sort(all.begin(), all.end());
    CHECK(std::adjacent_find(all.begin(), all.end()) == all.end());
    CHECK(all.size() == 10);
    const SplitView b = split(d, 42, 0.8);
    CHECK(a.tr_tr_rows == b.tr_tr_rows);
    CHECK(a.tr_val == b.tr_val);
    CHECK(split(d, 43, 0.8).tr_tr_rows != a.tr_tr_rows);
}

TEST_CASE("split union equals the original row multiset") {
    Rng rng(99);
    int mismatches = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 5 + rng.index(60);
        const Dataset d = random_dataset(rng, n, 1 + rng.index(4));
        const double ratio = rng.uniform(0.3, 0.9);
        const SplitView v = split(d, rng.next(), ratio);
        auto joined = row_multiset(v.tr_tr);
        const auto val = row_multiset(v.tr_val);
        joined.insert(joined.end(), val.begin(), val.end());
        std::sort(joined.begin(), joined.end());
        if (joined != row_multiset(d)) ++mismatches;
        if (v.tr_tr.rows() != static_cast<std::size_t>(std::llround(ratio * n))) ++mismatches;
    }
    CHECK(mismatches == 0);
}

TEST_CASE("split rejects impossible requests") {
    Rng rng(3);
    CHECK_THROWS_AS(split(random_dataset(rng, 4, 1), 0, 0.8), DataError);
    CHECK_THROWS_AS(split(random_dataset(rng, 10, 1), 0, 1.0), DataError);
    CHECK_THROWS_AS(split(random_dataset(rng, 10, 1), 0, 0.99), DataError);
}

TEST_CASE("describe hand cases") {
    Dataset d;
    d.feature_names = {"c"};
    d.features = Matrix::from_rows({{5}, {5}, {5}});
    d.target = {1, 2, 3};
    const Summary s = describe(d);
    CHECK(s.target.mean == 2.0);
    CHECK(s.target.min == 1.0);
    CHECK(s.target.max == 3.0);
    CHECK(s.target.std == doctest::Approx(std::sqrt(2.0 / 3.0)).epsilon(1e-15));
    CHECK(s.features[0].std == 0.0);
    CHECK(s.features[0].mean == 5.0);
}

TEST_CASE("describe agrees with a two-pass reference") {
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 1 + rng.index(500);
        std::vector<double> col(n);
        const double shift = rng.uniform(-1e4, 1e4);
        for (double& v : col) v = shift + rng.normal() * rng.uniform(0.1, 100);
        long double sum = 0;
        for (double v : col) sum += v;
        const long double mean = sum / n;
        long double ss = 0;
        for (double v : col) ss += (v - mean) * (v - mean);
        const double ref_std = static_cast<double>(std::sqrt(ss / n));
        const ColumnSummary s = summarize(col);
        CHECK(std::fabs(s.mean - static_cast<double>(mean)) <= 1e-12 * std::fabs(static_cast<double>(mean)));
        CHECK(std::fabs(s.std - ref_std) <= 1e-12 * std::max(ref_std, 1e-300) + 1e-300);
    }
}

TEST_CASE("describe is invariant under row permutation") {
    Rng rng(11);
    const Dataset d = random_dataset(rng, 40, 3);
    std::vector<std::size_t> order(40);
    for (std::size_t i = 0; i < 40; ++i) order[i] = i;
    rng.shuffle(order);
    const Summary a = describe(d), b = describe(d.subset(order));
    for (std::size_t c = 0; c < 3; ++c) {
        CHECK(a.features[c].mean == doctest::Approx(b.features[c].mean).epsilon(1e-13));
        CHECK(a.features[c].std == doctest::Approx(b.features[c].std).epsilon(1e-13));
        CHECK(a.features[c].min == b.features[c].min);
        CHECK(a.features[c].max == b.features[c].max);
    }
}

TEST_CASE("problem spec loading resolves relative paths") {
    std::filesystem::create_directories(SYMREG_TEST_TMP);
    const auto dir = std::filesystem::path(SYMREG_TEST_TMP) / "problem";
    std::filesystem::create_directories(dir);
    {
        std::ofstream(dir / "train.csv") << "R,T\n1,1\n4,8\n9,27\n";
        std::ofstream(dir / "problem.json")
            << R"({"name":"kepler","variable_descriptions":["orbit radius"],)"
            << R"("target_description":"period","data_path":"train.csv","ground_truth":"x0^1.5"})";
    }
    const ProblemSpec spec = load_problem_spec(dir / "problem.json");
    CHECK(spec.name == "kepler");
    CHECK(spec.data_path == dir / "train.csv");
    CHECK_FALSE(spec.test_path.has_value());
    const Problem p = load_problem(spec);
    CHECK(p.train.rows() == 3);
    CHECK_THROWS_AS(load_problem_spec(dir / "missing.json"), DataError);
}
