#include "symreg/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "symreg/error.hpp"
#include "symreg/rng.hpp"

namespace symreg::data {

Dataset Dataset::subset(const std::vector<std::size_t>& rows) const {
    Dataset out;
    out.feature_names = feature_names;
    out.target_name = target_name;
    out.features = Matrix(rows.size(), arity());
    out.target.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto src = features.row(rows[i]);
        std::copy(src.begin(), src.end(), out.features.row(i).begin());
        out.target.push_back(target[rows[i]]);
    }
    return out;
}

void check(const Dataset& d) {
    if (d.rows() == 0) throw DataError("dataset is empty");
    if (d.arity() == 0) throw DataError("dataset has no feature columns");
    if (d.features.rows() != d.rows()) throw DataError("feature and target row counts differ");
    if (d.feature_names.size() != d.arity())
        throw DataError("feature_names length does not match feature count");
    for (double v : d.features.data())
        if (!std::isfinite(v)) throw DataError("non-finite feature value");
    for (double v : d.target)
        if (!std::isfinite(v)) throw DataError("non-finite target value");
}

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split_line(std::string_view line) {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        cells.push_back(trim(line.substr(start, comma == std::string_view::npos ? line.npos : comma - start)));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return cells;
}

} // namespace

Dataset parse_csv(const std::string& text, const std::string& source) {
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        ++line_no;
        if (line_no == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
        if (trim(line).empty()) continue;
        for (auto cell : split_line(line)) header.emplace_back(cell);
        break;
    }
    if (header.size() < 2) throw DataError(source + ": header must name at least one feature and a target");

    std::size_t target_col = header.size() - 1;
    for (std::size_t c = 0; c < header.size(); ++c)
        if (header[c] == "target") target_col = c;

    Dataset d;
    d.target_name = header[target_col];
    for (std::size_t c = 0; c < header.size(); ++c)
        if (c != target_col) d.feature_names.push_back(header[c]);

    std::vector<double> values;
    std::size_t data_row = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        ++data_row;
        const auto cells = split_line(line);
        if (cells.size() != header.size())
            throw DataError(source + ": row " + std::to_string(data_row) + " (line " +
                            std::to_string(line_no) + ") has " + std::to_string(cells.size()) +
                            " cells, expected " + std::to_string(header.size()));
        for (std::size_t c = 0; c < cells.size(); ++c) {
            double v = 0.0;
            const auto cell = cells[c];
            const char* begin = cell.data();
            if (!cell.empty() && cell.front() == '+') ++begin;
            auto [ptr, ec] = std::from_chars(begin, cell.data() + cell.size(), v);
            if (cell.empty() || ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(v))
                throw DataError(source + ": non-numeric cell '" + std::string(cell) + "' at row " +
                                std::to_string(data_row) + ", column " + std::to_string(c + 1) +
                                " ('" + header[c] + "')");
            if (c == target_col)
                d.target.push_back(v);
            else
                values.push_back(v);
        }
    }
    if (d.target.empty()) throw DataError(source + ": dataset has no data rows");
    d.features = Matrix(d.target.size(), header.size() - 1, std::move(values));
    check(d);
    return d;
}

Dataset load_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open data file '" + path.string() + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_csv(buf.str(), path.string());
}

void write_csv(const Dataset& d, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write '" + path.string() + "'");
    for (const auto& n : d.feature_names) out << n << ',';
    out << d.target_name << '\n';
    char buf[64];
    auto put = [&](double v) {
        auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
        out.write(buf, ptr - buf);
    };
    for (std::size_t r = 0; r < d.rows(); ++r) {
        for (double v : d.features.row(r)) {
            put(v);
            out << ',';
        }
        put(d.target[r]);
        out << '\n';
    }
}

SplitView split(const Dataset& d, std::uint64_t seed, double ratio) {
    if (!(ratio > 0.0 && ratio < 1.0)) throw DataError("split ratio must lie in (0, 1)");
    const std::size_t n = d.rows();
    const auto n_trtr = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));
    if (n < 5 || n_trtr == 0 || n_trtr >= n)
        throw DataError("too few rows (" + std::to_string(n) +
                        ") to leave both tr-tr and tr-val non-empty");
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(derive_seed(seed, 0x5117u));
    rng.shuffle(order);

    SplitView v;
    v.split_seed = seed;
    v.split_ratio = ratio;
    v.tr_tr_rows.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_trtr));
    v.tr_val_rows.assign(order.begin() + static_cast<std::ptrdiff_t>(n_trtr), order.end());
    v.tr_tr = d.subset(v.tr_tr_rows);
    v.tr_val = d.subset(v.tr_val_rows);
    return v;
}

ColumnSummary summarize(std::span<const double> values, std::string name) {
    ColumnSummary s;
    s.name = std::move(name);
    if (values.empty()) return s;
    // Welford update.
    double mean = 0.0, m2 = 0.0;
    double lo = values.front(), hi = values.front();
    std::size_t k = 0;
    for (double v : values) {
        ++k;
        const double delta = v - mean;
        mean += delta / static_cast<double>(k);
        m2 += delta * (v - mean);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    s.mean = mean;
    s.std = std::sqrt(std::max(0.0, m2 / static_cast<double>(k)));
    s.min = lo;
    s.max = hi;
    return s;
}

Summary describe(const Dataset& d) {
    Summary out;
    for (std::size_t c = 0; c < d.arity(); ++c) {
        const auto col = d.features.column(c);
        out.features.push_back(summarize(col, d.feature_names[c]));
    }
    out.target = summarize(d.target, d.target_name);
    return out;
}

ProblemSpec load_problem_spec(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open problem file '" + path.string() + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("malformed problem file '" + path.string() + "': " + e.what());
    }
    const auto base = path.parent_path();
    auto resolve = [&](const std::string& p) {
        std::filesystem::path fp(p);
        return fp.is_absolute() ? fp : base / fp;
    };
    try {
        ProblemSpec s;
        s.name = j.at("name").get<std::string>();
        s.group = j.value("group", std::string("default"));
        s.variable_descriptions = j.value("variable_descriptions", std::vector<std::string>{});
        s.target_description = j.value("target_description", std::string{});
        s.instructions = j.value("instructions", std::string{});
        s.data_path = resolve(j.at("data_path").get<std::string>());
        if (j.contains("test_path") && !j["test_path"].is_null())
            s.test_path = resolve(j["test_path"].get<std::string>());
        if (j.contains("ground_truth") && !j["ground_truth"].is_null())
            s.ground_truth = j["ground_truth"].get<std::string>();
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("invalid problem file '" + path.string() + "': " + e.what());
    }
}

Problem load_problem(const ProblemSpec& spec) {
    Problem p{spec, load_csv(spec.data_path), std::nullopt};
    if (spec.test_path) {
        p.test = load_csv(*spec.test_path);
        if (p.test->arity() != p.train.arity())
            throw DataError("test data arity differs from training data for problem '" + spec.name + "'");
    }
    if (!spec.variable_descriptions.empty() && spec.variable_descriptions.size() != p.train.arity())
        throw DataError("problem '" + spec.name + "' describes " +
                        std::to_string(spec.variable_descriptions.size()) + " variables but data has " +
                        std::to_string(p.train.arity()));
    return p;
}

} // namespace symreg::data
