#include "symreg/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include "symreg/error.hpp"
#include "symreg/rng.hpp"

namespace symreg::harness {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path resolve(const fs::path& p, const fs::path& base) { return p.is_absolute() ? p : base / p; }

void reject_unknown(const json& j, std::initializer_list<const char*> allowed, const std::string& what) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* k) { return it.key() == k; }))
            throw Error("unknown key '" + it.key() + "' in " + what);
    }
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double number_or_inf(const json& j) { return j.is_null() ? fit::kInfiniteError : j.get<double>(); }

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

json stats_json(const VarianceStats& s) {
    if (s.count == 0) return {{"count", 0}};
    return {{"count", s.count},           {"mean", number_or_null(s.mean)}, {"median", number_or_null(s.median)},
            {"q1", number_or_null(s.q1)}, {"q3", number_or_null(s.q3)},     {"iqr", number_or_null(s.iqr)},
            {"min", number_or_null(s.min)}, {"max", number_or_null(s.max)}};
}

double median_sorted(std::span<const double> v) {
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

json read_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open '" + path.string() + "'");
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw Error("malformed JSON in '" + path.string() + "': " + e.what());
    }
}

void write_text_atomic(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    const fs::path tmp = path.string() + ".part";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw Error("cannot write '" + path.string() + "'");
        out << text;
        if (!out) throw Error("failed writing '" + path.string() + "'");
    }
    fs::rename(tmp, path);
}

fs::path run_summary_path(const fs::path& trace) {
    std::string s = trace.string();
    const std::string suffix = ".trace.jsonl";
    return s.substr(0, s.size() - suffix.size()) + ".summary.json";
}

std::string relative_trace(const std::string& problem, search::Mode mode, std::size_t repeat) {
    return trace_path("", problem, mode, repeat).generic_string();
}

} // namespace

// ---------------------------------------------------------------------------

std::unique_ptr<generate::Generator> make_generator(const GeneratorSettings& settings, std::size_t arity,
                                                    std::uint64_t seed) {
    if (settings.kind == "mutation")
        return std::make_unique<generate::MutationGenerator>(arity, seed, settings.malformed_rate);
    if (settings.kind == "scripted") {
        if (settings.script.empty()) throw Error("scripted generator needs a script file");
        return generate::ScriptedGenerator::from_file(settings.script);
    }
    if (settings.kind == "remote") {
        if (settings.remote.model.empty()) throw Error("remote generator needs a model name");
        return std::make_unique<generate::RemoteChat>(settings.remote);
    }
    throw Error("unknown generator kind '" + settings.kind + "' (expected mutation, scripted or remote)");
}

GeneratorSettings generator_from_json(const json& j, const fs::path& base_dir) {
    if (!j.is_object()) throw Error("generator settings must be an object");
    reject_unknown(j, {"kind", "script", "malformed_rate", "base_url", "model", "timeout_seconds", "api_key_env"},
                   "generator settings");
    GeneratorSettings g;
    g.kind = j.value("kind", g.kind);
    if (j.contains("script")) g.script = resolve(j["script"].get<std::string>(), base_dir);
    g.malformed_rate = j.value("malformed_rate", g.malformed_rate);
    g.remote.base_url = j.value("base_url", g.remote.base_url);
    g.remote.model = j.value("model", g.remote.model);
    g.remote.timeout_seconds = j.value("timeout_seconds", g.remote.timeout_seconds);
    g.remote.api_key_env = j.value("api_key_env", g.remote.api_key_env);
    return g;
}

void SuiteConfig::validate() const {
    if (problems.empty()) throw Error("suite has no problems");
    if (modes.empty()) throw Error("suite has no modes");
    if (std::set<search::Mode>(modes.begin(), modes.end()).size() != modes.size())
        throw Error("suite lists a mode twice");
    if (repeats == 0) throw Error("repeats must be at least 1");
    if (workers == 0) throw Error("workers must be at least 1");
    if (generator.malformed_rate < 0 || generator.malformed_rate > 1)
        throw Error("malformed_rate must lie in [0, 1]");
    base.validate();
}

SuiteConfig suite_from_json(const json& j, const fs::path& base_dir) {
    if (!j.is_object()) throw Error("suite config must be an object");
    reject_unknown(j, {"problems", "modes", "repeats", "search", "generator", "output_dir", "workers"},
                   "suite config");
    SuiteConfig c;
    try {
        if (j.contains("search")) c.base = search::config_from_json(j["search"]);
        c.repeats = j.value("repeats", c.base.repeats);
        c.base.repeats = c.repeats;
        for (const auto& p : j.at("problems")) c.problems.push_back(resolve(p.get<std::string>(), base_dir));
        if (j.contains("modes")) {
            for (const auto& m : j["modes"]) c.modes.push_back(search::mode_from_name(m.get<std::string>()));
        } else {
            c.modes = {search::Mode::LlmSr, search::Mode::StatisticalHint, search::Mode::ProAug};
        }
        if (j.contains("generator")) c.generator = generator_from_json(j["generator"], base_dir);
        c.output_dir = resolve(j.value("output_dir", std::string("runs")), base_dir);
        c.workers = j.value("workers", c.workers);
    } catch (const json::exception& e) {
        throw Error(std::string("invalid suite config: ") + e.what());
    }
    c.validate();
    return c;
}

SuiteConfig load_suite_config(const fs::path& path) {
    const json j = read_json_file(path);
    try {
        return suite_from_json(j, path.parent_path());
    } catch (const Error& e) {
        throw Error(std::string(e.what()) + " (in '" + path.string() + "')");
    }
}

// ---------------------------------------------------------------------------

VarianceStats variance_stats(std::span<const double> values) {
    VarianceStats s;
    s.count = values.size();
    if (values.empty()) return s;
    std::vector<double> v(values.begin(), values.end());
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    s.min = v.front();
    s.max = v.back();
    s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(n);
    s.median = median_sorted(v);
    const std::size_t half = (n + 1) / 2;
    s.q1 = median_sorted(std::span<const double>(v).first(half));
    s.q3 = median_sorted(std::span<const double>(v).last(half));
    s.iqr = s.q3 - s.q1;
    return s;
}

VarianceStats log10_variance_stats(std::span<const double> values) {
    std::vector<double> logs;
    logs.reserve(values.size());
    for (double v : values) logs.push_back(std::log10(std::max(v, 1e-300)));
    return variance_stats(logs);
}

double win_rate(const Trajectories& a, const Trajectories& b, std::size_t t) {
    if (a.size() != b.size()) throw Error("win rate needs the same problems on both sides");
    if (a.empty()) throw Error("win rate over zero problems");
    double wins = 0;
    for (const auto& [problem, ta] : a) {
        auto it = b.find(problem);
        if (it == b.end()) throw Error("problem '" + problem + "' missing from one side of a win rate");
        const auto& tb = it->second;
        if (t >= ta.size() || t >= tb.size()) throw Error("trajectory shorter than requested iteration");
        if (ta[t] < tb[t]) wins += 1;
        else if (ta[t] == tb[t]) wins += 0.5;
    }
    return wins / static_cast<double>(a.size());
}

std::vector<double> win_rate_curve(const Trajectories& a, const Trajectories& b) {
    std::size_t len = std::numeric_limits<std::size_t>::max();
    for (const auto& [_, t] : a) len = std::min(len, t.size());
    for (const auto& [_, t] : b) len = std::min(len, t.size());
    if (a.empty()) len = 0;
    std::vector<double> out;
    for (std::size_t t = 0; t < len; ++t) out.push_back(win_rate(a, b, t));
    return out;
}

std::vector<double> average_trajectory(const std::vector<std::vector<double>>& repeats) {
    if (repeats.empty()) return {};
    std::size_t len = repeats.front().size();
    for (const auto& r : repeats) len = std::min(len, r.size());
    std::vector<double> out(len, 0.0);
    for (const auto& r : repeats)
        for (std::size_t t = 0; t < len; ++t) out[t] += r[t];
    for (double& v : out) v /= static_cast<double>(repeats.size());
    return out;
}

// ---------------------------------------------------------------------------

fs::path trace_path(const fs::path& out, const std::string& problem, search::Mode mode, std::size_t repeat) {
    return out / problem / std::string(search::name_of(mode)) / (std::to_string(repeat) + ".trace.jsonl");
}

RunEntry entry_from_trace(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open trace '" + path.string() + "'");
    RunEntry e;
    e.trace_path = path.string();
    const std::string fname = path.filename().string();
    // Suite traces are named <repeat>.trace.jsonl; anything else reads as repeat 0.
    const std::string stem = fname.substr(0, fname.find('.'));
    if (!stem.empty() && std::all_of(stem.begin(), stem.end(), [](unsigned char c) { return std::isdigit(c); }))
        e.repeat = std::stoul(stem);
    bool header = false, final = false;
    std::string line;
    std::size_t lineno = 0;
    try {
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            const json j = json::parse(line);
            const std::string type = j.at("type").get<std::string>();
            if (type == "header") {
                header = true;
                e.problem = j.at("problem").get<std::string>();
                e.group = j.value("group", std::string("default"));
                e.mode = search::mode_from_name(j.at("config").at("mode").get<std::string>());
                e.seed = j.at("config").at("seed").get<std::uint64_t>();
            } else if (type == "iteration") {
                e.trajectory.push_back(number_or_inf(j.at("best_nmse")));
            } else if (type == "final") {
                final = true;
                const auto& best = j.at("best");
                e.best_expression = best.at("expression").get<std::string>();
                e.final_val_nmse = best.at("valid").get<bool>() ? number_or_inf(best.at("val_nmse"))
                                                                : fit::kInfiniteError;
                const auto& tn = j.at("test_nmse");
                if (!tn.is_null()) e.test_nmse = tn.get<double>();
            }
        }
    } catch (const json::exception& ex) {
        throw Error("malformed trace '" + path.string() + "' at line " + std::to_string(lineno) + ": " + ex.what());
    } catch (const Error& ex) {
        throw Error("malformed trace '" + path.string() + "' at line " + std::to_string(lineno) + ": " + ex.what());
    }
    if (!header || !final) throw Error("incomplete trace '" + path.string() + "'");
    e.ok = true;
    return e;
}

namespace {

json run_json(const RunEntry& r) {
    return {{"problem", r.problem},
            {"group", r.group},
            {"mode", search::name_of(r.mode)},
            {"repeat", r.repeat},
            {"seed", r.seed},
            {"ok", r.ok},
            {"error", r.error},
            {"final_val_nmse", number_or_null(r.final_val_nmse)},
            {"test_nmse", r.test_nmse ? number_or_null(*r.test_nmse) : json(nullptr)},
            {"final_nmse", r.ok ? number_or_null(r.final_nmse()) : json(nullptr)},
            {"best_expression", r.best_expression},
            {"iterations", r.trajectory.size()},
            {"trace", r.trace_path}};
}

RunEntry failed_entry_from_json(const json& j) {
    RunEntry e;
    e.problem = j.at("problem").get<std::string>();
    e.group = j.at("group").get<std::string>();
    e.mode = search::mode_from_name(j.at("mode").get<std::string>());
    e.repeat = j.at("repeat").get<std::size_t>();
    e.seed = j.at("seed").get<std::uint64_t>();
    e.ok = false;
    e.error = j.at("error").get<std::string>();
    e.trace_path = j.at("trace").get<std::string>();
    return e;
}

json curve_json(const std::vector<double>& c) {
    json out = json::array();
    for (double v : c) out.push_back(number_or_null(v));
    return out;
}

} // namespace

json build_summary(const std::vector<RunEntry>& runs, const std::vector<std::string>& problems,
                   const std::vector<search::Mode>& modes, std::size_t repeats) {
    json j;
    j["problems"] = problems;
    json mode_names = json::array();
    for (auto m : modes) mode_names.push_back(search::name_of(m));
    j["modes"] = mode_names;
    j["repeats"] = repeats;

    json run_list = json::array();
    std::size_t failures = 0;
    for (const auto& r : runs) {
        run_list.push_back(run_json(r));
        if (!r.ok) ++failures;
    }
    j["runs"] = std::move(run_list);
    j["failures"] = failures;

    // (problem, mode) -> ok runs
    std::map<std::pair<std::string, search::Mode>, std::vector<const RunEntry*>> cells;
    std::map<std::string, std::string> group_of;
    for (const auto& r : runs) {
        group_of.emplace(r.problem, r.group);
        if (r.ok) cells[{r.problem, r.mode}].push_back(&r);
    }

    json aggregates = json::array();
    // group -> mode -> per-problem (mean, log10 median)
    std::map<std::string, std::map<search::Mode, std::vector<std::pair<double, double>>>> groups;
    for (const auto& p : problems) {
        for (auto m : modes) {
            std::vector<double> finals;
            std::size_t attempted = 0;
            for (const auto& r : runs)
                if (r.problem == p && r.mode == m) ++attempted;
            for (const RunEntry* r : cells[{p, m}]) finals.push_back(r->final_nmse());
            const auto lin = variance_stats(finals);
            const auto lg = log10_variance_stats(finals);
            const std::string group = group_of.count(p) ? group_of[p] : "default";
            aggregates.push_back({{"problem", p},
                                  {"group", group},
                                  {"mode", search::name_of(m)},
                                  {"runs", attempted},
                                  {"failures", attempted - finals.size()},
                                  {"final_nmse", stats_json(lin)},
                                  {"log10_final_nmse", stats_json(lg)}});
            if (!finals.empty()) groups[group][m].push_back({lin.mean, lg.median});
        }
    }
    j["aggregates"] = std::move(aggregates);

    json group_list = json::array();
    for (const auto& [g, by_mode] : groups) {
        for (auto m : modes) {
            auto it = by_mode.find(m);
            if (it == by_mode.end()) continue;
            double mean = 0, lmed = 0;
            for (const auto& [a, b] : it->second) {
                mean += a;
                lmed += b;
            }
            const double n = static_cast<double>(it->second.size());
            group_list.push_back({{"group", g},
                                  {"mode", search::name_of(m)},
                                  {"problems", it->second.size()},
                                  {"mean_final_nmse", number_or_null(mean / n)},
                                  {"mean_log10_median_final_nmse", number_or_null(lmed / n)}});
        }
    }
    j["groups"] = std::move(group_list);

    json wins = json::array();
    for (auto a : modes) {
        for (auto b : modes) {
            if (a == b) continue;
            Trajectories ta, tb;
            for (const auto& p : problems) {
                auto ca = cells.find({p, a});
                auto cb = cells.find({p, b});
                if (ca == cells.end() || cb == cells.end() || ca->second.empty() || cb->second.empty()) continue;
                std::vector<std::vector<double>> ra, rb;
                for (const RunEntry* r : ca->second) ra.push_back(r->trajectory);
                for (const RunEntry* r : cb->second) rb.push_back(r->trajectory);
                ta[p] = average_trajectory(ra);
                tb[p] = average_trajectory(rb);
            }
            json per_repeat = json::array();
            for (std::size_t rep = 0; rep < repeats; ++rep) {
                Trajectories pa, pb;
                for (const auto& p : problems) {
                    const RunEntry *ea = nullptr, *eb = nullptr;
                    for (const RunEntry* r : cells[{p, a}])
                        if (r->repeat == rep) ea = r;
                    for (const RunEntry* r : cells[{p, b}])
                        if (r->repeat == rep) eb = r;
                    if (ea && eb) {
                        pa[p] = ea->trajectory;
                        pb[p] = eb->trajectory;
                    }
                }
                per_repeat.push_back({{"repeat", rep},
                                      {"problems", pa.size()},
                                      {"curve", pa.empty() ? json::array() : curve_json(win_rate_curve(pa, pb))}});
            }
            const auto curve = ta.empty() ? std::vector<double>{} : win_rate_curve(ta, tb);
            wins.push_back({{"a", search::name_of(a)},
                            {"b", search::name_of(b)},
                            {"problems", ta.size()},
                            {"final", curve.empty() ? json(nullptr) : json(curve.back())},
                            {"curve", curve_json(curve)},
                            {"per_repeat", std::move(per_repeat)}});
        }
    }
    j["win_rates"] = std::move(wins);
    return j;
}

std::string trajectories_csv(const std::vector<RunEntry>& runs) {
    std::ostringstream out;
    out << "problem,mode,repeat,iteration,best_nmse\n";
    for (const auto& r : runs) {
        if (!r.ok) continue;
        for (std::size_t t = 0; t < r.trajectory.size(); ++t)
            out << r.problem << ',' << search::name_of(r.mode) << ',' << r.repeat << ',' << t << ','
                << format_number(r.trajectory[t]) << '\n';
    }
    return out.str();
}

SuiteReport run_suite(const SuiteConfig& config, std::ostream* log) {
    config.validate();

    std::vector<data::ProblemSpec> specs;
    std::vector<std::string> names;
    for (const auto& path : config.problems) {
        specs.push_back(data::load_problem_spec(path));
        names.push_back(specs.back().name);
    }
    if (std::set<std::string>(names.begin(), names.end()).size() != names.size())
        throw Error("two problems in the suite share a name");

    struct Job {
        std::size_t problem;
        search::Mode mode;
        std::size_t repeat;
    };
    std::vector<Job> jobs;
    for (std::size_t p = 0; p < specs.size(); ++p)
        for (auto m : config.modes)
            for (std::size_t r = 0; r < config.repeats; ++r) jobs.push_back({p, m, r});

    SuiteReport report;
    report.runs.resize(jobs.size());
    std::atomic<std::size_t> next{0};
    std::atomic<std::size_t> executed{0};
    std::mutex log_mutex;

    auto say = [&](const std::string& msg) {
        if (!log) return;
        std::lock_guard lock(log_mutex);
        *log << msg << '\n';
        log->flush();
    };

    auto work = [&]() {
        for (std::size_t idx; (idx = next.fetch_add(1)) < jobs.size();) {
            const Job& job = jobs[idx];
            const auto& spec = specs[job.problem];
            const fs::path tpath = trace_path(config.output_dir, spec.name, job.mode, job.repeat);
            const std::string label = spec.name + "/" + std::string(search::name_of(job.mode)) + "/" +
                                      std::to_string(job.repeat);
            RunEntry entry;
            entry.problem = spec.name;
            entry.group = spec.group;
            entry.mode = job.mode;
            entry.repeat = job.repeat;
            entry.seed = config.base.seed + job.repeat;
            bool resumed = false;
            try {
                if (fs::exists(tpath) && fs::exists(run_summary_path(tpath))) {
                    resumed = true;
                } else {
                    search::SearchConfig cfg = config.base;
                    cfg.mode = job.mode;
                    cfg.seed = entry.seed;
                    const data::Dataset train = search::load_training(spec);
                    auto gen = make_generator(config.generator, train.arity(),
                                              derive_seed(entry.seed, fnv1a(spec.name)));
                    search::TestLoader loader = [&]() -> std::optional<data::Dataset> {
                        if (!spec.test_path) return std::nullopt;
                        return data::load_csv(*spec.test_path);
                    };
                    const auto trace = search::run(cfg, spec, train, loader, *gen);
                    search::write_trace(trace, tpath);
                    write_text_atomic(run_summary_path(tpath), search::summary_json(trace).dump(2) + "\n");
                    executed.fetch_add(1);
                }
                RunEntry loaded = entry_from_trace(tpath);
                loaded.trace_path = relative_trace(spec.name, job.mode, job.repeat);
                if (loaded.problem != entry.problem || loaded.mode != entry.mode)
                    throw Error("trace '" + tpath.string() + "' belongs to a different run");
                entry = std::move(loaded);
                std::ostringstream msg;
                msg << "[" << (idx + 1) << "/" << jobs.size() << "] " << label << (resumed ? " resumed" : "")
                    << ": nmse " << format_number(entry.final_nmse()) << "  " << entry.best_expression;
                say(msg.str());
            } catch (const std::exception& ex) {
                entry.ok = false;
                entry.error = ex.what();
                entry.trace_path = relative_trace(spec.name, job.mode, job.repeat);
                say("[" + std::to_string(idx + 1) + "/" + std::to_string(jobs.size()) + "] " + label +
                    " failed: " + entry.error);
            }
            report.runs[idx] = std::move(entry);
        }
    };

    const std::size_t nthreads = std::min(config.workers, jobs.size());
    if (nthreads <= 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t i = 0; i < nthreads; ++i) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }

    report.executed = executed.load();
    report.summary = build_summary(report.runs, names, config.modes, config.repeats);
    fs::create_directories(config.output_dir);
    write_text_atomic(config.output_dir / "summary.json", report.summary.dump(2) + "\n");
    write_text_atomic(config.output_dir / "trajectories.csv", trajectories_csv(report.runs));
    return report;
}

std::string verify_suite(const fs::path& output_dir) {
    const json summary = read_json_file(output_dir / "summary.json");
    std::vector<std::string> problems;
    std::vector<search::Mode> modes;
    std::size_t repeats = 0;
    std::vector<RunEntry> runs;
    try {
        problems = summary.at("problems").get<std::vector<std::string>>();
        for (const auto& m : summary.at("modes")) modes.push_back(search::mode_from_name(m.get<std::string>()));
        repeats = summary.at("repeats").get<std::size_t>();
        for (const auto& r : summary.at("runs")) {
            if (!r.at("ok").get<bool>()) {
                runs.push_back(failed_entry_from_json(r));
                continue;
            }
            const std::string rel = r.at("trace").get<std::string>();
            RunEntry e = entry_from_trace(output_dir / rel);
            e.trace_path = rel;
            runs.push_back(std::move(e));
        }
    } catch (const json::exception& e) {
        return std::string("summary.json is malformed: ") + e.what();
    } catch (const Error& e) {
        return e.what();
    }
    if (runs.size() != problems.size() * modes.size() * repeats)
        return "summary lists " + std::to_string(runs.size()) + " runs, expected " +
               std::to_string(problems.size() * modes.size() * repeats);

    const json rebuilt = build_summary(runs, problems, modes, repeats);
    if (rebuilt == summary) {
        std::ifstream csv(output_dir / "trajectories.csv");
        std::stringstream ss;
        ss << csv.rdbuf();
        if (ss.str() != trajectories_csv(runs)) return "trajectories.csv does not match the traces";
        return {};
    }
    const json patch = json::diff(summary, rebuilt);
    const auto& op = patch.at(0);
    return "summary.json differs from the traces at " + op.at("path").get<std::string>();
}

} // namespace symreg::harness
