#include "curvstep/harness/output.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#ifndef CURVSTEP_BUILD_ID
#define CURVSTEP_BUILD_ID "unknown"
#endif

namespace curvstep::harness {

std::string fmt(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    if (v == std::trunc(v) && std::fabs(v) < 1e15) return std::to_string(static_cast<long long>(v));
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

std::string to_csv(const CsvTable& t) {
    std::ostringstream os;
    auto line = [&os](const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) os << ',';
            const std::string& c = cells[i];
            if (c.find_first_of(",\"\n") != std::string::npos) {
                os << '"';
                for (char ch : c) os << (ch == '"' ? "\"\"" : std::string(1, ch));
                os << '"';
            } else {
                os << c;
            }
        }
        os << '\n';
    };
    line(t.header);
    for (const auto& r : t.rows) line(r);
    return os.str();
}

void write_csv(const std::string& path, const CsvTable& t) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << to_csv(t);
}

std::vector<std::string> run_csv_header() {
    std::vector<std::string> h{"row_type"};
    for (auto k : StepInfo::kKeys) h.emplace_back(k);
    for (auto k : {"wall_ms", "elapsed_s", "eval_step", "train_loss", "test_loss", "test_metric"}) h.emplace_back(k);
    return h;
}

CsvTable run_table(const RunResult& r) {
    CsvTable t{run_csv_header(), {}};
    const std::string na = "nan";
    double elapsed = 0.0;
    for (const StepRow& s : r.steps) {
        elapsed += s.wall_ms / 1000.0;
        std::vector<std::string> row{"step"};
        for (auto k : StepInfo::kKeys) row.push_back(fmt(s.info.get(k)));
        row.push_back(fmt(s.wall_ms));
        row.push_back(fmt(elapsed));
        row.insert(row.end(), {"-1", na, na, na});
        t.rows.push_back(std::move(row));
    }
    for (const EvalRow& e : r.evals) {
        std::vector<std::string> row{"eval"};
        for (auto k : StepInfo::kKeys) row.push_back(StepInfo::is_integer_key(k) ? "-1" : na);
        row.push_back(na);
        row.push_back(fmt(e.elapsed_s));
        row.push_back(fmt(static_cast<double>(e.step)));
        row.push_back(fmt(e.train_loss));
        row.push_back(fmt(e.test_loss));
        row.push_back(fmt(e.test_metric));
        t.rows.push_back(std::move(row));
    }
    return t;
}

CsvTable timing_table(const TimingSummary& s) {
    CsvTable t{{"window", "mean_ms"}, {}};
    for (std::size_t i = 0; i < s.window_means_ms.size(); ++i)
        t.rows.push_back({std::to_string(i), fmt(s.window_means_ms[i])});
    return t;
}

std::string config_hash(const Json& config) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : config.dump()) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string build_identifier() {
    return std::string("curvstep ") + CURVSTEP_BUILD_ID + " (" +
#if defined(__clang__)
           "clang " __clang_version__
#elif defined(__GNUC__)
           "gcc " __VERSION__
#else
           "unknown compiler"
#endif
           + ")";
}

void write_meta(const std::string& path, const Json& config, std::uint64_t seed, const Json& extra) {
    Json meta{{"config_hash", config_hash(config)}, {"seed", seed}, {"build", build_identifier()}, {"config", config}};
    for (const auto& [k, v] : extra.items()) meta[k] = v;
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << meta.dump(2) << '\n';
}

void ensure_dir(const std::string& path) { std::filesystem::create_directories(path); }

}  // namespace curvstep::harness
