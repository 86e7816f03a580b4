#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "curvstep/harness/training.hpp"

namespace curvstep::harness {

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

/// "nan" for NaN, plain integers when integral, otherwise %.12g.
std::string fmt(double v);

void write_csv(const std::string& path, const CsvTable& table);
std::string to_csv(const CsvTable& table);

/// Per-run metrics file: one "step" row per step and one "eval" row per
/// evaluation, sharing one fixed column set.
std::vector<std::string> run_csv_header();
CsvTable run_table(const RunResult& r);

CsvTable timing_table(const TimingSummary& s);

/// FNV-1a over the canonical JSON dump, as 16 hex digits.
std::string config_hash(const Json& config);
std::string build_identifier();

/// meta.json with config hash, seed, build identifier and the config itself.
void write_meta(const std::string& path, const Json& config, std::uint64_t seed, const Json& extra = Json::object());

void ensure_dir(const std::string& path);

}  // namespace curvstep::harness
