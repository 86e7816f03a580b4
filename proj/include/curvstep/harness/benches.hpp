#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "curvstep/harness/output.hpp"
#include "curvstep/harness/training.hpp"

namespace curvstep::harness {

/// Runs fn(0..n-1) on worker threads, or in order when sequential.
void parallel_for(std::size_t n, bool sequential, const std::function<void(std::size_t)>& fn);

// ---------------------------------------------------------------------------
// Lane scaling

struct LaneBenchConfig {
    std::vector<std::size_t> widths = {32, 128, 512, 2048};
    std::vector<std::size_t> batches = {32, 128, 512, 2048};
    std::size_t fixed_batch = 128;  // width sweep
    std::size_t fixed_width = 128;  // batch sweep
    std::size_t hidden_layers = 3;
    std::size_t n_seeds = 5;
    std::size_t steps = 32;
    TimingConfig timing{2, 10};
    DatasetConfig dataset{DatasetKind::synth_regression, 8192, 128, 0, 0.1, 0.0, 1234, {}, {}, {}, {}};
    std::vector<std::string> presets = {"sgn_mse", "egn_mse_cg"};
    std::uint64_t seed = 0;
    bool sequential = true;
    std::string run_dir;  // per-run CSVs when non-empty
};

struct LanePoint {
    std::string lane;  // "param" or "row"
    std::string preset;
    std::size_t width = 0;
    std::size_t batch = 0;
    double step_time_median_ms = 0.0;  // median over seeds of per-seed medians
    std::size_t n_seeds = 0;
    std::vector<double> per_seed_median_ms;
};

std::vector<LanePoint> bench_lanes(const LaneBenchConfig& cfg);
CsvTable lanes_table(const std::vector<LanePoint>& points);

// ---------------------------------------------------------------------------
// Cadence overhead

struct CadenceBenchConfig {
    std::vector<int> ks = {-1, 10, 5, 2, 1};
    std::size_t input_dim = 512;
    std::size_t width = 1024;
    std::size_t hidden_layers = 2;
    std::size_t batch = 256;
    std::size_t timed_steps = 200;  // per k
    TimingConfig timing{2, 10};
    std::string preset = "newton_cg";
    Json overrides = Json::object();  // merge patch onto the preset
    std::uint64_t seed = 0;
};

struct CadenceRow {
    int k = -1;
    double median_ms = 0.0;
    double p90_ms = 0.0;
    double overhead_pct = 0.0;  // vs k = -1
    std::size_t timed_steps = 0;
};

/// All k settings advance in interleaved blocks of one window so slow drift
/// in machine speed hits every setting alike.
std::vector<CadenceRow> bench_cadence(const CadenceBenchConfig& cfg);
CsvTable cadence_table(const std::vector<CadenceRow>& rows);

// ---------------------------------------------------------------------------
// Module interactions

struct InteractionCell {
    std::string solver;   // sgn | sgd | adam
    std::string precond;  // none | sq_grad | --
    std::string damping;  // constant | trust_region | --
    std::string budget;   // light | heavy | --
};

struct InteractionBenchConfig {
    DatasetConfig dataset{DatasetKind::synth_classification, 6000, 32, 10, 0.1, 5.0, 1234, {}, {}, {}, {}};
    ModelConfig model{{64, 64}, Activation::relu};
    std::size_t steps = 300;
    std::size_t batch_size = 128;
    std::size_t eval_every = 10;
    double target = 0.85;
    std::vector<double> lrs = {1e-4, 1e-3, 1e-2, 1e-1, 1.0};
    std::size_t n_seeds = 5;
    std::uint64_t seed = 0;
    bool sequential = true;
    std::string run_dir;  // per-run CSVs when non-empty
};

/// The ten cells: sgd, adam, then sgn over precond x damping x budget.
std::vector<InteractionCell> interaction_grid();

/// Spec for a cell at learning rate lr.
MethodSpec interaction_spec(const InteractionCell& cell, double lr);

struct InteractionRow {
    InteractionCell cell;
    double lr_selected = 0.0;
    std::optional<double> time_to_target_s;  // median over seeds that reached it
    double final_acc = 0.0;                  // median over seeds
    std::size_t seeds_reached = 0;
};

std::vector<InteractionRow> bench_interactions(const InteractionBenchConfig& cfg);
CsvTable interactions_table(const std::vector<InteractionRow>& rows);

}  // namespace curvstep::harness
