#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "curvstep/config.hpp"
#include "curvstep/harness/data.hpp"
#include "curvstep/method.hpp"

namespace curvstep::harness {

enum class DatasetKind { synth_regression, synth_classification, idx_files };
const char* to_string(DatasetKind k);

struct DatasetConfig {
    DatasetKind kind = DatasetKind::synth_classification;
    std::size_t n = 4000;
    std::size_t d = 32;
    std::size_t classes = 10;
    double noise_std = 0.1;   // synth_regression
    double separation = 5.0;  // synth_classification
    std::uint64_t seed = 1234;
    std::string train_images, train_labels, test_images, test_labels;  // idx_files
};

struct ModelConfig {
    std::vector<std::size_t> hidden = {64, 64};
    Activation activation = Activation::relu;
};

/// Either a preset plus JSON merge-patch overrides or a full spec.
struct MethodConfig {
    std::string preset = "sgd";
    Json overrides = Json::object();
    std::optional<MethodSpec> spec;
};

struct TimingConfig {
    std::size_t warmup_steps = 2;
    std::size_t window = 10;
};

/// every_k = 0 evaluates only after the last step. The target is an accuracy
/// floor for classification and a test-loss ceiling for regression.
struct EvalConfig {
    std::size_t every_k = 0;
    std::optional<double> target_metric;
};

struct RunConfig {
    DatasetConfig dataset;
    ModelConfig model;
    MethodConfig method;
    std::size_t steps = 100;
    std::size_t batch_size = 128;
    std::uint64_t seed = 0;
    TimingConfig timing;
    EvalConfig eval;
    std::string output = "out";
};

/// Throws ConfigError naming the offending field.
RunConfig run_config_from_json(const Json& j);
Json to_json(const RunConfig& c);
void validate(const RunConfig& c);

Dataset build_dataset(const DatasetConfig& c);
Model build_model(const ModelConfig& c, const Dataset& data);
MethodSpec resolve_method_spec(const MethodConfig& c);

struct TimingSummary {
    std::vector<double> window_means_ms;
    double median_ms = 0.0;
    double mean_ms = 0.0;
    double std_ms = 0.0;
    double p90_ms = 0.0;
    std::size_t timed_steps = 0;
    std::size_t first_timed_step = 0;
};

/// Post-warmup step times cut into consecutive windows; a trailing partial
/// window is kept.
TimingSummary summarize_timing(const std::vector<double>& step_ms, std::size_t warmup_steps, std::size_t window);

double median(std::vector<double> v);
/// Linear interpolation between order statistics.
double percentile(std::vector<double> v, double q);

struct StepRow {
    StepInfo info;
    double wall_ms = 0.0;
};

struct EvalRow {
    std::size_t step = 0;        // steps completed
    double elapsed_s = 0.0;      // cumulative step wall time
    double train_loss = 0.0;
    double test_loss = 0.0;
    double test_metric = 0.0;
};

struct RunResult {
    std::vector<StepRow> steps;
    std::vector<EvalRow> evals;
    TimingSummary timing;
    std::optional<double> time_to_target_s;
    double final_metric = 0.0;
    double final_test_loss = 0.0;
    ParamVector w;
    Lane lane = Lane::diag;
};

struct RunHooks {
    /// Runs inside the timed region right before each step call.
    std::function<void(std::size_t)> in_timed_region;
};

/// Training loop over precomputed epoch permutations. Only the step call is
/// timed.
RunResult run_training(const RunConfig& config, const Dataset& data, const RunHooks& hooks = {});
RunResult run_training(const RunConfig& config);

/// Seconds to the first eval at or past `target`; nullopt if never reached.
std::optional<double> time_to_target(const std::vector<EvalRow>& evals, double target, LossKind loss);

}  // namespace curvstep::harness
