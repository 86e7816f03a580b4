// curvstep command-line harness: train, bench-lanes, bench-cadence,
// bench-interactions, datagen.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "curvstep/harness/benches.hpp"

using namespace curvstep;
using namespace curvstep::harness;

namespace {

struct Common {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out;
    bool sequential = false;
    std::vector<std::string> sets;  // json.pointer=value
};

Json read_json(const std::string& path) {
    if (path.empty()) return Json::object();
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file " + path);
    try {
        return Json::parse(f);
    } catch (const Json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

/// --set /a/b=value; value parsed as JSON, else taken as a string.
void apply_sets(Json& doc, const std::vector<std::string>& sets) {
    for (const std::string& s : sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos || s.empty() || s[0] != '/')
            throw ConfigError("--set expects /json/pointer=value, got '" + s + "'");
        Json value;
        try {
            value = Json::parse(s.substr(eq + 1));
        } catch (const Json::parse_error&) {
            value = s.substr(eq + 1);
        }
        doc[Json::json_pointer(s.substr(0, eq))] = value;
    }
}

void add_common(CLI::App* app, Common& c) {
    app->add_option("--config", c.config_path, "JSON config file");
    app->add_option("--seed", c.seed, "Root seed (overrides the config)");
    app->add_option("--out", c.out, "Output directory (overrides the config)");
    app->add_flag("--sequential", c.sequential, "Run sweep points one at a time");
    app->add_option("--set", c.sets, "Override any config field: /json/pointer=value")->take_all();
}

template <class T>
T get_or(const Json& j, const char* key, T def) {
    return j.contains(key) ? j.at(key).get<T>() : def;
}

void check_bench_keys(const Json& j, const std::string& name, std::initializer_list<const char*> allowed) {
    for (const auto& [k, _] : j.items())
        if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) { return k == a; }) == allowed.end())
            throw ConfigError(name + "." + k + ": unknown key");
}

DatasetConfig dataset_from(const Json& j, DatasetConfig def) {
    RunConfig rc;
    rc.dataset = def;
    Json base = to_json(rc);
    base["dataset"].merge_patch(j);
    return run_config_from_json(Json{{"dataset", base["dataset"]}}).dataset;
}

std::string out_dir(const Common& c, const Json& doc, const std::string& fallback) {
    if (!c.out.empty()) return c.out;
    return get_or<std::string>(doc, "output", fallback);
}

int cmd_train(const Common& c, const std::string& preset, std::optional<double> lr, std::optional<std::size_t> steps,
              std::optional<std::size_t> batch) {
    Json doc = read_json(c.config_path);
    apply_sets(doc, c.sets);
    RunConfig rc = run_config_from_json(doc);
    if (!preset.empty()) {
        rc.method.spec.reset();
        rc.method.preset = preset;
    }
    if (lr) {
        if (rc.method.spec) throw ConfigError("--lr needs a preset method, not a full spec");
        rc.method.overrides["lr"] = *lr;
    }
    if (steps) rc.steps = *steps;
    if (batch) rc.batch_size = *batch;
    if (c.seed) rc.seed = *c.seed;
    if (!c.out.empty()) rc.output = c.out;
    validate(rc);

    const RunResult r = run_training(rc);
    ensure_dir(rc.output);
    write_csv(rc.output + "/run.csv", run_table(r));
    write_csv(rc.output + "/timing.csv", timing_table(r.timing));
    CsvTable summary{{"method", "lane", "steps", "step_time_median_ms", "step_time_mean_ms", "step_time_std_ms",
                      "step_time_p90_ms", "time_to_target_s", "final_metric", "final_test_loss"},
                     {}};
    summary.rows.push_back({resolve_method_spec(rc.method).name, to_string(r.lane), std::to_string(rc.steps),
                            fmt(r.timing.median_ms), fmt(r.timing.mean_ms), fmt(r.timing.std_ms), fmt(r.timing.p90_ms),
                            r.time_to_target_s ? fmt(*r.time_to_target_s) : "--", fmt(r.final_metric),
                            fmt(r.final_test_loss)});
    write_csv(rc.output + "/summary.csv", summary);
    write_meta(rc.output + "/meta.json", to_json(rc), rc.seed);
    std::cout << to_csv(summary);
    return 0;
}

int cmd_bench_lanes(const Common& c) {
    Json doc = read_json(c.config_path);
    apply_sets(doc, c.sets);
    check_bench_keys(doc, "config",
                     {"widths", "batches", "fixed_batch", "fixed_width", "hidden_layers", "n_seeds", "steps", "timing",
                      "dataset", "presets", "seed", "output"});
    LaneBenchConfig cfg;
    cfg.widths = get_or(doc, "widths", cfg.widths);
    cfg.batches = get_or(doc, "batches", cfg.batches);
    cfg.fixed_batch = get_or(doc, "fixed_batch", cfg.fixed_batch);
    cfg.fixed_width = get_or(doc, "fixed_width", cfg.fixed_width);
    cfg.hidden_layers = get_or(doc, "hidden_layers", cfg.hidden_layers);
    cfg.n_seeds = get_or(doc, "n_seeds", cfg.n_seeds);
    cfg.steps = get_or(doc, "steps", cfg.steps);
    if (doc.contains("timing")) {
        cfg.timing.warmup_steps = get_or(doc["timing"], "warmup_steps", cfg.timing.warmup_steps);
        cfg.timing.window = get_or(doc["timing"], "window", cfg.timing.window);
    }
    if (doc.contains("dataset")) cfg.dataset = dataset_from(doc["dataset"], cfg.dataset);
    cfg.presets = get_or(doc, "presets", cfg.presets);
    cfg.seed = c.seed ? *c.seed : get_or<std::uint64_t>(doc, "seed", cfg.seed);
    cfg.sequential = c.sequential;
    const std::string out = out_dir(c, doc, "out/lanes");
    ensure_dir(out + "/runs");
    cfg.run_dir = out + "/runs";

    const auto points = bench_lanes(cfg);
    const CsvTable t = lanes_table(points);
    write_csv(out + "/bench_lanes.csv", t);
    write_meta(out + "/meta.json", doc, cfg.seed, Json{{"bench", "bench-lanes"}});
    std::cout << to_csv(t);
    return 0;
}

int cmd_bench_cadence(const Common& c) {
    Json doc = read_json(c.config_path);
    apply_sets(doc, c.sets);
    check_bench_keys(doc, "config",
                     {"ks", "input_dim", "width", "hidden_layers", "batch", "timed_steps", "timing", "preset", "overrides",
                      "seed", "output"});
    CadenceBenchConfig cfg;
    cfg.ks = get_or(doc, "ks", cfg.ks);
    cfg.input_dim = get_or(doc, "input_dim", cfg.input_dim);
    cfg.width = get_or(doc, "width", cfg.width);
    cfg.hidden_layers = get_or(doc, "hidden_layers", cfg.hidden_layers);
    cfg.batch = get_or(doc, "batch", cfg.batch);
    cfg.timed_steps = get_or(doc, "timed_steps", cfg.timed_steps);
    if (doc.contains("timing")) {
        cfg.timing.warmup_steps = get_or(doc["timing"], "warmup_steps", cfg.timing.warmup_steps);
        cfg.timing.window = get_or(doc["timing"], "window", cfg.timing.window);
    }
    cfg.preset = get_or(doc, "preset", cfg.preset);
    if (doc.contains("overrides")) cfg.overrides = doc["overrides"];
    cfg.seed = c.seed ? *c.seed : get_or<std::uint64_t>(doc, "seed", cfg.seed);
    const std::string out = out_dir(c, doc, "out/cadence");
    ensure_dir(out);

    const auto rows = bench_cadence(cfg);
    const CsvTable t = cadence_table(rows);
    write_csv(out + "/bench_cadence.csv", t);
    write_meta(out + "/meta.json", doc, cfg.seed, Json{{"bench", "bench-cadence"}});
    std::cout << to_csv(t);
    return 0;
}

int cmd_bench_interactions(const Common& c) {
    Json doc = read_json(c.config_path);
    apply_sets(doc, c.sets);
    check_bench_keys(doc, "config",
                     {"dataset", "model", "steps", "batch_size", "eval_every", "target", "lrs", "n_seeds", "seed",
                      "output"});
    InteractionBenchConfig cfg;
    if (doc.contains("dataset")) cfg.dataset = dataset_from(doc["dataset"], cfg.dataset);
    if (doc.contains("model")) cfg.model = run_config_from_json(Json{{"model", doc["model"]}}).model;
    cfg.steps = get_or(doc, "steps", cfg.steps);
    cfg.batch_size = get_or(doc, "batch_size", cfg.batch_size);
    cfg.eval_every = get_or(doc, "eval_every", cfg.eval_every);
    cfg.target = get_or(doc, "target", cfg.target);
    cfg.lrs = get_or(doc, "lrs", cfg.lrs);
    cfg.n_seeds = get_or(doc, "n_seeds", cfg.n_seeds);
    cfg.seed = c.seed ? *c.seed : get_or<std::uint64_t>(doc, "seed", cfg.seed);
    cfg.sequential = c.sequential;
    const std::string out = out_dir(c, doc, "out/interactions");
    ensure_dir(out + "/runs");
    cfg.run_dir = out + "/runs";

    const auto rows = bench_interactions(cfg);
    const CsvTable t = interactions_table(rows);
    write_csv(out + "/bench_interactions.csv", t);
    write_meta(out + "/meta.json", doc, cfg.seed, Json{{"bench", "bench-interactions"}});
    std::cout << to_csv(t);
    return 0;
}

CsvTable split_table(const Dataset& d, const Split& s) {
    CsvTable t;
    for (Eigen::Index j = 0; j < s.x.cols(); ++j) t.header.push_back("x" + std::to_string(j));
    t.header.push_back(d.loss == LossKind::ce ? "label" : "y");
    for (Eigen::Index i = 0; i < s.x.rows(); ++i) {
        std::vector<std::string> row;
        for (Eigen::Index j = 0; j < s.x.cols(); ++j) row.push_back(fmt(s.x(i, j)));
        row.push_back(d.loss == LossKind::ce ? std::to_string(s.labels[static_cast<std::size_t>(i)]) : fmt(s.y(i, 0)));
        t.rows.push_back(std::move(row));
    }
    return t;
}

/// Min-max quantization of features to u8 pixels (rows = 1, cols = d).
void write_idx_split(const std::string& prefix, const Split& s, double lo, double hi) {
    std::vector<std::uint8_t> px, lab;
    for (Eigen::Index i = 0; i < s.x.rows(); ++i) {
        for (Eigen::Index j = 0; j < s.x.cols(); ++j) {
            const double u = hi > lo ? (s.x(i, j) - lo) / (hi - lo) : 0.0;
            px.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(u, 0.0, 1.0) * 255.0)));
        }
        lab.push_back(static_cast<std::uint8_t>(s.labels[static_cast<std::size_t>(i)]));
    }
    write_idx(prefix + "-images-idx3-ubyte", prefix + "-labels-idx1-ubyte", 1, static_cast<std::size_t>(s.x.cols()), px,
              lab);
}

int cmd_datagen(const Common& c, const std::string& format) {
    Json doc = read_json(c.config_path);
    apply_sets(doc, c.sets);
    const Json ds = doc.contains("dataset") ? doc["dataset"] : doc;
    DatasetConfig cfg = dataset_from(ds, DatasetConfig{});
    if (c.seed) cfg.seed = *c.seed;
    if (cfg.kind == DatasetKind::idx_files) throw ConfigError("config.dataset.kind: datagen needs a synthetic kind");
    const std::string out = out_dir(c, doc, "out/data");
    ensure_dir(out);
    const Dataset d = build_dataset(cfg);
    if (format == "csv") {
        write_csv(out + "/train.csv", split_table(d, d.train));
        write_csv(out + "/test.csv", split_table(d, d.test));
    } else if (format == "idx") {
        if (d.loss != LossKind::ce || d.num_classes > 256)
            throw ConfigError("datagen --format idx needs synth_classification with at most 256 classes");
        const double lo = std::min(d.train.x.minCoeff(), d.test.x.minCoeff());
        const double hi = std::max(d.train.x.maxCoeff(), d.test.x.maxCoeff());
        write_idx_split(out + "/train", d.train, lo, hi);
        write_idx_split(out + "/test", d.test, lo, hi);
    } else {
        throw ConfigError("--format must be csv or idx");
    }
    RunConfig rc;
    rc.dataset = cfg;
    write_meta(out + "/meta.json", to_json(rc)["dataset"], cfg.seed, Json{{"format", format}});
    std::cout << "wrote " << d.train.size() << " train and " << d.test.size() << " test examples to " << out << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"curvstep: composable second-order optimizer harness"};
    app.require_subcommand(1);

    Common train_c, lanes_c, cad_c, inter_c, gen_c;
    std::string preset, format = "csv";
    std::optional<double> lr;
    std::optional<std::size_t> steps, batch;

    auto* train = app.add_subcommand("train", "Run one training job");
    add_common(train, train_c);
    train->add_option("--preset", preset, "Method preset (replaces the config method)");
    train->add_option("--lr", lr, "Peak learning rate of the schedule link");
    train->add_option("--steps", steps, "Number of optimizer steps");
    train->add_option("--batch-size", batch, "Mini-batch size");

    auto* lanes = app.add_subcommand("bench-lanes", "Lane scaling sweep over widths and batches");
    add_common(lanes, lanes_c);
    auto* cad = app.add_subcommand("bench-cadence", "rho cadence overhead microbenchmark");
    add_common(cad, cad_c);
    auto* inter = app.add_subcommand("bench-interactions", "Module interaction grid");
    add_common(inter, inter_c);
    auto* gen = app.add_subcommand("datagen", "Write a synthetic dataset");
    add_common(gen, gen_c);
    gen->add_option("--format", format, "csv or idx")->check(CLI::IsMember({"csv", "idx"}));

    CLI11_PARSE(app, argc, argv);
    try {
        if (*train) return cmd_train(train_c, preset, lr, steps, batch);
        if (*lanes) return cmd_bench_lanes(lanes_c);
        if (*cad) return cmd_bench_cadence(cad_c);
        if (*inter) return cmd_bench_interactions(inter_c);
        if (*gen) return cmd_datagen(gen_c, format);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const AssemblyFailure& e) {
        std::cerr << "assembly error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
