#include "curvstep/harness/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

namespace curvstep::harness {

namespace {

[[noreturn]] void bad(const std::string& path, const std::string& what) { throw ConfigError(path + ": " + what); }

void check_keys(const Json& j, const std::string& path, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) bad(path, "expected an object");
    for (const auto& [key, _] : j.items())
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
            bad(path + "." + key, "unknown key");
}

template <class T>
T field(const Json& j, const char* key, T def, const std::string& path) {
    if (!j.contains(key)) return def;
    try {
        const Json& v = j.at(key);
        if constexpr (std::is_unsigned_v<T>) {
            if (!v.is_number_integer() || v.get<long long>() < 0) bad(path + "." + key, "expected a non-negative integer");
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!v.is_number()) bad(path + "." + key, "expected a number");
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) bad(path + "." + key, "expected a string");
        }
        return v.get<T>();
    } catch (const nlohmann::json::exception& e) {
        bad(path + "." + key, e.what());
    }
}

std::vector<std::size_t> permutation(Rng& rng, std::size_t n) {
    std::vector<std::size_t> p(n);
    std::iota(p.begin(), p.end(), 0);
    for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[static_cast<std::size_t>(rng.next_u64() % i)]);
    return p;
}

}  // namespace

const char* to_string(DatasetKind k) {
    switch (k) {
        case DatasetKind::synth_regression: return "synth_regression";
        case DatasetKind::synth_classification: return "synth_classification";
        case DatasetKind::idx_files: return "idx_files";
    }
    return "?";
}

RunConfig run_config_from_json(const Json& j) {
    check_keys(j, "config", {"dataset", "model", "method", "steps", "batch_size", "seed", "timing", "eval", "output"});
    RunConfig c;
    if (j.contains("dataset")) {
        const Json& d = j.at("dataset");
        const std::string p = "config.dataset";
        check_keys(d, p, {"kind", "n", "d", "classes", "noise_std", "separation", "seed", "train_images", "train_labels",
                          "test_images", "test_labels"});
        const std::string kind = field<std::string>(d, "kind", to_string(c.dataset.kind), p);
        bool found = false;
        for (auto k : {DatasetKind::synth_regression, DatasetKind::synth_classification, DatasetKind::idx_files})
            if (kind == to_string(k)) {
                c.dataset.kind = k;
                found = true;
            }
        if (!found) bad(p + ".kind", "unknown dataset kind '" + kind + "'");
        c.dataset.n = field(d, "n", c.dataset.n, p);
        c.dataset.d = field(d, "d", c.dataset.d, p);
        c.dataset.classes = field(d, "classes", c.dataset.classes, p);
        c.dataset.noise_std = field(d, "noise_std", c.dataset.noise_std, p);
        c.dataset.separation = field(d, "separation", c.dataset.separation, p);
        c.dataset.seed = field(d, "seed", c.dataset.seed, p);
        c.dataset.train_images = field(d, "train_images", c.dataset.train_images, p);
        c.dataset.train_labels = field(d, "train_labels", c.dataset.train_labels, p);
        c.dataset.test_images = field(d, "test_images", c.dataset.test_images, p);
        c.dataset.test_labels = field(d, "test_labels", c.dataset.test_labels, p);
    }
    if (j.contains("model")) {
        const Json& m = j.at("model");
        check_keys(m, "config.model", {"hidden", "activation"});
        if (m.contains("hidden")) {
            const Json& h = m.at("hidden");
            if (!h.is_array()) bad("config.model.hidden", "expected an array of widths");
            c.model.hidden.clear();
            for (const Json& w : h) {
                if (!w.is_number_integer() || w.get<long long>() < 1) bad("config.model.hidden", "widths must be integers >= 1");
                c.model.hidden.push_back(w.get<std::size_t>());
            }
        }
        const std::string act = field<std::string>(m, "activation", "relu", "config.model");
        if (act == "relu") c.model.activation = Activation::relu;
        else if (act == "tanh") c.model.activation = Activation::tanh;
        else bad("config.model.activation", "unknown activation '" + act + "'");
    }
    if (j.contains("method")) {
        const Json& m = j.at("method");
        check_keys(m, "config.method", {"preset", "overrides", "spec"});
        if (m.contains("spec")) {
            if (m.contains("preset") || m.contains("overrides"))
                bad("config.method", "give either 'spec' or 'preset' (+ 'overrides'), not both");
            c.method.spec = method_spec_from_json(m.at("spec"), "config.method.spec");
        } else {
            c.method.preset = field<std::string>(m, "preset", c.method.preset, "config.method");
            if (m.contains("overrides")) {
                if (!m.at("overrides").is_object()) bad("config.method.overrides", "expected an object");
                c.method.overrides = m.at("overrides");
            }
        }
    }
    c.steps = field(j, "steps", c.steps, "config");
    c.batch_size = field(j, "batch_size", c.batch_size, "config");
    c.seed = field(j, "seed", c.seed, "config");
    if (j.contains("timing")) {
        const Json& t = j.at("timing");
        check_keys(t, "config.timing", {"warmup_steps", "window"});
        c.timing.warmup_steps = field(t, "warmup_steps", c.timing.warmup_steps, "config.timing");
        c.timing.window = field(t, "window", c.timing.window, "config.timing");
    }
    if (j.contains("eval")) {
        const Json& e = j.at("eval");
        check_keys(e, "config.eval", {"every_k", "target_metric"});
        c.eval.every_k = field(e, "every_k", c.eval.every_k, "config.eval");
        if (e.contains("target_metric") && !e.at("target_metric").is_null())
            c.eval.target_metric = field(e, "target_metric", 0.0, "config.eval");
    }
    c.output = field(j, "output", c.output, "config");
    return c;
}

Json to_json(const RunConfig& c) {
    Json j;
    j["dataset"] = {{"kind", to_string(c.dataset.kind)},      {"n", c.dataset.n},
                    {"d", c.dataset.d},                        {"classes", c.dataset.classes},
                    {"noise_std", c.dataset.noise_std},        {"separation", c.dataset.separation},
                    {"seed", c.dataset.seed},                  {"train_images", c.dataset.train_images},
                    {"train_labels", c.dataset.train_labels},  {"test_images", c.dataset.test_images},
                    {"test_labels", c.dataset.test_labels}};
    j["model"] = {{"hidden", c.model.hidden}, {"activation", to_string(c.model.activation)}};
    if (c.method.spec)
        j["method"] = {{"spec", curvstep::to_json(*c.method.spec)}};
    else
        j["method"] = {{"preset", c.method.preset}, {"overrides", c.method.overrides}};
    j["steps"] = c.steps;
    j["batch_size"] = c.batch_size;
    j["seed"] = c.seed;
    j["timing"] = {{"warmup_steps", c.timing.warmup_steps}, {"window", c.timing.window}};
    j["eval"] = {{"every_k", c.eval.every_k},
                 {"target_metric", c.eval.target_metric ? Json(*c.eval.target_metric) : Json(nullptr)}};
    j["output"] = c.output;
    return j;
}

void validate(const RunConfig& c) {
    if (c.timing.warmup_steps < 1) bad("config.timing.warmup_steps", "must be >= 1");
    if (c.timing.window < 1) bad("config.timing.window", "must be >= 1");
    if (c.steps < 1) bad("config.steps", "must be >= 1");
    if (c.batch_size < 1) bad("config.batch_size", "must be >= 1");
    const auto& d = c.dataset;
    if (d.kind == DatasetKind::idx_files) {
        if (d.train_images.empty() || d.train_labels.empty() || d.test_images.empty() || d.test_labels.empty())
            bad("config.dataset", "idx_files needs train_images, train_labels, test_images, test_labels");
    } else {
        if (d.n < 10 || d.d < 1) bad("config.dataset", "need n >= 10 and d >= 1");
        if (d.kind == DatasetKind::synth_classification && d.classes < 2) bad("config.dataset.classes", "must be >= 2");
        if (c.batch_size > d.n - d.n / 10) bad("config.batch_size", "exceeds the training split size");
    }
    const MethodSpec spec = resolve_method_spec(c.method);
    const LossKind data_loss = d.kind == DatasetKind::synth_regression ? LossKind::mse : LossKind::ce;
    if (spec.curvature.loss != data_loss)
        bad("config.method", std::string("method loss '") + curvstep::to_string(spec.curvature.loss) +
                                 "' does not match dataset loss '" + curvstep::to_string(data_loss) + "'");
}

Dataset build_dataset(const DatasetConfig& c) {
    switch (c.kind) {
        case DatasetKind::synth_regression: return gen_regression(c.n, c.d, c.noise_std, c.seed);
        case DatasetKind::synth_classification: return gen_classification(c.n, c.d, c.classes, c.separation, c.seed);
        case DatasetKind::idx_files:
            return load_idx_dataset(c.train_images, c.train_labels, c.test_images, c.test_labels);
    }
    throw ConfigError("config.dataset.kind: unsupported");
}

Model build_model(const ModelConfig& c, const Dataset& data) {
    return Model(data.input_dim(), c.hidden, data.output_dim(), c.activation);
}

MethodSpec resolve_method_spec(const MethodConfig& c) {
    if (c.spec) return *c.spec;
    try {
        return preset_with_overrides(c.preset, c.overrides);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config.method.preset: ") + e.what());
    }
}

double median(std::vector<double> v) { return percentile(std::move(v), 0.5); }

double percentile(std::vector<double> v, double q) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

TimingSummary summarize_timing(const std::vector<double>& step_ms, std::size_t warmup_steps, std::size_t window) {
    CURVSTEP_REQUIRE(window >= 1, "summarize_timing: window must be >= 1");
    TimingSummary s;
    s.first_timed_step = warmup_steps;
    if (step_ms.size() <= warmup_steps) {
        s.median_ms = s.mean_ms = s.std_ms = s.p90_ms = std::numeric_limits<double>::quiet_NaN();
        return s;
    }
    s.timed_steps = step_ms.size() - warmup_steps;
    for (std::size_t a = warmup_steps; a < step_ms.size(); a += window) {
        const std::size_t b = std::min(a + window, step_ms.size());
        const double sum = std::accumulate(step_ms.begin() + static_cast<std::ptrdiff_t>(a),
                                           step_ms.begin() + static_cast<std::ptrdiff_t>(b), 0.0);
        s.window_means_ms.push_back(sum / static_cast<double>(b - a));
    }
    const auto& m = s.window_means_ms;
    s.median_ms = median(m);
    s.p90_ms = percentile(m, 0.9);
    s.mean_ms = std::accumulate(m.begin(), m.end(), 0.0) / static_cast<double>(m.size());
    double var = 0.0;
    for (double x : m) var += (x - s.mean_ms) * (x - s.mean_ms);
    s.std_ms = m.size() > 1 ? std::sqrt(var / static_cast<double>(m.size() - 1)) : 0.0;
    return s;
}

std::optional<double> time_to_target(const std::vector<EvalRow>& evals, double target, LossKind loss) {
    for (const EvalRow& e : evals) {
        const bool hit = loss == LossKind::ce ? e.test_metric >= target : e.test_metric <= target;
        if (hit) return e.elapsed_s;
    }
    return std::nullopt;
}

RunResult run_training(const RunConfig& config, const Dataset& data, const RunHooks& hooks) {
    validate(config);
    CURVSTEP_REQUIRE(config.batch_size <= data.train.size(), "run_training: batch_size exceeds training split");
    const Model model = build_model(config.model, data);
    const Method method = assemble_or_throw(resolve_method_spec(config.method), model);

    Rng root(config.seed);
    Rng init_rng = root.split();
    Rng order_rng = root.split();
    const std::uint64_t method_seed = root.next_u64();

    RunResult out;
    out.lane = method.plan().lane;
    ParamVector w = model.init_params(init_rng);
    MethodState state = init(method, w, method_seed);

    const std::size_t n = data.train.size();
    const std::size_t per_epoch = n / config.batch_size;
    const std::size_t epochs = (config.steps + per_epoch - 1) / per_epoch;
    std::vector<std::vector<std::size_t>> perms;
    perms.reserve(epochs);
    for (std::size_t e = 0; e < epochs; ++e) perms.push_back(permutation(order_rng, n));

    std::vector<double> step_ms;
    step_ms.reserve(config.steps);
    out.steps.reserve(config.steps);
    double elapsed_s = 0.0;
    std::vector<std::size_t> rows(config.batch_size);

    auto evaluate = [&](std::size_t done) {
        EvalRow r;
        r.step = done;
        r.elapsed_s = elapsed_s;
        r.train_loss = out.steps.empty() ? std::numeric_limits<double>::quiet_NaN() : out.steps.back().info.loss_before;
        r.test_loss = loss_value(model, w, data.full(data.test));
        r.test_metric = data.loss == LossKind::ce ? accuracy(model, w, data.test) : r.test_loss;
        out.evals.push_back(r);
    };

    for (std::size_t t = 0; t < config.steps; ++t) {
        const auto& perm = perms[t / per_epoch];
        const std::size_t off = (t % per_epoch) * config.batch_size;
        std::copy(perm.begin() + static_cast<std::ptrdiff_t>(off),
                  perm.begin() + static_cast<std::ptrdiff_t>(off + config.batch_size), rows.begin());
        const Batch batch = data.train_batch(rows);

        const auto t0 = std::chrono::steady_clock::now();
        if (hooks.in_timed_region) hooks.in_timed_region(t);
        StepResult r = step(method, w, batch, std::move(state));
        const auto t1 = std::chrono::steady_clock::now();

        const double ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
        elapsed_s += ms / 1000.0;
        step_ms.push_back(ms);
        w = std::move(r.w);
        state = std::move(r.state);
        out.steps.push_back({r.info, ms});
        if (config.eval.every_k > 0 && (t + 1) % config.eval.every_k == 0 && t + 1 < config.steps) evaluate(t + 1);
    }
    evaluate(config.steps);

    out.timing = summarize_timing(step_ms, config.timing.warmup_steps, config.timing.window);
    if (config.eval.target_metric) out.time_to_target_s = time_to_target(out.evals, *config.eval.target_metric, data.loss);
    out.final_metric = out.evals.back().test_metric;
    out.final_test_loss = out.evals.back().test_loss;
    out.w = std::move(w);
    return out;
}

RunResult run_training(const RunConfig& config) {
    validate(config);
    return run_training(config, build_dataset(config.dataset));
}

}  // namespace curvstep::harness
