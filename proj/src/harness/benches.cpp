#include "curvstep/harness/benches.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <iostream>
#include <mutex>
#include <new>
#include <numeric>
#include <thread>

namespace curvstep::harness {

void parallel_for(std::size_t n, bool sequential, const std::function<void(std::size_t)>& fn) {
    const std::size_t workers =
        sequential ? 1 : std::max<std::size_t>(1, std::min<std::size_t>(n, std::thread::hardware_concurrency()));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex mu;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(mu);
                    if (!error) error = std::current_exception();
                }
            }
        });
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

// ---------------------------------------------------------------------------
// Lanes

std::vector<LanePoint> bench_lanes(const LaneBenchConfig& cfg) {
    std::vector<std::pair<std::size_t, std::size_t>> points;  // (width, batch)
    for (std::size_t w : cfg.widths) points.emplace_back(w, cfg.fixed_batch);
    for (std::size_t b : cfg.batches)
        if (std::find(points.begin(), points.end(), std::make_pair(cfg.fixed_width, b)) == points.end())
            points.emplace_back(cfg.fixed_width, b);

    const Dataset data = build_dataset(cfg.dataset);
    Rng root(cfg.seed);
    std::vector<std::uint64_t> seeds(cfg.n_seeds);
    for (auto& s : seeds) s = root.next_u64();

    struct Job {
        std::size_t point, preset, seed;
    };
    std::vector<Job> jobs;
    for (std::size_t p = 0; p < points.size(); ++p)
        for (std::size_t m = 0; m < cfg.presets.size(); ++m)
            for (std::size_t s = 0; s < seeds.size(); ++s) jobs.push_back({p, m, s});

    std::vector<double> medians(jobs.size(), std::numeric_limits<double>::quiet_NaN());
    std::vector<std::string> lanes(cfg.presets.size());
    std::mutex mu;
    parallel_for(jobs.size(), cfg.sequential, [&](std::size_t j) {
        const Job& job = jobs[j];
        RunConfig rc;
        rc.dataset = cfg.dataset;
        rc.model.hidden.assign(cfg.hidden_layers, points[job.point].first);
        rc.method.preset = cfg.presets[job.preset];
        rc.steps = cfg.steps;
        rc.batch_size = points[job.point].second;
        rc.seed = seeds[job.seed];
        rc.timing = cfg.timing;
        try {
            const RunResult r = run_training(rc, data);
            if (!cfg.run_dir.empty())
                write_csv(cfg.run_dir + "/lanes_" + rc.method.preset + "_w" + std::to_string(points[job.point].first) +
                              "_b" + std::to_string(rc.batch_size) + "_s" + std::to_string(job.seed) + ".csv",
                          run_table(r));
            std::lock_guard lock(mu);
            medians[j] = r.timing.median_ms;
            lanes[job.preset] = to_string(r.lane);
        } catch (const std::bad_alloc&) {
            std::lock_guard lock(mu);
            std::cerr << "[skip] out of memory at width " << points[job.point].first << " batch "
                      << points[job.point].second << " preset " << cfg.presets[job.preset] << "\n";
        }
    });

    std::vector<LanePoint> out;
    for (std::size_t p = 0; p < points.size(); ++p)
        for (std::size_t m = 0; m < cfg.presets.size(); ++m) {
            LanePoint lp;
            lp.preset = cfg.presets[m];
            lp.lane = lanes[m];
            lp.width = points[p].first;
            lp.batch = points[p].second;
            for (std::size_t j = 0; j < jobs.size(); ++j)
                if (jobs[j].point == p && jobs[j].preset == m && !std::isnan(medians[j]))
                    lp.per_seed_median_ms.push_back(medians[j]);
            lp.n_seeds = lp.per_seed_median_ms.size();
            if (lp.n_seeds == 0) continue;
            lp.step_time_median_ms = median(lp.per_seed_median_ms);
            out.push_back(std::move(lp));
        }
    return out;
}

CsvTable lanes_table(const std::vector<LanePoint>& points) {
    CsvTable t{{"lane", "width", "batch", "step_time_median_ms", "n_seeds"}, {}};
    for (const auto& p : points)
        t.rows.push_back({p.lane, std::to_string(p.width), std::to_string(p.batch), fmt(p.step_time_median_ms),
                          std::to_string(p.n_seeds)});
    return t;
}

// ---------------------------------------------------------------------------
// Cadence

std::vector<CadenceRow> bench_cadence(const CadenceBenchConfig& cfg) {
    CURVSTEP_REQUIRE(!cfg.ks.empty() && cfg.timing.window >= 1 && cfg.timing.warmup_steps >= 1,
                     "bench_cadence: need ks, window >= 1, warmup >= 1");
    const std::size_t blocks = (cfg.timed_steps + cfg.timing.window - 1) / cfg.timing.window;
    const std::size_t n_batches = 8;
    const Dataset data = gen_regression(cfg.batch * n_batches * 10 / 9 + 10, cfg.input_dim, 0.1, cfg.seed + 17);
    std::vector<Batch> batches;
    for (std::size_t i = 0; i < n_batches; ++i) {
        std::vector<std::size_t> rows(cfg.batch);
        std::iota(rows.begin(), rows.end(), i * cfg.batch);
        batches.push_back(data.train_batch(rows));
    }
    const Model model(cfg.input_dim, std::vector<std::size_t>(cfg.hidden_layers, cfg.width), 1);
    Rng init_rng(cfg.seed);
    const ParamVector w0 = model.init_params(init_rng);

    struct Run {
        Method method;
        ParamVector w;
        MethodState state;
        std::size_t t = 0;
        std::vector<double> window_means;
    };
    std::vector<Run> runs;
    for (int k : cfg.ks) {
        MethodSpec spec = preset_with_overrides(cfg.preset, cfg.overrides);
        spec.telemetry.rho_every_k = Cadence{k};
        Method m = assemble_or_throw(spec, model);
        MethodState st = init(m, w0, cfg.seed);
        runs.push_back(Run{std::move(m), w0, std::move(st), 0, {}});
    }
    auto advance = [&](Run& r) {
        const Batch& b = batches[r.t % batches.size()];
        const auto t0 = std::chrono::steady_clock::now();
        StepResult res = step(r.method, r.w, b, std::move(r.state));
        const auto t1 = std::chrono::steady_clock::now();
        r.w = std::move(res.w);
        r.state = std::move(res.state);
        ++r.t;
        return std::chrono::duration<double, std::milli>(t1 - t0).count();
    };

    for (Run& r : runs)
        for (std::size_t i = 0; i < cfg.timing.warmup_steps; ++i) advance(r);
    for (std::size_t blk = 0; blk < blocks; ++blk) {
        const std::size_t len = std::min(cfg.timing.window, cfg.timed_steps - blk * cfg.timing.window);
        for (std::size_t j = 0; j < runs.size(); ++j) {
            Run& r = runs[(j + blk) % runs.size()];
            double sum = 0.0;
            for (std::size_t i = 0; i < len; ++i) sum += advance(r);
            r.window_means.push_back(sum / static_cast<double>(len));
        }
    }

    std::vector<CadenceRow> out;
    double base = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t i = 0; i < runs.size(); ++i) {
        CadenceRow row;
        row.k = cfg.ks[i];
        row.median_ms = median(runs[i].window_means);
        row.p90_ms = percentile(runs[i].window_means, 0.9);
        row.timed_steps = cfg.timed_steps;
        if (row.k == -1) base = row.median_ms;
        out.push_back(row);
    }
    for (auto& row : out) row.overhead_pct = 100.0 * (row.median_ms / base - 1.0);
    return out;
}

CsvTable cadence_table(const std::vector<CadenceRow>& rows) {
    CsvTable t{{"rho_every_k", "median_ms", "p90_ms", "overhead_pct", "timed_steps"}, {}};
    for (const auto& r : rows)
        t.rows.push_back(
            {std::to_string(r.k), fmt(r.median_ms), fmt(r.p90_ms), fmt(r.overhead_pct), std::to_string(r.timed_steps)});
    return t;
}

// ---------------------------------------------------------------------------
// Interactions

std::vector<InteractionCell> interaction_grid() {
    std::vector<InteractionCell> g{{"sgd", "--", "--", "--"}, {"adam", "--", "--", "--"}};
    for (const char* p : {"none", "sq_grad"})
        for (const char* d : {"constant", "trust_region"})
            for (const char* b : {"light", "heavy"}) g.push_back({"sgn", p, d, b});
    return g;
}

MethodSpec interaction_spec(const InteractionCell& cell, double lr) {
    if (cell.solver != "sgn") return preset_with_overrides(cell.solver, Json{{"lr", lr}});
    Json o{{"lr", lr}, {"name", "sgn_ce/" + cell.precond + "/" + cell.damping + "/" + cell.budget}};
    if (cell.budget == "light")
        o["solver"] = {{"cg", {{"maxiter", 3}, {"tol", 1e-3}, {"stabilise_every", 10}}}};
    else
        o["solver"] = {{"cg", {{"maxiter", 10}, {"tol", 1e-5}, {"stabilise_every", 5}}}};
    if (cell.precond == "sq_grad") o["precond"] = {{"kind", "sq_grad"}};
    o["damping"] = {{"policy", cell.damping}, {"lam0", 1.0}, {"tr", {{"every_k", 5}}}};
    return preset_with_overrides("sgn_ce", o);
}

std::vector<InteractionRow> bench_interactions(const InteractionBenchConfig& cfg) {
    const Dataset data = build_dataset(cfg.dataset);
    const auto grid = interaction_grid();
    Rng root(cfg.seed);
    std::vector<std::uint64_t> seeds(cfg.n_seeds);
    for (auto& s : seeds) s = root.next_u64();

    struct Job {
        std::size_t cell, lr, seed;
    };
    std::vector<Job> jobs;
    for (std::size_t c = 0; c < grid.size(); ++c)
        for (std::size_t l = 0; l < cfg.lrs.size(); ++l)
            for (std::size_t s = 0; s < seeds.size(); ++s) jobs.push_back({c, l, s});

    struct Outcome {
        double acc = 0.0;
        std::optional<double> ttt;
    };
    std::vector<Outcome> outcomes(jobs.size());
    parallel_for(jobs.size(), cfg.sequential, [&](std::size_t j) {
        const Job& job = jobs[j];
        RunConfig rc;
        rc.dataset = cfg.dataset;
        rc.model = cfg.model;
        rc.method.spec = interaction_spec(grid[job.cell], cfg.lrs[job.lr]);
        rc.steps = cfg.steps;
        rc.batch_size = cfg.batch_size;
        rc.seed = seeds[job.seed];
        rc.eval.every_k = cfg.eval_every;
        rc.eval.target_metric = cfg.target;
        const RunResult r = run_training(rc, data);
        if (!cfg.run_dir.empty())
            write_csv(cfg.run_dir + "/interactions_c" + std::to_string(job.cell) + "_lr" + std::to_string(job.lr) + "_s" +
                          std::to_string(job.seed) + ".csv",
                      run_table(r));
        outcomes[j] = {std::isnan(r.final_metric) ? 0.0 : r.final_metric, r.time_to_target_s};
    });

    std::vector<InteractionRow> out;
    for (std::size_t c = 0; c < grid.size(); ++c) {
        InteractionRow best;
        best.cell = grid[c];
        best.final_acc = -1.0;
        for (std::size_t l = 0; l < cfg.lrs.size(); ++l) {
            std::vector<double> accs, times;
            for (std::size_t j = 0; j < jobs.size(); ++j) {
                if (jobs[j].cell != c || jobs[j].lr != l) continue;
                accs.push_back(outcomes[j].acc);
                if (outcomes[j].ttt) times.push_back(*outcomes[j].ttt);
            }
            const double acc = median(accs);
            if (acc > best.final_acc) {
                best.final_acc = acc;
                best.lr_selected = cfg.lrs[l];
                best.seeds_reached = times.size();
                // A cell counts as reaching the target when most seeds do.
                best.time_to_target_s =
                    2 * times.size() > accs.size() ? std::optional<double>(median(times)) : std::nullopt;
            }
        }
        out.push_back(best);
    }
    return out;
}

CsvTable interactions_table(const std::vector<InteractionRow>& rows) {
    CsvTable t{{"solver", "precond", "damping", "budget", "lr_selected", "time_to_target_s", "final_acc"}, {}};
    for (const auto& r : rows)
        t.rows.push_back({r.cell.solver, r.cell.precond, r.cell.damping, r.cell.budget, fmt(r.lr_selected),
                          r.time_to_target_s ? fmt(*r.time_to_target_s) : "--", fmt(r.final_acc)});
    return t;
}

}  // namespace curvstep::harness
