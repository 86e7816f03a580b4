// Acceptance checks. Prints one PASS/FAIL line per criterion; exit status is
// non-zero if any criterion fails. Pass criterion numbers as arguments to
// run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "curvstep/config.hpp"
#include "curvstep/estimators.hpp"
#include "curvstep/harness/benches.hpp"
#include "curvstep/harness/training.hpp"
#include "curvstep/method.hpp"
#include "oracles.hpp"

using namespace curvstep;
using namespace curvstep::harness;

namespace {

struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail << " [failed: " << what << "]";
        }
    }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string num(double v, int prec = 3) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    return buf;
}

Eigen::MatrixXd operator_matrix(const Matvec& op, const LayoutPtr& layout) {
    const auto d = static_cast<Eigen::Index>(layout->size());
    Eigen::MatrixXd M(d, d);
    ParamVector e(layout);
    for (Eigen::Index j = 0; j < d; ++j) {
        e[static_cast<std::size_t>(j)] = 1.0;
        M.col(j) = oracle::to_eigen(op(e));
        e[static_cast<std::size_t>(j)] = 0.0;
    }
    return M;
}

// ---------------------------------------------------------------------------

void c1_derivatives(Outcome& o) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(101);
    double worst_g = 0.0, worst_h = 0.0;
    std::size_t max_d = 0;
    for (int cfg = 0; cfg < 20; ++cfg) {
        const std::size_t in = 2 + rng.next_u64() % 30;
        const std::size_t depth = 1 + rng.next_u64() % 3;
        std::vector<std::size_t> hidden;
        for (std::size_t l = 0; l < depth; ++l) hidden.push_back(2 + rng.next_u64() % 40);
        const LossKind loss = cfg % 2 ? LossKind::ce : LossKind::mse;
        const std::size_t out = loss == LossKind::ce ? 2 + rng.next_u64() % 5 : 1 + rng.next_u64() % 3;
        const Activation act = cfg % 4 < 2 ? Activation::tanh : Activation::relu;
        Model m(in, hidden, out, act);
        if (m.param_count() > 5000) continue;
        max_d = std::max(max_d, m.param_count());
        ParamVector w = m.init_params(rng);
        const std::size_t bs = 1 + rng.next_u64() % 6;
        Batch b = oracle::random_batch(rng, m, bs, loss);
        // ReLU: redraw until no unit sits within reach of a kink.
        for (int tries = 0; act == Activation::relu && tries < 200 &&
                            oracle::min_abs_preactivation(m, w, b.inputs) < 1e-2;
             ++tries)
            b = oracle::random_batch(rng, m, bs, loss);
        const double eg = oracle::rel_err(loss_and_grad(m, w, b).grad, oracle::fd_grad(m, w, b, 1e-5));
        ParamVector v = normal_like(rng, w);
        const double eh = oracle::rel_err(hvp(m, w, b, v), oracle::fd_hvp(m, w, b, v, 1e-5));
        worst_g = std::max(worst_g, eg);
        worst_h = std::max(worst_h, eh);
    }
    const double secs = seconds_since(t0);
    o.detail << "20 MLPs (max d " << max_d << "): worst grad rel err " << num(worst_g) << ", worst HVP rel err "
             << num(worst_h) << ", " << num(secs) << " s";
    o.require(worst_g <= 1e-5, "grad tolerance 1e-5");
    o.require(worst_h <= 1e-4, "HVP tolerance 1e-4");
    o.require(secs < 60.0, "runtime < 1 min");
}

void c2_curvature(Outcome& o) {
    double worst = 0.0;
    int nets = 0;
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
        for (LossKind loss : {LossKind::mse, LossKind::ce}) {
            Rng rng(200 + seed);
            const std::size_t c = loss == LossKind::ce ? 2 + seed % 2 : 1 + seed % 3;
            Model m(3, {4, 3}, c, seed % 2 ? Activation::relu : Activation::tanh);
            ParamVector w = m.init_params(rng);
            Batch b = oracle::random_batch(rng, m, 2 + seed, loss);
            if (m.param_count() > 60 || b.size() > 8) continue;
            ++nets;
            const CurvatureKind gk = loss == LossKind::mse ? CurvatureKind::ggn_mse : CurvatureKind::ggn_ce;
            Snapshot sg = make_snapshot(gk, m, w, b);
            const Eigen::MatrixXd G = oracle::dense_ggn(m, w, b);
            const Eigen::MatrixXd Gop = operator_matrix(sg.op(), w.layout());
            worst = std::max(worst, (Gop - G).cwiseAbs().maxCoeff() / std::max(1.0, G.cwiseAbs().maxCoeff()));
            Snapshot sh = make_snapshot(CurvatureKind::hessian, m, w, b);
            const Eigen::MatrixXd H = oracle::dense_hessian(m, w, b);
            for (int r = 0; r < 3; ++r) {
                ParamVector v = normal_like(rng, w);
                worst = std::max(worst, oracle::rel_err(oracle::to_eigen(sh.matvec(v)), H * oracle::to_eigen(v)));
            }
        }
    }
    o.detail << nets << " tiny nets (d <= 60, b <= 8, c <= 3): worst deviation " << num(worst);
    o.require(worst <= 1e-8, "tolerance 1e-8");
}

void c3_lanes(Outcome& o) {
    double worst = 0.0;
    int solves = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        for (LossKind loss : {LossKind::mse, LossKind::ce}) {
            Rng rng(300 + seed);
            Model m(3, {5, 4}, 3, Activation::tanh);
            ParamVector w = m.init_params(rng);
            Batch b = oracle::random_batch(rng, m, 2 + seed % 5, loss);
            const CurvatureKind k = loss == LossKind::mse ? CurvatureKind::ggn_mse : CurvatureKind::ggn_ce;
            Snapshot s = make_snapshot(k, m, w, b);
            const Eigen::MatrixXd G = oracle::dense_ggn(m, w, b);
            const Eigen::VectorXd g = oracle::to_eigen(s.grad());
            const Eigen::MatrixXd gram = row_gram(s);
            for (double lam : {1e-3, 1e-1, 1.0, 10.0}) {
                Eigen::MatrixXd A = G;
                A.diagonal().array() += lam;
                const Eigen::VectorXd ref = A.ldlt().solve(g);
                const Eigen::VectorXd v = row_solve_cholesky(gram, s.row_rhs(), damping_to_row(lam, b.size()));
                worst = std::max(worst, oracle::rel_err(oracle::to_eigen(backproject(s, v)), ref));
                ++solves;
            }
        }
    }
    o.detail << solves << " solves over 10 nets x {ggn_mse, ggn_ce} x 4 lambdas: worst rel err " << num(worst);
    o.require(worst <= 1e-6, "tolerance 1e-6");
}

void c4_solvers(Outcome& o) {
    Rng rng(400);
    double worst = 0.0;
    std::size_t pcg_iters_max = 0, warm_iters_max = 0;
    for (Eigen::Index n : {4, 8, 16, 32, 48, 64}) {
        for (int rep = 0; rep < 3; ++rep) {
            auto lay = Layout::flat(static_cast<std::size_t>(n));
            const Eigen::MatrixXd A = oracle::random_spd(rng, n, 0.05);
            const Eigen::VectorXd g = oracle::random_matrix(rng, n, 1);
            const double lam = rng.uniform();
            Eigen::MatrixXd Al = A;
            Al.diagonal().array() += lam;
            const Eigen::VectorXd ref = Al.llt().solve(g);
            CgConfig cfg{1e-10, static_cast<std::size_t>(10 * n), 0, false, kDefaultDiagFloor};
            auto op = oracle::dense_op(A, lay);
            SolveResult cg = cg_solve(op, oracle::from_eigen(lay, g), lam, cfg);
            ParamVector dg(lay);
            for (Eigen::Index i = 0; i < n; ++i) dg[static_cast<std::size_t>(i)] = A(i, i);
            SolveResult pcg = cg_solve(op, oracle::from_eigen(lay, g), lam, cfg, dg);
            worst = std::max({worst, oracle::rel_err(oracle::to_eigen(cg.direction), ref),
                              oracle::rel_err(oracle::to_eigen(pcg.direction), ref)});
            o.require(cg.converged && pcg.converged, "CG/PCG converged");

            // Warm start from the exact solution.
            CgConfig warm = cfg;
            warm.warm_start = true;
            SolveResult ws = cg_solve(op, oracle::from_eigen(lay, g), lam, warm, std::nullopt,
                                      oracle::from_eigen(lay, ref));
            warm_iters_max = std::max(warm_iters_max, ws.iterations);

            // Diagonal system with its exact diagonal as preconditioner.
            ParamVector d(lay);
            for (auto& x : d.raw()) x = 0.1 + 10 * rng.uniform();
            Matvec dop = [d](const ParamVector& v) { return hadamard(d, v); };
            SolveResult one = cg_solve(dop, oracle::from_eigen(lay, g), lam, cfg, d);
            pcg_iters_max = std::max(pcg_iters_max, one.iterations);
        }
    }
    o.detail << "18 SPD systems n <= 64: worst CG/PCG rel err " << num(worst) << "; exact-diag PCG max iters "
             << pcg_iters_max << "; exact warm start max iters " << warm_iters_max;
    o.require(worst <= 1e-6, "dense agreement 1e-6");
    o.require(pcg_iters_max == 1, "PCG 1 iteration");
    o.require(warm_iters_max <= 1, "warm start <= 1 iteration");
}

void c5_estimators(Outcome& o) {
    // Exact sign-pattern average on 2x2 cases.
    Rng rng(500);
    double worst_exact = 0.0;
    auto lay2 = Layout::flat(2);
    for (int rep = 0; rep < 5; ++rep) {
        Eigen::MatrixXd H = oracle::random_matrix(rng, 2, 2);
        H = (H + H.transpose()).eval();
        ParamVector probe;
        Matvec op = [&](const ParamVector& z) {
            probe = z;
            return oracle::from_eigen(lay2, H * oracle::to_eigen(z));
        };
        std::map<std::pair<int, int>, ParamVector> seen;
        Rng r(rep);
        for (int i = 0; i < 500 && seen.size() < 4; ++i) {
            ParamVector d = hutchinson_diag(op, r, lay2, 1);
            seen[{static_cast<int>(probe[0]), static_cast<int>(probe[1])}] = d;
        }
        if (seen.size() != 4) {
            o.require(false, "all four sign patterns drawn");
            return;
        }
        ParamVector sum(lay2);
        for (auto& [k, d] : seen) sum += d;
        worst_exact = std::max({worst_exact, std::abs(sum[0] / 4 - H(0, 0)), std::abs(sum[1] / 4 - H(1, 1))});
    }

    // Statistical checks on a fixed dense 10 x 10 matrix.
    auto lay10 = Layout::flat(10);
    Rng mr(501);
    const Eigen::MatrixXd A = oracle::random_spd(mr, 10, 0.5);
    Rng pr(502);
    const ParamVector dg = hutchinson_diag(oracle::dense_op(A, lay10), pr, lay10, 10000);
    double diag_dev = 0.0;
    for (Eigen::Index i = 0; i < 10; ++i)
        diag_dev = std::max(diag_dev, std::abs(dg[static_cast<std::size_t>(i)] - A(i, i)) / A(i, i));
    const double tr = hutchinson_trace(oracle::dense_op(A, lay10), pr, lay10, 10000);
    const double tr_dev = std::abs(tr - A.trace()) / A.trace();

    // GNB against the dense GGN diagonal.
    Model m(3, {4}, 3, Activation::tanh);
    Rng gr(503);
    ParamVector w = m.init_params(gr);
    Batch b = oracle::random_batch(gr, m, 4, LossKind::ce);
    const Eigen::VectorXd ref = oracle::dense_ggn(m, w, b).diagonal();
    const double gnb_dev = oracle::rel_err(oracle::to_eigen(gnb_diag(m, w, b, gr, 10000)), ref);

    o.detail << "2x2 sign-pattern error " << num(worst_exact) << "; 1e4-probe diag dev " << num(diag_dev)
             << ", trace dev " << num(tr_dev) << "; GNB vs dense GGN diag " << num(gnb_dev);
    o.require(worst_exact <= 1e-15, "exact unbiasedness on 2x2");
    o.require(diag_dev <= 0.05 && tr_dev <= 0.05, "diag/trace within 5%");
    o.require(gnb_dev <= 0.10, "GNB within 10%");
}

void c6_trust_region(Outcome& o) {
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(600 + seed);
        // A linear model under MSE is a convex quadratic in its parameters.
        Model m(2 + seed % 6, {}, 1 + seed % 3);
        ParamVector w = m.init_params(rng);
        Batch b = oracle::random_batch(rng, m, 40, LossKind::mse);
        MethodSpec s = preset_spec("newton_cg");
        s.damping.lam0 = 0.0;
        s.solver.cg = CgConfig{1e-12, 500, 0, false, kDefaultDiagFloor};
        s.chain.links = {Link::scale(-1.0)};
        s.telemetry.rho_every_k = Cadence{1};
        Method meth = assemble_or_throw(s, m);
        StepResult r = step(meth, w, b, init(meth, w, seed));
        worst = std::max(worst, std::abs(r.info.rho - 1.0));
    }

    // Adversarial rho streams through the damping controller.
    Rng rng(610);
    double lam_lo = 1e300, lam_hi = 0.0, rho_max = 0.0;
    const std::vector<std::function<double(int)>> streams = {
        [](int) { return 1e9; },
        [](int) { return -1e9; },
        [](int t) { return t % 2 ? 1e12 : -1e12; },
        [&](int) { return rng.normal() * 1e6; },
        [&](int) { return rng.uniform() < 0.9 ? 0.99 : -50.0; },
    };
    for (const auto& gen : streams) {
        for (double lam0 : {1e-12, 1.0, 1e6}) {
            DampingState st = DampingState::trust_region(lam0);
            for (int t = 0; t < 2000; ++t) {
                // Loss changes chosen so the raw ratio equals gen(t).
                RhoBundle rho = make_rho(0.0, -gen(t) * 1e-3, -1e-3, 0.0, st.tr.rho_clip);
                rho_max = std::max(rho_max, std::abs(rho.rho));
                st = damping_update(st, rho, static_cast<std::size_t>(t));
                lam_lo = std::min(lam_lo, st.lam);
                lam_hi = std::max(lam_hi, st.lam);
            }
        }
    }
    o.detail << "exact Newton on 10 random convex quadratics: max |rho - 1| " << num(worst) << "; adversarial streams: lambda in ["
             << num(lam_lo) << ", " << num(lam_hi) << "], max |rho| " << num(rho_max);
    o.require(worst <= 1e-6, "rho = 1 +- 1e-6");
    o.require(lam_lo >= 1e-12 && lam_hi <= 1e6, "lambda within [1e-12, 1e6]");
    o.require(rho_max <= 5.0, "|rho| <= 5");
}

void c7_step_contract(Outcome& o) {
    int violations_snap = 0, violations_lane = 0, violations_rho = 0, violations_det = 0, violations_keys = 0;
    double worst_rho = 0.0;
    for (const auto& name : preset_names()) {
        MethodSpec spec = preset_spec(name);
        const LossKind loss = spec.curvature.loss;
        Model m(6, {10}, loss == LossKind::ce ? 3 : 2, Activation::tanh);
        spec.telemetry.rho_every_k = Cadence{3};
        if (spec.curvature.kind != CurvatureKind::none) {
            spec.telemetry.trace_every_k = Cadence{4};
            spec.telemetry.top_eig_every_k = Cadence{7};
        }
        Method meth = assemble_or_throw(spec, m);
        auto run = [&](bool check) {
            Rng data(700), init_rng(701);
            ParamVector w = m.init_params(init_rng);
            MethodState st = init(meth, w, 702);
            std::vector<double> traj;
            for (std::size_t t = 0; t < 200; ++t) {
                Batch b = oracle::random_batch(data, m, 8, loss);
                reset_snapshot_count();
                StepResult r = step(meth, w, b, st);
                if (check) {
                    if (snapshot_count() != 1) ++violations_snap;
                    if (last_executed_lane() != meth.plan().lane) ++violations_lane;
                    if (meth.plan().schema.size() != StepInfo::kKeys.size()) ++violations_keys;
                    if (t % 3 == 0 && r.info.step_status == 0) {
                        const double la = loss_value(m, r.w, b);
                        const double dev = std::abs(la - r.info.loss_after) / std::max(1.0, std::abs(la));
                        // Rebuild rho outside the executor from the applied update.
                        double rho_dev = 0.0;
                        if (spec.curvature.kind != CurvatureKind::none) {
                            Snapshot s = make_snapshot(spec.curvature.kind, m, w, b);
                            const RhoBundle rb = compute_rho(s, r.w - w, la, spec.damping.tr.rho_clip);
                            if (std::isnan(rb.rho) != std::isnan(r.info.rho))
                                rho_dev = 1.0;
                            else if (!std::isnan(rb.rho))
                                rho_dev = std::abs(rb.rho - r.info.rho) / std::max(1.0, std::abs(rb.rho));
                        }
                        worst_rho = std::max({worst_rho, dev, rho_dev});
                        if (dev > 1e-12 || rho_dev > 1e-12) ++violations_rho;
                    } else if (!std::isnan(r.info.loss_after) || !std::isnan(r.info.rho)) {
                        ++violations_rho;
                    }
                }
                w = r.w;
                st = r.state;
                traj.insert(traj.end(), w.raw().begin(), w.raw().end());
            }
            return traj;
        };
        const auto a = run(true);
        const auto b = run(false);
        if (a.size() != b.size() || std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) != 0) ++violations_det;
    }
    o.detail << "13 presets x 200 steps: snapshot-count violations " << violations_snap << ", lane mismatches "
             << violations_lane << ", schema mismatches " << violations_keys << ", rho/loss_after violations "
             << violations_rho << " (worst dev " << num(worst_rho) << "), non-deterministic presets "
             << violations_det;
    o.require(violations_snap == 0, "one snapshot per step");
    o.require(violations_lane == 0, "lane matches plan");
    o.require(violations_keys == 0, "fixed key set");
    o.require(violations_rho == 0, "rho/loss_after recomputation 1e-12");
    o.require(violations_det == 0, "bitwise determinism");
}

void c8_gating(Outcome& o) {
    Model mse(4, {5}, 2), ce(4, {5}, 3);
    auto err = [](const MethodSpec& s, const Model& m) {
        auto r = assemble(s, m);
        return std::holds_alternative<AssemblyError>(r) ? std::get<AssemblyError>(r).message : std::string();
    };
    struct Case {
        std::string label;
        MethodSpec spec;
        const Model* model;
        std::string expect;
    };
    std::vector<Case> cases;
    {
        MethodSpec s = preset_spec("newton_cg");
        s.solver.kind = SolverKind::row_cholesky;
        cases.push_back({"hessian+row_cholesky", s, &mse,
                         "row solver 'row_cholesky' requires row primitives; curvature 'hessian' provides none"});
        s.solver.kind = SolverKind::row_cg;
        cases.push_back({"hessian+row_cg", s, &mse,
                         "row solver 'row_cg' requires row primitives; curvature 'hessian' provides none"});
    }
    {
        MethodSpec s = preset_spec("newton_cg");
        s.solver.kind = SolverKind::diag;
        cases.push_back({"diag without source", s, &mse,
                         "diag solver requires a diagonal source (a preconditioner or a diagonal estimator)"});
    }
    {
        MethodSpec s = preset_spec("sophia_g");
        s.curvature = {CurvatureKind::ggn_mse, LossKind::mse};
        cases.push_back({"gnb+mse", s, &mse, "gnb estimator requires cross-entropy loss; got 'mse'"});
    }
    {
        MethodSpec s = preset_spec("sgn_ce");
        s.damping.policy = DampingPolicy::trust_region;
        s.damping.tr.every_k = -1;
        cases.push_back({"trust_region without rho cadence", s, &ce,
                         "trust_region damping requires an enabled rho cadence (tr.every_k >= 1)"});
    }
    int bad = 0;
    for (const auto& c : cases) {
        // Stable: same message on repeated assembly.
        const std::string a = err(c.spec, *c.model), b = err(c.spec, *c.model);
        if (a != c.expect || a != b) {
            ++bad;
            o.detail << " [" << c.label << ": got '" << a << "']";
        }
    }
    int assembled = 0;
    for (const auto& name : preset_names()) {
        const Model& m = preset_spec(name).curvature.loss == LossKind::ce ? ce : mse;
        if (err(preset_spec(name), m).empty()) ++assembled;
    }
    o.detail << cases.size() << " rejection cases, " << bad << " mismatched; " << assembled << "/"
             << preset_names().size() << " presets assemble";
    o.require(bad == 0, "stable rejection messages");
    o.require(assembled == static_cast<int>(preset_names().size()), "all presets assemble");
}

void c9_cadence(Outcome& o) {
    const auto t0 = std::chrono::steady_clock::now();
    CadenceBenchConfig cfg;  // width 1024, depth 2, input 512, batch 256, k in {-1, 10, 5, 2, 1}
    cfg.timed_steps = 200;
    cfg.overrides = Json{{"solver", {{"cg", {{"maxiter", 2}, {"warm_start", false}}}}}};
    const auto rows = bench_cadence(cfg);
    const double secs = seconds_since(t0);
    std::map<int, CadenceRow> by_k;
    std::size_t timed = 0;
    for (const auto& r : rows) {
        by_k[r.k] = r;
        timed += r.timed_steps;
    }
    for (const auto& r : rows)
        o.detail << "k=" << r.k << " " << num(r.median_ms, 4) << " ms (+" << num(r.overhead_pct, 3) << "%); ";
    o.detail << timed << " timed steps, " << num(secs) << " s";
    o.require(by_k.size() == 5, "five cadence settings");
    if (by_k.size() != 5) return;
    o.require(by_k[-1].median_ms <= by_k[10].median_ms && by_k[10].median_ms <= by_k[5].median_ms &&
                  by_k[5].median_ms <= by_k[1].median_ms,
              "ordering -1 <= 10 <= 5 <= 1");
    o.require(by_k[1].overhead_pct >= 10.0, "overhead(k=1) >= 10%");
    o.require(timed >= 1000, ">= 1000 timed steps");
    o.require(secs < 600.0, "runtime < 10 min");
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += std::log(x[i]);
        my += std::log(y[i]);
    }
    mx /= static_cast<double>(x.size());
    my /= static_cast<double>(x.size());
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (std::log(x[i]) - mx) * (std::log(y[i]) - my);
        sxx += (std::log(x[i]) - mx) * (std::log(x[i]) - mx);
    }
    return sxy / sxx;
}

void c10_lane_scaling(Outcome& o) {
    const auto t0 = std::chrono::steady_clock::now();
    LaneBenchConfig cfg;  // widths/batches {32,128,512,2048}, Appendix-style regression workload
    cfg.n_seeds = 3;
    cfg.steps = 22;
    cfg.timing = TimingConfig{2, 10};
    const auto pts = bench_lanes(cfg);
    const double secs = seconds_since(t0);
    std::map<std::string, std::map<std::size_t, double>> width_sweep;
    for (const auto& p : pts)
        if (p.batch == cfg.fixed_batch) width_sweep[p.lane][p.width] = p.step_time_median_ms;
    const auto& par = width_sweep["param"];
    const auto& row = width_sweep["row"];
    if (par.size() != cfg.widths.size() || row.size() != cfg.widths.size()) {
        o.require(false, "complete width sweep for both lanes");
        return;
    }
    std::vector<double> xs, yp, yr;
    for (std::size_t wdt : cfg.widths) {
        xs.push_back(static_cast<double>(wdt));
        yp.push_back(par.at(wdt));
        yr.push_back(row.at(wdt));
    }
    const double gp = yp.back() / yp.front(), gr = yr.back() / yr.front();
    const double sp = loglog_slope(xs, yp), sr = loglog_slope(xs, yr);
    o.detail << "batch " << cfg.fixed_batch << ": param " << num(yp.front()) << " -> " << num(yp.back()) << " ms (x"
             << num(gp) << ", log-log slope " << num(sp) << "), row " << num(yr.front()) << " -> " << num(yr.back())
             << " ms (x" << num(gr) << ", slope " << num(sr) << "); " << pts.size() << " points, " << num(secs) << " s";
    o.require(gp > gr && sp > sr, "param lane grows faster with width");
    o.require(sp > 1.0, "param lane growth is superlinear");
    o.require(yr.back() < yp.back(), "row lane faster at width 2048, batch 128");
    o.require(secs < 1800.0, "runtime < 30 min");
}

void c11_interactions(Outcome& o) {
    const auto t0 = std::chrono::steady_clock::now();
    InteractionBenchConfig cfg;  // synth_classification, 10 classes, 300 steps, lr grid {1e-4 .. 1}
    cfg.n_seeds = 3;
    const auto rows = bench_interactions(cfg);
    const CsvTable t = interactions_table(rows);
    const std::vector<std::string> cols{"solver", "precond", "damping", "budget", "lr_selected", "time_to_target_s",
                                        "final_acc"};
    o.require(rows.size() == 10 && t.rows.size() == 10, "10 rows");
    o.require(t.header == cols, "columns");

    // One-toggle ablation: every SGN row has, for each module toggle, a
    // partner differing in that module only (checked on assembled plans).
    int bad_pairs = 0, pairs = 0;
    Model m(cfg.dataset.d, cfg.model.hidden, cfg.dataset.classes);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].cell.solver != "sgn") continue;
        for (std::size_t j = i + 1; j < rows.size(); ++j) {
            if (rows[j].cell.solver != "sgn") continue;
            const auto& a = rows[i].cell;
            const auto& b = rows[j].cell;
            const int diff = (a.precond != b.precond) + (a.damping != b.damping) + (a.budget != b.budget);
            if (diff != 1) continue;
            ++pairs;
            const auto d = plan_diff(assemble_or_throw(interaction_spec(a, 0.1), m).plan(),
                                     assemble_or_throw(interaction_spec(b, 0.1), m).plan());
            const std::string want = a.precond != b.precond ? "precond" : a.damping != b.damping ? "damping" : "solver_config";
            if (d != std::vector<std::string>{want}) ++bad_pairs;
        }
    }
    // The two first-order baselines share the plan and differ in the chain only.
    const auto fo = plan_diff(assemble_or_throw(interaction_spec(rows[0].cell, 0.1), m).plan(),
                              assemble_or_throw(interaction_spec(rows[1].cell, 0.1), m).plan());
    o.require(pairs == 12 && bad_pairs == 0, "one-toggle pairs");
    o.require(fo.empty(), "sgd/adam share the plan");

    int reached = 0;
    for (const auto& r : rows) {
        reached += r.time_to_target_s.has_value();
        o.detail << r.cell.solver << "/" << r.cell.precond << "/" << r.cell.damping << "/" << r.cell.budget << " acc "
                 << num(r.final_acc) << " ttt " << (r.time_to_target_s ? num(*r.time_to_target_s) : "--") << "; ";
    }
    o.detail << pairs << " one-toggle pairs, " << bad_pairs << " bad; " << reached << "/10 reached "
             << cfg.target << "; " << num(seconds_since(t0)) << " s";

    if (const char* dir = std::getenv("CURVSTEP_FASHION_MNIST_DIR")) {
        const std::string d = dir;
        InteractionBenchConfig fm = cfg;
        fm.dataset.kind = DatasetKind::idx_files;
        fm.dataset.train_images = d + "/train-images-idx3-ubyte";
        fm.dataset.train_labels = d + "/train-labels-idx1-ubyte";
        fm.dataset.test_images = d + "/t10k-images-idx3-ubyte";
        fm.dataset.test_labels = d + "/t10k-labels-idx1-ubyte";
        fm.steps = 10 * (60000 / fm.batch_size);
        fm.eval_every = 60000 / fm.batch_size;
        fm.n_seeds = 1;
        const auto fr = bench_interactions(fm);
        double worst = 1.0;
        for (const auto& r : fr) worst = std::min(worst, r.final_acc);
        o.detail << " Fashion-MNIST worst cell acc " << num(worst);
        o.require(worst >= 0.80, "Fashion-MNIST cells >= 80% in 10 epochs");
    } else {
        o.detail << " (Fashion-MNIST check skipped: CURVSTEP_FASHION_MNIST_DIR unset)";
    }
}

void c12_composability(Outcome& o) {
    const auto t0 = std::chrono::steady_clock::now();
    Model pm(32, {64, 64}, 10);
    Method n = make("sophia_n", pm), g = make("sophia_g", pm), h = make("sophia_h", pm);
    const auto dg = plan_diff(n.plan(), g.plan());
    const auto dh = plan_diff(n.plan(), h.plan());
    o.require(dg == std::vector<std::string>{"estimator"}, "sophia_n vs sophia_g differ in estimator only");
    o.require(dh == std::vector<std::string>{"curvature"}, "sophia_n vs sophia_h differ in curvature only");

    // Same budget and protocol for every method: 300 steps, 3 seeds, lr grid,
    // selection on median final test accuracy. Sophia cosine schedules are
    // fitted to the 300-step budget.
    RunConfig base;
    base.dataset = DatasetConfig{DatasetKind::synth_classification, 6000, 32, 10, 0.1, 5.0, 1234, {}, {}, {}, {}};
    base.model = ModelConfig{{64, 64}, Activation::relu};
    base.steps = 300;
    base.batch_size = 128;
    const Dataset data = build_dataset(base.dataset);
    const std::vector<double> lrs{1e-3, 3e-3, 1e-2, 3e-2, 1e-1};
    auto best = [&](const std::string& preset, double& lr_out) {
        double best_acc = -1.0;
        for (double lr : lrs) {
            std::vector<double> accs;
            for (std::uint64_t seed = 0; seed < 3; ++seed) {
                RunConfig c = base;
                c.seed = seed;
                c.method.preset = preset;
                c.method.overrides = Json{{"lr", lr}};
                if (preset.rfind("sophia", 0) == 0)
                    c.method.overrides["schedule"] = {{"warmup_steps", 15}, {"total_steps", 300}};
                accs.push_back(run_training(c, data).final_metric);
            }
            const double med = median(accs);
            if (med > best_acc) {
                best_acc = med;
                lr_out = lr;
            }
        }
        return best_acc;
    };
    double lr_ref = 0.0;
    const double ref = best("sgdm", lr_ref);
    o.detail << "plan_diff(n,g)={" << (dg.empty() ? "" : dg[0]) << "} plan_diff(n,h)={" << (dh.empty() ? "" : dh[0])
             << "}; sgdm acc " << num(ref) << " (lr " << num(lr_ref) << ")";
    for (const char* p : {"sophia_g", "sophia_h", "sophia_n"}) {
        double lr = 0.0;
        const double acc = best(p, lr);
        o.detail << "; " << p << " acc " << num(acc) << " (lr " << num(lr) << ", " << num(100 * acc / ref) << "% of sgdm)";
        o.require(acc >= 0.95 * ref, std::string(p) + " >= 95% of sgdm");
    }
    o.detail << "; " << num(seconds_since(t0)) << " s";
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria = {
        {"derivative correctness", c1_derivatives},
        {"curvature oracle equivalence", c2_curvature},
        {"lane equivalence", c3_lanes},
        {"solver correctness", c4_solvers},
        {"estimator correctness", c5_estimators},
        {"trust-region sanity", c6_trust_region},
        {"step-contract invariants", c7_step_contract},
        {"planner gating", c8_gating},
        {"cadence microbenchmark", c9_cadence},
        {"lane scaling", c10_lane_scaling},
        {"module interactions", c11_interactions},
        {"composability", c12_composability},
    };
    std::set<int> only;
    for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!only.empty() && !only.count(id)) continue;
        Outcome o;
        try {
            criteria[i].second(o);
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail << " [exception: " << e.what() << "]";
        }
        failed += !o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << " " << id << " " << criteria[i].first << ": " << o.detail.str()
                  << std::endl;
    }
    return failed ? 1 : 0;
}
