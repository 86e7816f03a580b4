#include "curvstep/method.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "curvstep/estimators.hpp"

namespace curvstep {

const char* to_string(SolverKind k) {
    switch (k) {
        case SolverKind::identity: return "identity";
        case SolverKind::diag: return "diag";
        case SolverKind::cg: return "cg";
        case SolverKind::row_cholesky: return "row_cholesky";
        case SolverKind::row_cg: return "row_cg";
    }
    return "?";
}

const char* to_string(Lane l) {
    switch (l) {
        case Lane::diag: return "diag";
        case Lane::param: return "param";
        case Lane::row: return "row";
    }
    return "?";
}

const char* to_string(EstimatorKind k) { return k == EstimatorKind::hutchinson ? "hutchinson" : "gnb"; }

bool Gate::enabled() const {
    return std::any_of(any_of.begin(), any_of.end(), [](const Cadence& c) { return c.enabled(); });
}

bool Gate::fires(std::size_t t) const {
    return std::any_of(any_of.begin(), any_of.end(), [t](const Cadence& c) { return c.fires(t); });
}

std::vector<std::string> plan_diff(const Plan& a, const Plan& b) {
    std::vector<std::string> out;
    if (a.lane != b.lane || a.solver != b.solver) out.emplace_back("lane");
    if (a.curvature != b.curvature) out.emplace_back("curvature");
    if (a.solver_config != b.solver_config) out.emplace_back("solver_config");
    if (a.precond != b.precond) out.emplace_back("precond");
    if (a.damping != b.damping) out.emplace_back("damping");
    if (a.estimator != b.estimator) out.emplace_back("estimator");
    if (a.telemetry != b.telemetry) out.emplace_back("telemetry");
    return out;
}

namespace {

thread_local std::optional<Lane> g_last_lane;

Lane lane_for(SolverKind s) {
    switch (s) {
        case SolverKind::identity:
        case SolverKind::diag: return Lane::diag;
        case SolverKind::cg: return Lane::param;
        case SolverKind::row_cholesky:
        case SolverKind::row_cg: return Lane::row;
    }
    return Lane::diag;
}

std::optional<AssemblyError> validate(const MethodSpec& spec, const Model& model) {
    auto fail = [](std::string msg) { return std::optional<AssemblyError>(AssemblyError{std::move(msg)}); };
    const CurvatureKind kind = spec.curvature.kind;
    const SolverKind solver = spec.solver.kind;
    const bool row_solver = lane_for(solver) == Lane::row;

    if (!compatible(kind, spec.curvature.loss))
        return fail(std::string("curvature '") + to_string(kind) + "' is incompatible with loss '" +
                    to_string(spec.curvature.loss) + "'");
    if (spec.curvature.loss == LossKind::ce && model.output_dim() < 2)
        return fail("cross-entropy loss requires output_dim >= 2");
    if (row_solver && !has_row_primitives(kind))
        return fail(std::string("row solver '") + to_string(solver) + "' requires row primitives; curvature '" +
                    to_string(kind) + "' provides none");
    if (row_solver && spec.precond.kind != PrecondKind::none)
        return fail("row-space solvers do not accept a preconditioner");
    if (kind == CurvatureKind::none && solver != SolverKind::identity && solver != SolverKind::diag)
        return fail(std::string("solver '") + to_string(solver) + "' requires a curvature operator; curvature is 'none'");
    if (solver == SolverKind::diag && spec.precond.kind == PrecondKind::none)
        return fail("diag solver requires a diagonal source (a preconditioner or a diagonal estimator)");
    if (spec.estimator) {
        if (kind == CurvatureKind::none && spec.estimator->kind == EstimatorKind::hutchinson)
            return fail("hutchinson estimator requires a curvature operator; curvature is 'none'");
        if (spec.estimator->kind == EstimatorKind::gnb && spec.curvature.loss != LossKind::ce)
            return fail(std::string("gnb estimator requires cross-entropy loss; got '") +
                        to_string(spec.curvature.loss) + "'");
        if (!spec.estimator->every.enabled()) return fail("estimator cadence must be enabled (every_k >= 1)");
        if (spec.estimator->n_samples < 1) return fail("estimator needs at least one probe/sample");
        if (spec.precond.kind != PrecondKind::diag_ema)
            return fail("diagonal estimator output needs a diag_ema preconditioner to accumulate into");
    }
    if (spec.damping.policy == DampingPolicy::trust_region && spec.damping.tr.every_k < 1)
        return fail("trust_region damping requires an enabled rho cadence (tr.every_k >= 1)");
    if (spec.damping.policy == DampingPolicy::trust_region && kind == CurvatureKind::none)
        return fail("trust_region damping requires a curvature operator for the predicted decrease");
    if (spec.damping.lam0 < 0.0 || !std::isfinite(spec.damping.lam0)) return fail("damping lam0 must be finite and >= 0");
    if (spec.damping.policy == DampingPolicy::trust_region) {
        const auto& tr = spec.damping.tr;
        if (!(tr.lam_min > 0.0 && tr.lam_min <= tr.lam_max)) return fail("trust_region bounds must satisfy 0 < lam_min <= lam_max");
        if (!(tr.lower < tr.upper)) return fail("trust_region thresholds must satisfy lower < upper");
        if (!(tr.rho_clip > 0.0)) return fail("trust_region rho_clip must be positive");
    }
    if (kind == CurvatureKind::none &&
        (spec.telemetry.trace_every_k.enabled() || spec.telemetry.top_eig_every_k.enabled()))
        return fail("trace/top-eigenvalue telemetry requires a curvature operator; curvature is 'none'");
    if (spec.chain.uses_preconditioner() && spec.precond.kind == PrecondKind::none)
        return fail("sophia_clip requires a diag_ema or sq_grad preconditioner");
    if (!(spec.precond.beta >= 0.0 && spec.precond.beta <= 1.0)) return fail("precond beta must lie in [0, 1]");
    if (spec.telemetry.trace_probes < 1 || spec.telemetry.power_iters < 1)
        return fail("telemetry probe counts must be at least 1");
    if (lane_for(solver) != Lane::diag) {
        const auto& cg = spec.solver.cg;
        if (!(cg.tol > 0.0) || cg.maxiter < 1 || !(cg.diag_floor > 0.0))
            return fail("invalid CG config: need tol > 0, maxiter >= 1, diag_floor > 0");
    }
    return std::nullopt;
}

Plan make_plan(const MethodSpec& spec) {
    Plan p;
    p.solver = spec.solver.kind;
    p.lane = lane_for(p.solver);
    p.solver_config = spec.solver.cg;
    p.curvature = spec.curvature;
    p.precond = spec.precond;
    p.damping = spec.damping;
    p.estimator = spec.estimator;
    p.telemetry = spec.telemetry;
    p.schema.assign(StepInfo::kKeys.begin(), StepInfo::kKeys.end());
    p.needs_row_primitives = p.lane == Lane::row;

    const bool tr = spec.damping.policy == DampingPolicy::trust_region;
    if (spec.telemetry.rho_every_k.enabled()) p.rho_gate.any_of.push_back(spec.telemetry.rho_every_k);
    if (tr) {
        p.damping_gate = Cadence{spec.damping.tr.every_k};
        p.rho_gate.any_of.push_back(p.damping_gate);
    }
    p.needs_rho = p.rho_gate.enabled();
    if (spec.estimator) p.estimator_gate = spec.estimator->every;
    p.precond_in_solve = spec.precond.kind != PrecondKind::none &&
                         (p.solver == SolverKind::diag || p.solver == SolverKind::cg);
    p.precond_in_chain = spec.chain.uses_preconditioner();

    InfoSchema s;
    auto allow = [&](std::string_view key) { s.producible[static_cast<std::size_t>(
                                                  std::find(StepInfo::kKeys.begin(), StepInfo::kKeys.end(), key) -
                                                  StepInfo::kKeys.begin())] = true; };
    for (auto key : {"loss_before", "lambda", "grad_norm", "step_norm", "step_index", "step_status"}) allow(key);
    if (p.lane != Lane::diag) {
        allow("solver_converged");
        allow("final_relative_residual");
        if (p.solver != SolverKind::row_cholesky) allow("solver_iterations");
    }
    if (p.needs_rho) {
        allow("loss_after");
        if (spec.curvature.kind != CurvatureKind::none) allow("rho");
    }
    if (spec.estimator) allow("diag_mean");
    if (spec.telemetry.trace_every_k.enabled()) allow("trace_estimate");
    if (spec.telemetry.top_eig_every_k.enabled()) allow("top_eig_estimate");
    p.producible = s;
    return p;
}

double mean_of(const ParamVector& v) {
    if (v.size() == 0) return 0.0;
    return std::accumulate(v.raw().begin(), v.raw().end(), 0.0) / static_cast<double>(v.size());
}

struct Direction {
    ParamVector s;
    StepStatus status = StepStatus::ok;
};

template <Lane L>
Direction solve_lane(const Method& m, const Snapshot& snap, MethodState& st, RawInfo& raw);

template <>
Direction solve_lane<Lane::diag>(const Method& m, const Snapshot& snap, MethodState& st, RawInfo&) {
    if (m.plan().solver == SolverKind::identity) return {snap.grad()};
    return {solve_diag(st.precond.diag, snap.grad(), st.damping.lam, m.plan().solver_config.diag_floor)};
}

template <>
Direction solve_lane<Lane::param>(const Method& m, const Snapshot& snap, MethodState& st, RawInfo& raw) {
    const Plan& plan = m.plan();
    std::optional<ParamVector> precond;
    if (plan.precond_in_solve) precond = st.precond.diag;
    SolveResult res = cg_solve(snap.op(), snap.grad(), st.damping.lam, plan.solver_config, precond, st.warm_param);
    raw["solver_iterations"] = static_cast<double>(res.iterations);
    raw["solver_converged"] = res.converged ? 1.0 : 0.0;
    raw["final_relative_residual"] = res.final_relative_residual;
    if (res.stop == CgStop::non_finite) return {std::move(res.direction), StepStatus::non_finite_direction};
    if (plan.solver_config.warm_start) st.warm_param = res.direction;
    return {std::move(res.direction)};
}

template <>
Direction solve_lane<Lane::row>(const Method& m, const Snapshot& snap, MethodState& st, RawInfo& raw) {
    const Plan& plan = m.plan();
    const double mu = damping_to_row(st.damping.lam, snap.batch_size());
    const Eigen::MatrixXd gram = row_gram(snap);
    const Eigen::VectorXd& rhs = snap.row_rhs();
    Eigen::VectorXd v;
    if (plan.solver == SolverKind::row_cholesky) {
        try {
            v = row_solve_cholesky(gram, rhs, mu);
        } catch (const FactorizationError&) {
            raw["solver_converged"] = 0.0;
            return {ParamVector::zeros_like(snap.grad()), StepStatus::solver_failure};
        }
        raw["solver_converged"] = 1.0;
        raw["final_relative_residual"] =
            rhs.norm() > 0.0 ? (gram * v + mu * v - rhs).norm() / rhs.norm() : 0.0;
    } else {
        // Warm start is dimension-bound; a batch-size change drops it.
        if (st.warm_row && st.warm_row->size() != rhs.size()) st.warm_row.reset();
        RowSolveResult res = row_solve_cg([&gram](const Eigen::VectorXd& u) { return Eigen::VectorXd(gram * u); }, rhs,
                                          mu, plan.solver_config, st.warm_row);
        raw["solver_iterations"] = static_cast<double>(res.iterations);
        raw["solver_converged"] = res.converged ? 1.0 : 0.0;
        raw["final_relative_residual"] = res.final_relative_residual;
        if (res.stop == CgStop::non_finite) return {ParamVector::zeros_like(snap.grad()), StepStatus::non_finite_direction};
        if (plan.solver_config.warm_start) st.warm_row = res.solution;
        v = std::move(res.solution);
    }
    return {backproject(snap, v)};
}

void refresh_diagonal(const Method& m, const Snapshot& snap, MethodState& st, RawInfo& raw) {
    const Plan& plan = m.plan();
    const std::size_t t = st.step_index;
    if (plan.estimator && plan.estimator_gate.fires(t)) {
        const LayoutPtr& layout = snap.grad().layout();
        ParamVector est = plan.estimator->kind == EstimatorKind::hutchinson
                              ? hutchinson_diag(snap.op(), st.rng, layout, plan.estimator->n_samples)
                              : gnb_diag(snap.linearization(), st.rng, plan.estimator->n_samples);
        raw["diag_mean"] = mean_of(est);
        st.precond = precond_diag_ema_update(st.precond, est);
    } else if (!plan.estimator && plan.precond.kind == PrecondKind::diag_ema) {
        st.precond = precond_diag_ema_update(st.precond, precond_sq_grad(snap.grad()));
    } else if (plan.precond.kind == PrecondKind::sq_grad) {
        st.precond.diag = precond_sq_grad(snap.grad());
        ++st.precond.step_count;
    }
}

template <Lane L>
StepResult execute(const Method& m, const ParamVector& w, const Batch& batch, MethodState st) {
    const Plan& plan = m.plan();
    CURVSTEP_REQUIRE(batch.loss_kind == plan.curvature.loss,
                     std::string("batch loss '") + to_string(batch.loss_kind) + "' does not match method loss '" +
                         to_string(plan.curvature.loss) + "'");
    g_last_lane = L;
    const std::size_t t = st.step_index;
    RawInfo raw;
    raw["step_index"] = static_cast<double>(t);
    raw["lambda"] = st.damping.lam;

    // 1. one linearization for the whole step
    const Snapshot snap = make_snapshot(plan.curvature.kind, m.model(), w, batch);
    raw["loss_before"] = snap.loss_before();
    raw["grad_norm"] = global_norm(snap.grad());

    // 2. diagonal refresh and lane solve
    refresh_diagonal(m, snap, st, raw);
    Direction dir = solve_lane<L>(m, snap, st, raw);

    auto abort_step = [&](StepStatus status) {
        raw["step_status"] = static_cast<double>(status);
        raw["step_norm"] = 0.0;
        st.damping = damping_escalate(st.damping);
        ++st.step_index;
        return StepResult{w, std::move(st), pack_step_info(plan.producible, raw)};
    };
    if (dir.status != StepStatus::ok) return abort_step(dir.status);
    if (!dir.s.all_finite()) return abort_step(StepStatus::non_finite_direction);

    // 3. chain and apply
    const ParamVector* h = plan.precond_in_chain ? &st.precond.diag : nullptr;
    ChainOutput applied = chain_apply(m.spec().chain, st.chain, dir.s, w, t, h);
    if (!applied.update.all_finite()) return abort_step(StepStatus::non_finite_direction);
    st.chain = std::move(applied.state);
    ParamVector w_next = w;
    w_next += applied.update;
    raw["step_norm"] = global_norm(applied.update);

    // 4. gated post-update probes against the realized update
    RhoBundle rho;
    if (plan.rho_gate.fires(t)) {
        const double loss_after = loss_value(m.model(), w_next, batch);
        raw["loss_after"] = loss_after;
        if (plan.curvature.kind != CurvatureKind::none) {
            // Realized displacement: what w actually moved by after rounding.
            rho = compute_rho(snap, w_next - w, loss_after, plan.damping.tr.rho_clip);
            raw["rho"] = rho.rho;
        }
    }
    if (plan.telemetry.trace_every_k.fires(t))
        raw["trace_estimate"] = hutchinson_trace(snap.op(), st.rng, w.layout(), plan.telemetry.trace_probes);
    if (plan.telemetry.top_eig_every_k.fires(t))
        raw["top_eig_estimate"] = power_iter_top_eig(snap.op(), st.rng, w.layout(), plan.telemetry.power_iters);

    // 5. damping
    if (plan.damping_gate.fires(t)) st.damping = damping_update(st.damping, rho, t);

    // 6. info
    raw["step_status"] = static_cast<double>(StepStatus::ok);
    ++st.step_index;
    return StepResult{std::move(w_next), std::move(st), pack_step_info(plan.producible, raw)};
}

StepFn step_fn_for(Lane lane) {
    switch (lane) {
        case Lane::diag: return &execute<Lane::diag>;
        case Lane::param: return &execute<Lane::param>;
        case Lane::row: return &execute<Lane::row>;
    }
    return &execute<Lane::diag>;
}

}  // namespace

struct MethodFactory {
    static Method build(const MethodSpec& spec, Plan plan, const Model& model) {
        const StepFn fn = step_fn_for(plan.lane);
        return Method(spec, std::move(plan), model, fn);
    }
};

std::variant<Method, AssemblyError> assemble(const MethodSpec& spec, const Model& model) {
    if (auto err = validate(spec, model)) return *err;
    return MethodFactory::build(spec, make_plan(spec), model);
}

MethodState init(const Method& method, const ParamVector& w, std::uint64_t seed) {
    CURVSTEP_REQUIRE(same_layout(w.layout(), method.model().layout()), "init: parameter layout does not match model");
    const MethodSpec& spec = method.spec();
    MethodState st;
    st.damping = spec.damping.policy == DampingPolicy::constant
                     ? DampingState::constant(spec.damping.lam0)
                     : DampingState::trust_region(spec.damping.lam0, spec.damping.tr);
    st.precond = PrecondState::make(spec.precond.kind, w, spec.precond.beta);
    st.chain = chain_init(spec.chain, w);
    st.step_index = 0;
    st.rng = Rng(seed);
    return st;
}

StepResult step(const Method& method, const ParamVector& w, const Batch& batch, MethodState state) {
    return method.step_fn_(method, w, batch, std::move(state));
}

std::optional<Lane> last_executed_lane() { return g_last_lane; }

// ---------------------------------------------------------------------------
// Presets

const std::vector<std::string>& preset_names() {
    static const std::vector<std::string> names = {"newton_cg", "sgn_mse",   "sgn_ce",   "egn_mse_cholesky",
                                                   "egn_mse_cg", "egn_ce",   "adahessian", "sophia_g",
                                                   "sophia_h",  "sophia_n",  "sgd",      "sgdm",
                                                   "adam"};
    return names;
}

namespace {

TransformChain lr_chain(Schedule s) {
    return TransformChain{{Link::scale_by_schedule(s), Link::scale(-1.0)}};
}

MethodSpec second_order_base(std::string name, CurvatureKind kind, LossKind loss, SolverKind solver) {
    MethodSpec s;
    s.name = std::move(name);
    s.curvature = {kind, loss};
    s.solver.kind = solver;
    s.solver.cg = CgConfig{1e-5, 5, 0, true, kDefaultDiagFloor};
    s.damping = DampingSpec{DampingPolicy::constant, 1.0, {}};
    s.chain = lr_chain(Schedule::constant(1e-3));
    return s;
}

// Sophia-style outer update: EMA of the direction, elementwise clip against
// gamma * h, decoupled weight decay, cosine schedule, descent sign.
MethodSpec sophia_base(std::string name, CurvatureKind kind, EstimatorKind est, double gamma) {
    MethodSpec s;
    s.name = std::move(name);
    s.curvature = {kind, LossKind::ce};
    s.solver.kind = SolverKind::identity;
    s.precond = PrecondSpec{PrecondKind::diag_ema, 0.99};
    s.estimator = EstimatorSpec{est, 1, Cadence{10}};
    s.damping = DampingSpec{DampingPolicy::constant, 0.0, {}};
    const double b1 = 0.965;
    s.chain.links = {Link::scale(1.0 - b1),
                     Link::trace_momentum(b1),
                     Link::sophia_clip(gamma, 1e-12),
                     Link::add_decayed_weights(1e-4),
                     Link::scale_by_schedule(Schedule::cosine_warmup(1e-3, 2000, 100000)),
                     Link::scale(-1.0)};
    return s;
}

}  // namespace

MethodSpec preset_spec(std::string_view name) {
    if (name == "newton_cg") {
        MethodSpec s = second_order_base("newton_cg", CurvatureKind::hessian, LossKind::mse, SolverKind::cg);
        s.chain = lr_chain(Schedule::constant(1.0));
        return s;
    }
    if (name == "sgn_mse") return second_order_base("sgn_mse", CurvatureKind::ggn_mse, LossKind::mse, SolverKind::cg);
    if (name == "sgn_ce") return second_order_base("sgn_ce", CurvatureKind::ggn_ce, LossKind::ce, SolverKind::cg);
    if (name == "egn_mse_cholesky")
        return second_order_base("egn_mse_cholesky", CurvatureKind::ggn_mse, LossKind::mse, SolverKind::row_cholesky);
    if (name == "egn_mse_cg")
        return second_order_base("egn_mse_cg", CurvatureKind::ggn_mse, LossKind::mse, SolverKind::row_cg);
    if (name == "egn_ce") return second_order_base("egn_ce", CurvatureKind::ggn_ce, LossKind::ce, SolverKind::row_cholesky);
    if (name == "adahessian") {
        MethodSpec s;
        s.name = "adahessian";
        s.curvature = {CurvatureKind::hessian, LossKind::ce};
        s.solver.kind = SolverKind::diag;
        s.precond = PrecondSpec{PrecondKind::diag_ema, 0.99};
        s.estimator = EstimatorSpec{EstimatorKind::hutchinson, 1, Cadence{1}};
        s.damping = DampingSpec{DampingPolicy::constant, 1e-1, {}};
        s.chain.links = {Link::scale(0.1), Link::trace_momentum(0.9), Link::clip_global_norm(1.0),
                         Link::scale_by_schedule(Schedule::constant(1e-2)), Link::scale(-1.0)};
        return s;
    }
    if (name == "sophia_g") return sophia_base("sophia_g", CurvatureKind::ggn_ce, EstimatorKind::gnb, 0.05);
    if (name == "sophia_h") return sophia_base("sophia_h", CurvatureKind::hessian, EstimatorKind::hutchinson, 0.01);
    if (name == "sophia_n") return sophia_base("sophia_n", CurvatureKind::ggn_ce, EstimatorKind::hutchinson, 0.05);
    if (name == "sgd" || name == "sgdm" || name == "adam") {
        MethodSpec s;
        s.name = std::string(name);
        s.curvature = {CurvatureKind::none, LossKind::ce};
        s.solver.kind = SolverKind::identity;
        s.damping = DampingSpec{DampingPolicy::constant, 0.0, {}};
        if (name == "sgd") {
            s.chain = lr_chain(Schedule::constant(1e-1));
        } else if (name == "sgdm") {
            s.chain.links = {Link::add_decayed_weights(5e-4), Link::trace_momentum(0.9),
                             Link::scale_by_schedule(Schedule::step(1e-2, 0.1, 100000)), Link::scale(-1.0)};
        } else {
            s.chain.links = {Link::scale_by_adam(0.9, 0.999, 1e-8), Link::scale_by_schedule(Schedule::constant(1e-3)),
                             Link::scale(-1.0)};
        }
        return s;
    }
    throw std::invalid_argument("unknown preset '" + std::string(name) + "'");
}

}  // namespace curvstep
