#include "curvstep/control.hpp"

#include <algorithm>
#include <cmath>

namespace curvstep {

const char* to_string(DampingPolicy p) { return p == DampingPolicy::constant ? "constant" : "trust_region"; }

const char* to_string(PrecondKind k) {
    switch (k) {
        case PrecondKind::none: return "none";
        case PrecondKind::sq_grad: return "sq_grad";
        case PrecondKind::diag_ema: return "diag_ema";
    }
    return "?";
}

DampingState DampingState::constant(double lam0) {
    CURVSTEP_REQUIRE(lam0 >= 0.0, "damping: lam0 must be non-negative");
    return DampingState{lam0, DampingPolicy::constant, {}};
}

DampingState DampingState::trust_region(double lam0, TrustRegionParams params) {
    CURVSTEP_REQUIRE(params.lam_min > 0.0 && params.lam_min <= params.lam_max, "trust region: invalid damping bounds");
    CURVSTEP_REQUIRE(params.lower < params.upper, "trust region: lower threshold must be below upper");
    CURVSTEP_REQUIRE(params.rho_clip > 0.0, "trust region: rho_clip must be positive");
    return DampingState{std::clamp(lam0, params.lam_min, params.lam_max), DampingPolicy::trust_region, params};
}

RhoBundle make_rho(double loss_before, double loss_after, double grad_dot_u, double u_h_u, double rho_clip) {
    RhoBundle out;
    out.loss_before = loss_before;
    out.loss_after = loss_after;
    out.predicted_decrease = -(grad_dot_u + 0.5 * u_h_u);
    if (out.predicted_decrease > kMinPredictedDecrease && std::isfinite(loss_after)) {
        const double raw = (loss_before - loss_after) / out.predicted_decrease;
        out.rho = std::clamp(raw, -rho_clip, rho_clip);
    }
    return out;
}

RhoBundle compute_rho(const Snapshot& snapshot, const ParamVector& applied_update, double loss_after, double rho_clip) {
    const double gu = dot(snapshot.grad(), applied_update);
    const double uhu = dot(applied_update, snapshot.matvec(applied_update));
    return make_rho(snapshot.loss_before(), loss_after, gu, uhu, rho_clip);
}

DampingState damping_update(const DampingState& state, const RhoBundle& rho, std::size_t /*t*/) {
    if (state.policy == DampingPolicy::constant || !rho.valid()) return state;
    DampingState next = state;
    const auto& tr = state.tr;
    if (rho.rho >= tr.upper)
        next.lam = state.lam * tr.factor_good;
    else if (rho.rho <= tr.lower)
        next.lam = state.lam * tr.factor_bad;
    next.lam = std::clamp(next.lam, tr.lam_min, tr.lam_max);
    return next;
}

DampingState damping_escalate(const DampingState& state) {
    if (state.policy == DampingPolicy::constant) return state;
    DampingState next = state;
    next.lam = std::clamp(state.lam * state.tr.factor_bad, state.tr.lam_min, state.tr.lam_max);
    return next;
}

PrecondState PrecondState::make(PrecondKind kind, const ParamVector& like, double beta) {
    CURVSTEP_REQUIRE(beta >= 0.0 && beta <= 1.0, "precond: ema beta must lie in [0, 1]");
    return PrecondState{kind, ParamVector::zeros_like(like), beta, 0};
}

ParamVector precond_sq_grad(const ParamVector& grad) { return hadamard(grad, grad); }

PrecondState precond_diag_ema_update(const PrecondState& state, const ParamVector& new_diag) {
    CURVSTEP_REQUIRE(state.kind == PrecondKind::diag_ema, "precond_diag_ema_update needs a diag_ema state");
    require_same_layout(state.diag, new_diag);
    PrecondState next = state;
    const double beta = state.ema_beta;
    for (std::size_t i = 0; i < next.diag.size(); ++i)
        next.diag[i] = beta * state.diag[i] + (1.0 - beta) * std::max(new_diag[i], 0.0);
    ++next.step_count;
    return next;
}

}  // namespace curvstep
