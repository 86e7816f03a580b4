#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>

#include "curvstep/curvature.hpp"
#include "curvstep/numeric.hpp"

namespace curvstep {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

enum class DampingPolicy { constant, trust_region };

const char* to_string(DampingPolicy p);

struct TrustRegionParams {
    double lower = 0.25;
    double upper = 0.75;
    double factor_good = 0.5;  // applied when rho >= upper
    double factor_bad = 1.5;   // applied when rho <= lower
    double lam_min = 1e-12;
    double lam_max = 1e6;
    double rho_clip = 5.0;
    int every_k = 5;

    bool operator==(const TrustRegionParams&) const = default;
};

struct DampingState {
    double lam = 1.0;
    DampingPolicy policy = DampingPolicy::constant;
    TrustRegionParams tr;

    static DampingState constant(double lam0);
    static DampingState trust_region(double lam0, TrustRegionParams params = {});

    bool operator==(const DampingState&) const = default;
};

/// Gain-ratio bundle for one applied update. `rho` is NaN when the
/// predicted decrease is not positive.
struct RhoBundle {
    double loss_before = kNaN;
    double loss_after = kNaN;
    double predicted_decrease = kNaN;
    double rho = kNaN;

    bool valid() const { return !std::isnan(rho); }
};

/// Minimum predicted decrease for which rho is defined.
inline constexpr double kMinPredictedDecrease = 1e-15;

/// predicted = -(g.u + 0.5 u.Hu) with the undamped snapshot curvature.
RhoBundle compute_rho(const Snapshot& snapshot, const ParamVector& applied_update, double loss_after, double rho_clip);

/// Pure-function form used when the curvature term is supplied directly.
RhoBundle make_rho(double loss_before, double loss_after, double grad_dot_u, double u_h_u, double rho_clip);

/// Constant policy never changes lam. Trust region scales lam by
/// factor_good (rho >= upper) or factor_bad (rho <= lower) and clamps to
/// [lam_min, lam_max]. An invalid rho leaves the state unchanged.
DampingState damping_update(const DampingState& state, const RhoBundle& rho, std::size_t t);

/// Failure escalation: lam *= factor_bad for trust region, unchanged otherwise.
DampingState damping_escalate(const DampingState& state);

enum class PrecondKind { none, sq_grad, diag_ema };

const char* to_string(PrecondKind k);

struct PrecondState {
    PrecondKind kind = PrecondKind::none;
    ParamVector diag;
    double ema_beta = 0.99;
    std::size_t step_count = 0;

    static PrecondState make(PrecondKind kind, const ParamVector& like, double beta = 0.99);
};

ParamVector precond_sq_grad(const ParamVector& grad);

/// diag <- beta * diag + (1 - beta) * max(new_diag, 0), no bias correction.
PrecondState precond_diag_ema_update(const PrecondState& state, const ParamVector& new_diag);

}  // namespace curvstep
