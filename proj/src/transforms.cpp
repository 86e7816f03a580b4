#include "curvstep/transforms.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace curvstep {

Schedule Schedule::constant(double value) {
    Schedule s;
    s.kind = ScheduleKind::constant;
    s.init_value = value;
    return s;
}

Schedule Schedule::step(double value, double decay_rate, std::size_t period) {
    CURVSTEP_REQUIRE(period >= 1, "step schedule: period must be at least 1");
    Schedule s;
    s.kind = ScheduleKind::step;
    s.init_value = value;
    s.decay_rate = decay_rate;
    s.period = period;
    return s;
}

Schedule Schedule::cosine_warmup(double peak, std::size_t warmup_steps, std::size_t total_steps) {
    CURVSTEP_REQUIRE(total_steps > warmup_steps, "cosine schedule: total_steps must exceed warmup_steps");
    Schedule s;
    s.kind = ScheduleKind::cosine_warmup;
    s.init_value = peak;
    s.warmup_steps = warmup_steps;
    s.total_steps = total_steps;
    return s;
}

const char* to_string(ScheduleKind k) {
    switch (k) {
        case ScheduleKind::constant: return "constant";
        case ScheduleKind::step: return "step";
        case ScheduleKind::cosine_warmup: return "cosine_warmup";
    }
    return "?";
}

double schedule_value(const Schedule& s, std::size_t t) {
    switch (s.kind) {
        case ScheduleKind::constant: return s.init_value;
        case ScheduleKind::step:
            return s.init_value * std::pow(s.decay_rate, static_cast<double>(t / s.period));
        case ScheduleKind::cosine_warmup: {
            if (t < s.warmup_steps)
                return s.init_value * static_cast<double>(t) / static_cast<double>(s.warmup_steps);
            const double span = static_cast<double>(s.total_steps - s.warmup_steps);
            const double progress = std::min(1.0, static_cast<double>(t - s.warmup_steps) / span);
            return 0.5 * s.init_value * (1.0 + std::cos(std::numbers::pi * progress));
        }
    }
    return s.init_value;
}

const char* to_string(LinkKind k) {
    switch (k) {
        case LinkKind::scale: return "scale";
        case LinkKind::scale_by_schedule: return "scale_by_schedule";
        case LinkKind::trace_momentum: return "trace_momentum";
        case LinkKind::clip_global_norm: return "clip_global_norm";
        case LinkKind::add_decayed_weights: return "add_decayed_weights";
        case LinkKind::scale_by_adam: return "scale_by_adam";
        case LinkKind::sophia_clip: return "sophia_clip";
    }
    return "?";
}

std::optional<LinkKind> link_kind_from_string(std::string_view s) {
    for (auto k : {LinkKind::scale, LinkKind::scale_by_schedule, LinkKind::trace_momentum, LinkKind::clip_global_norm,
                   LinkKind::add_decayed_weights, LinkKind::scale_by_adam, LinkKind::sophia_clip})
        if (s == to_string(k)) return k;
    return std::nullopt;
}

Link Link::scale(double c) {
    Link l;
    l.kind = LinkKind::scale;
    l.factor = c;
    return l;
}

Link Link::scale_by_schedule(Schedule s) {
    Link l;
    l.kind = LinkKind::scale_by_schedule;
    l.schedule = s;
    return l;
}

Link Link::trace_momentum(double beta) {
    Link l;
    l.kind = LinkKind::trace_momentum;
    l.beta = beta;
    return l;
}

Link Link::clip_global_norm(double max_norm) {
    CURVSTEP_REQUIRE(max_norm > 0.0, "clip_global_norm: max_norm must be positive");
    Link l;
    l.kind = LinkKind::clip_global_norm;
    l.max_norm = max_norm;
    return l;
}

Link Link::add_decayed_weights(double wd) {
    Link l;
    l.kind = LinkKind::add_decayed_weights;
    l.weight_decay = wd;
    return l;
}

Link Link::scale_by_adam(double b1, double b2, double eps) {
    Link l;
    l.kind = LinkKind::scale_by_adam;
    l.b1 = b1;
    l.b2 = b2;
    l.eps = eps;
    return l;
}

Link Link::sophia_clip(double gamma, double eps) {
    CURVSTEP_REQUIRE(gamma > 0.0 && eps > 0.0, "sophia_clip: gamma and eps must be positive");
    Link l;
    l.kind = LinkKind::sophia_clip;
    l.gamma = gamma;
    l.eps = eps;
    return l;
}

bool TransformChain::uses_preconditioner() const {
    return std::any_of(links.begin(), links.end(), [](const Link& l) { return l.kind == LinkKind::sophia_clip; });
}

ChainState chain_init(const TransformChain& chain, const ParamVector& w) {
    ChainState state;
    state.links.resize(chain.links.size());
    for (std::size_t i = 0; i < chain.links.size(); ++i) {
        const Link& link = chain.links[i];
        if (link.kind == LinkKind::trace_momentum) state.links[i].trace = ParamVector::zeros_like(w);
        if (link.kind == LinkKind::scale_by_adam) {
            state.links[i].mu = ParamVector::zeros_like(w);
            state.links[i].nu = ParamVector::zeros_like(w);
        }
    }
    return state;
}

ChainOutput chain_apply(const TransformChain& chain, const ChainState& state, const ParamVector& direction,
                        const ParamVector& w, std::size_t t, const ParamVector* precond_diag) {
    require_same_layout(direction, w);
    CURVSTEP_REQUIRE(state.links.size() == chain.links.size(), "chain state does not match chain length");
    ChainOutput out{direction, state};
    ParamVector& x = out.update;
    for (std::size_t i = 0; i < chain.links.size(); ++i) {
        const Link& link = chain.links[i];
        LinkState& ls = out.state.links[i];
        ++ls.count;
        switch (link.kind) {
            case LinkKind::scale: x *= link.factor; break;
            case LinkKind::scale_by_schedule: x *= schedule_value(link.schedule, t); break;
            case LinkKind::trace_momentum: {
                ParamVector& m = *ls.trace;
                require_same_layout(m, x);
                for (std::size_t j = 0; j < x.size(); ++j) m[j] = link.beta * m[j] + x[j];
                x = m;
                break;
            }
            case LinkKind::clip_global_norm: {
                const double n = global_norm(x);
                if (n > link.max_norm) x *= link.max_norm / n;
                break;
            }
            case LinkKind::add_decayed_weights: axpy(link.weight_decay, w, x); break;
            case LinkKind::scale_by_adam: {
                ParamVector& mu = *ls.mu;
                ParamVector& nu = *ls.nu;
                require_same_layout(mu, x);
                const double c = static_cast<double>(ls.count);
                const double bc1 = 1.0 - std::pow(link.b1, c);
                const double bc2 = 1.0 - std::pow(link.b2, c);
                for (std::size_t j = 0; j < x.size(); ++j) {
                    mu[j] = link.b1 * mu[j] + (1.0 - link.b1) * x[j];
                    nu[j] = link.b2 * nu[j] + (1.0 - link.b2) * x[j] * x[j];
                    x[j] = (mu[j] / bc1) / (std::sqrt(nu[j] / bc2) + link.eps);
                }
                break;
            }
            case LinkKind::sophia_clip: {
                CURVSTEP_REQUIRE(precond_diag != nullptr, "sophia_clip needs a preconditioner diagonal");
                require_same_layout(*precond_diag, x);
                const ParamVector& h = *precond_diag;
                for (std::size_t j = 0; j < x.size(); ++j)
                    x[j] = std::clamp(x[j] / std::max(link.gamma * h[j], link.eps), -1.0, 1.0);
                break;
            }
        }
    }
    return out;
}

}  // namespace curvstep
