#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "curvstep/numeric.hpp"

namespace curvstep {

enum class ScheduleKind { constant, step, cosine_warmup };

const char* to_string(ScheduleKind k);

/// Learning-rate style schedule alpha(t).
struct Schedule {
    ScheduleKind kind = ScheduleKind::constant;
    double init_value = 1.0;
    double decay_rate = 0.1;         // step: multiplier per period
    std::size_t period = 1000;       // step
    std::size_t warmup_steps = 0;    // cosine_warmup
    std::size_t total_steps = 1000;  // cosine_warmup: step at which the cosine reaches 0

    static Schedule constant(double value);
    static Schedule step(double value, double decay_rate, std::size_t period);
    static Schedule cosine_warmup(double peak, std::size_t warmup_steps, std::size_t total_steps);

    bool operator==(const Schedule&) const = default;
};

double schedule_value(const Schedule& s, std::size_t t);

enum class LinkKind {
    scale,
    scale_by_schedule,
    trace_momentum,
    clip_global_norm,
    add_decayed_weights,
    scale_by_adam,
    sophia_clip,
};

const char* to_string(LinkKind k);
std::optional<LinkKind> link_kind_from_string(std::string_view s);

/// One chain element. Only the fields relevant to `kind` are read.
struct Link {
    LinkKind kind = LinkKind::scale;
    double factor = 1.0;        // scale
    Schedule schedule;          // scale_by_schedule
    double beta = 0.9;          // trace_momentum
    double max_norm = 1.0;      // clip_global_norm
    double weight_decay = 0.0;  // add_decayed_weights
    double b1 = 0.9, b2 = 0.999, eps = 1e-8;  // scale_by_adam; eps is shared with sophia_clip
    double gamma = 0.05;        // sophia_clip

    static Link scale(double c);
    static Link scale_by_schedule(Schedule s);
    static Link trace_momentum(double beta);
    static Link clip_global_norm(double max_norm);
    static Link add_decayed_weights(double wd);
    static Link scale_by_adam(double b1 = 0.9, double b2 = 0.999, double eps = 1e-8);
    static Link sophia_clip(double gamma, double eps = 1e-12);

    bool operator==(const Link&) const = default;
};

/// Left-to-right composition; the empty chain is the identity. Chains
/// produce an additive update (w_next = w + update), so descent presets end
/// with a negative scale.
struct TransformChain {
    std::vector<Link> links;

    bool uses_preconditioner() const;
    bool operator==(const TransformChain&) const = default;
};

struct LinkState {
    std::optional<ParamVector> trace;  // trace_momentum
    std::optional<ParamVector> mu;     // scale_by_adam first moment
    std::optional<ParamVector> nu;     // scale_by_adam second moment
    std::uint64_t count = 0;           // applications of this link
};

struct ChainState {
    std::vector<LinkState> links;
};

ChainState chain_init(const TransformChain& chain, const ParamVector& w);

struct ChainOutput {
    ParamVector update;
    ChainState state;
};

/// `precond_diag` feeds sophia_clip links; it is required iff the chain has one.
ChainOutput chain_apply(const TransformChain& chain, const ChainState& state, const ParamVector& direction,
                        const ParamVector& w, std::size_t t, const ParamVector* precond_diag = nullptr);

}  // namespace curvstep
