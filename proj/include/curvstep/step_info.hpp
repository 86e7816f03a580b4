#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>

#include "curvstep/control.hpp"

namespace curvstep {

/// Static period gate: fires on 0-based step t iff k >= 1 and t % k == 0.
/// k = -1 disables.
struct Cadence {
    int k = -1;

    bool enabled() const { return k >= 1; }
    bool fires(std::size_t t) const { return k >= 1 && t % static_cast<std::size_t>(k) == 0; }
    bool operator==(const Cadence&) const = default;
};

enum class StepStatus : std::int64_t { ok = 0, non_finite_direction = 1, solver_failure = 2 };

/// Fixed-schema per-step record. Real fields use NaN and integer fields
/// use -1 when their probe did not run this step.
struct StepInfo {
    double loss_before = kNaN;
    double loss_after = kNaN;
    double rho = kNaN;
    double lambda = kNaN;
    double grad_norm = kNaN;
    double step_norm = kNaN;
    std::int64_t solver_iterations = -1;
    std::int64_t solver_converged = -1;
    double final_relative_residual = kNaN;
    double diag_mean = kNaN;
    double trace_estimate = kNaN;
    double top_eig_estimate = kNaN;
    std::int64_t step_index = -1;
    std::int64_t step_status = 0;

    static constexpr std::array<std::string_view, 14> kKeys = {
        "loss_before",    "loss_after",        "rho",          "lambda",
        "grad_norm",      "step_norm",         "solver_iterations",
        "solver_converged", "final_relative_residual", "diag_mean",
        "trace_estimate", "top_eig_estimate",  "step_index",   "step_status"};

    static bool is_integer_key(std::string_view key);

    /// Value by key as double (integers widened). Throws on unknown key.
    double get(std::string_view key) const;
    void set(std::string_view key, double value);
};

/// The keys a plan may fill on some step. The emitted key set is always
/// the full StepInfo::kKeys list.
struct InfoSchema {
    std::array<bool, StepInfo::kKeys.size()> producible{};

    static InfoSchema all();
    bool allows(std::string_view key) const;
};

using RawInfo = std::map<std::string, double, std::less<>>;

/// Every key is present in the result; keys missing from `raw` carry
/// sentinels. A key the schema cannot produce is a planner bug.
StepInfo pack_step_info(const InfoSchema& schema, const RawInfo& raw);

}  // namespace curvstep
