#include "curvstep/step_info.hpp"

#include <algorithm>
#include <string>

namespace curvstep {

namespace {

std::size_t key_index(std::string_view key) {
    const auto it = std::find(StepInfo::kKeys.begin(), StepInfo::kKeys.end(), key);
    CURVSTEP_REQUIRE(it != StepInfo::kKeys.end(), "unknown StepInfo key: " + std::string(key));
    return static_cast<std::size_t>(it - StepInfo::kKeys.begin());
}

}  // namespace

bool StepInfo::is_integer_key(std::string_view key) {
    return key == "solver_iterations" || key == "solver_converged" || key == "step_index" || key == "step_status";
}

double StepInfo::get(std::string_view key) const {
    switch (key_index(key)) {
        case 0: return loss_before;
        case 1: return loss_after;
        case 2: return rho;
        case 3: return lambda;
        case 4: return grad_norm;
        case 5: return step_norm;
        case 6: return static_cast<double>(solver_iterations);
        case 7: return static_cast<double>(solver_converged);
        case 8: return final_relative_residual;
        case 9: return diag_mean;
        case 10: return trace_estimate;
        case 11: return top_eig_estimate;
        case 12: return static_cast<double>(step_index);
        default: return static_cast<double>(step_status);
    }
}

void StepInfo::set(std::string_view key, double value) {
    switch (key_index(key)) {
        case 0: loss_before = value; break;
        case 1: loss_after = value; break;
        case 2: rho = value; break;
        case 3: lambda = value; break;
        case 4: grad_norm = value; break;
        case 5: step_norm = value; break;
        case 6: solver_iterations = static_cast<std::int64_t>(value); break;
        case 7: solver_converged = static_cast<std::int64_t>(value); break;
        case 8: final_relative_residual = value; break;
        case 9: diag_mean = value; break;
        case 10: trace_estimate = value; break;
        case 11: top_eig_estimate = value; break;
        case 12: step_index = static_cast<std::int64_t>(value); break;
        default: step_status = static_cast<std::int64_t>(value); break;
    }
}

InfoSchema InfoSchema::all() {
    InfoSchema s;
    s.producible.fill(true);
    return s;
}

bool InfoSchema::allows(std::string_view key) const { return producible[key_index(key)]; }

StepInfo pack_step_info(const InfoSchema& schema, const RawInfo& raw) {
    StepInfo info;
    for (const auto& [key, value] : raw) {
        CURVSTEP_REQUIRE(schema.allows(key), "pack_step_info: key '" + key + "' is not in the planned schema");
        info.set(key, value);
    }
    return info;
}

}  // namespace curvstep
