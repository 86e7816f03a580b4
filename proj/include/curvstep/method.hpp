#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "curvstep/control.hpp"
#include "curvstep/curvature.hpp"
#include "curvstep/model.hpp"
#include "curvstep/solvers.hpp"
#include "curvstep/step_info.hpp"
#include "curvstep/transforms.hpp"

namespace curvstep {

// ---------------------------------------------------------------------------
// Declarative specs

enum class SolverKind { identity, diag, cg, row_cholesky, row_cg };
enum class Lane { diag, param, row };
enum class EstimatorKind { hutchinson, gnb };

const char* to_string(SolverKind k);
const char* to_string(Lane l);
const char* to_string(EstimatorKind k);

struct CurvatureSpec {
    CurvatureKind kind = CurvatureKind::none;
    LossKind loss = LossKind::mse;
    bool operator==(const CurvatureSpec&) const = default;
};

/// `identity` passes the gradient through as the direction (first-order and
/// Sophia-style presets, where the diagonal enters through the chain).
struct SolverSpec {
    SolverKind kind = SolverKind::identity;
    CgConfig cg;
    bool operator==(const SolverSpec&) const = default;
};

struct PrecondSpec {
    PrecondKind kind = PrecondKind::none;
    double beta = 0.99;
    bool operator==(const PrecondSpec&) const = default;
};

struct DampingSpec {
    DampingPolicy policy = DampingPolicy::constant;
    double lam0 = 1.0;
    TrustRegionParams tr;
    bool operator==(const DampingSpec&) const = default;
};

/// Diagonal estimator feeding the preconditioner. `n_samples` is the probe
/// count for Hutchinson and the label-sample count for GNB.
struct EstimatorSpec {
    EstimatorKind kind = EstimatorKind::hutchinson;
    std::size_t n_samples = 1;
    Cadence every;
    bool operator==(const EstimatorSpec&) const = default;
};

/// Pure telemetry probes; none of them feed back into the update.
struct TelemetrySpec {
    Cadence rho_every_k;
    Cadence trace_every_k;
    Cadence top_eig_every_k;
    std::size_t trace_probes = 1;
    std::size_t power_iters = 10;
    bool operator==(const TelemetrySpec&) const = default;
};

struct MethodSpec {
    std::string name = "custom";
    CurvatureSpec curvature;
    SolverSpec solver;
    PrecondSpec precond;
    DampingSpec damping;
    std::optional<EstimatorSpec> estimator;
    TelemetrySpec telemetry;
    TransformChain chain;

    bool operator==(const MethodSpec&) const = default;
};

// ---------------------------------------------------------------------------
// Plan

/// Fires when any member cadence fires.
struct Gate {
    std::vector<Cadence> any_of;
    bool enabled() const;
    bool fires(std::size_t t) const;
    bool operator==(const Gate&) const = default;
};

struct Plan {
    Lane lane = Lane::diag;
    SolverKind solver = SolverKind::identity;
    CgConfig solver_config;
    CurvatureSpec curvature;
    PrecondSpec precond;
    DampingSpec damping;
    std::optional<EstimatorSpec> estimator;
    TelemetrySpec telemetry;

    std::vector<std::string> schema;  // emitted key order, identical for every plan
    InfoSchema producible;
    Gate rho_gate;           // loss_after + rho
    Cadence damping_gate;    // trust-region lambda update
    Cadence estimator_gate;  // diagonal refresh
    bool needs_row_primitives = false;
    bool needs_rho = false;
    bool precond_in_solve = false;  // PCG or diagonal solve reads the preconditioner
    bool precond_in_chain = false;  // sophia_clip reads the preconditioner
};

/// Names of plan modules that differ: any of "lane", "curvature",
/// "solver_config", "precond", "damping", "estimator", "telemetry".
std::vector<std::string> plan_diff(const Plan& a, const Plan& b);

// ---------------------------------------------------------------------------
// Method, state, step

struct MethodState {
    DampingState damping;
    PrecondState precond;
    ChainState chain;
    std::optional<ParamVector> warm_param;
    std::optional<Eigen::VectorXd> warm_row;
    std::size_t step_index = 0;
    Rng rng;
};

struct StepResult {
    ParamVector w;
    MethodState state;
    StepInfo info;
};

class Method;
using StepFn = StepResult (*)(const Method&, const ParamVector&, const Batch&, MethodState);

class Method {
public:
    const MethodSpec& spec() const { return spec_; }
    const Plan& plan() const { return plan_; }
    const Model& model() const { return model_; }

private:
    friend struct MethodFactory;
    Method(MethodSpec spec, Plan plan, Model model, StepFn fn)
        : spec_(std::move(spec)), plan_(std::move(plan)), model_(std::move(model)), step_fn_(fn) {}

    MethodSpec spec_;
    Plan plan_;
    Model model_;
    StepFn step_fn_;

    friend StepResult step(const Method&, const ParamVector&, const Batch&, MethodState);
};

struct AssemblyError {
    std::string message;
};

/// Thrown by make() when a preset or its overrides fail to assemble.
class AssemblyFailure : public std::runtime_error {
public:
    explicit AssemblyFailure(const AssemblyError& e) : std::runtime_error(e.message), error(e) {}
    AssemblyError error;
};

std::variant<Method, AssemblyError> assemble(const MethodSpec& spec, const Model& model);

MethodState init(const Method& method, const ParamVector& w, std::uint64_t seed);

/// One optimizer step: snapshot, lane solve, chain, gated post-update
/// probes, damping, info.
StepResult step(const Method& method, const ParamVector& w, const Batch& batch, MethodState state);

/// Lane run by the most recent step on this thread.
std::optional<Lane> last_executed_lane();

// ---------------------------------------------------------------------------
// Presets

const std::vector<std::string>& preset_names();

/// Named preset spec; `lr` is the peak learning rate of the schedule link.
MethodSpec preset_spec(std::string_view name);

}  // namespace curvstep
