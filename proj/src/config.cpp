#include "curvstep/config.hpp"

#include <algorithm>
#include <initializer_list>

namespace curvstep {

namespace {

[[noreturn]] void bad(const std::string& path, const std::string& what) { throw ConfigError(path + ": " + what); }

void require_object(const Json& j, const std::string& path, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) bad(path, "expected an object");
    for (const auto& [key, _] : j.items())
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
            bad(path + "." + key, "unknown key");
}

double get_real(const Json& j, const char* key, double def, const std::string& path) {
    if (!j.contains(key)) return def;
    const Json& v = j.at(key);
    if (!v.is_number()) bad(path + "." + key, "expected a number");
    return v.get<double>();
}

long long get_int(const Json& j, const char* key, long long def, const std::string& path) {
    if (!j.contains(key)) return def;
    const Json& v = j.at(key);
    if (!v.is_number_integer()) bad(path + "." + key, "expected an integer");
    return v.get<long long>();
}

std::size_t get_count(const Json& j, const char* key, std::size_t def, const std::string& path) {
    const long long v = get_int(j, key, static_cast<long long>(def), path);
    if (v < 0) bad(path + "." + key, "expected a non-negative integer");
    return static_cast<std::size_t>(v);
}

bool get_bool(const Json& j, const char* key, bool def, const std::string& path) {
    if (!j.contains(key)) return def;
    const Json& v = j.at(key);
    if (!v.is_boolean()) bad(path + "." + key, "expected a boolean");
    return v.get<bool>();
}

std::string get_string(const Json& j, const char* key, const std::string& def, const std::string& path) {
    if (!j.contains(key)) return def;
    const Json& v = j.at(key);
    if (!v.is_string()) bad(path + "." + key, "expected a string");
    return v.get<std::string>();
}

template <class E>
E parse_enum(const std::string& s, std::initializer_list<E> options, const std::string& path) {
    for (E e : options)
        if (s == to_string(e)) return e;
    std::string msg = "unknown value '" + s + "'; expected one of";
    for (E e : options) msg += std::string(" ") + to_string(e);
    bad(path, msg);
}

Json cadence_json(const Cadence& c) { return c.k; }

Cadence cadence_from(const Json& j, const char* key, const std::string& path) {
    const long long k = get_int(j, key, -1, path);
    if (k == 0 || k < -1) bad(path + "." + key, "cadence must be -1 (off) or >= 1");
    return Cadence{static_cast<int>(k)};
}

}  // namespace

Json to_json(const CgConfig& c) {
    return Json{{"tol", c.tol},
                {"maxiter", c.maxiter},
                {"stabilise_every", c.stabilise_every},
                {"warm_start", c.warm_start},
                {"diag_floor", c.diag_floor}};
}

Json to_json(const Schedule& s) {
    Json j{{"kind", to_string(s.kind)}, {"init_value", s.init_value}};
    if (s.kind == ScheduleKind::step) {
        j["decay_rate"] = s.decay_rate;
        j["period"] = s.period;
    } else if (s.kind == ScheduleKind::cosine_warmup) {
        j["warmup_steps"] = s.warmup_steps;
        j["total_steps"] = s.total_steps;
    }
    return j;
}

Json to_json(const Link& l) {
    Json j{{"kind", to_string(l.kind)}};
    switch (l.kind) {
        case LinkKind::scale: j["factor"] = l.factor; break;
        case LinkKind::scale_by_schedule: j["schedule"] = to_json(l.schedule); break;
        case LinkKind::trace_momentum: j["beta"] = l.beta; break;
        case LinkKind::clip_global_norm: j["max_norm"] = l.max_norm; break;
        case LinkKind::add_decayed_weights: j["weight_decay"] = l.weight_decay; break;
        case LinkKind::scale_by_adam:
            j["b1"] = l.b1;
            j["b2"] = l.b2;
            j["eps"] = l.eps;
            break;
        case LinkKind::sophia_clip:
            j["gamma"] = l.gamma;
            j["eps"] = l.eps;
            break;
    }
    return j;
}

Json to_json(const MethodSpec& s) {
    Json j;
    j["name"] = s.name;
    j["curvature"] = {{"kind", to_string(s.curvature.kind)}, {"loss", to_string(s.curvature.loss)}};
    j["solver"] = {{"kind", to_string(s.solver.kind)}, {"cg", to_json(s.solver.cg)}};
    j["precond"] = {{"kind", to_string(s.precond.kind)}, {"beta", s.precond.beta}};
    const auto& tr = s.damping.tr;
    j["damping"] = {{"policy", to_string(s.damping.policy)},
                    {"lam0", s.damping.lam0},
                    {"tr",
                     {{"lower", tr.lower},
                      {"upper", tr.upper},
                      {"factor_good", tr.factor_good},
                      {"factor_bad", tr.factor_bad},
                      {"lam_min", tr.lam_min},
                      {"lam_max", tr.lam_max},
                      {"rho_clip", tr.rho_clip},
                      {"every_k", tr.every_k}}}};
    if (s.estimator)
        j["estimator"] = {{"kind", to_string(s.estimator->kind)},
                          {"n_samples", s.estimator->n_samples},
                          {"every_k", cadence_json(s.estimator->every)}};
    else
        j["estimator"] = nullptr;
    j["telemetry"] = {{"rho_every_k", cadence_json(s.telemetry.rho_every_k)},
                      {"trace_every_k", cadence_json(s.telemetry.trace_every_k)},
                      {"top_eig_every_k", cadence_json(s.telemetry.top_eig_every_k)},
                      {"trace_probes", s.telemetry.trace_probes},
                      {"power_iters", s.telemetry.power_iters}};
    j["chain"] = Json::array();
    for (const Link& l : s.chain.links) j["chain"].push_back(to_json(l));
    return j;
}

CgConfig cg_config_from_json(const Json& j, const std::string& path) {
    require_object(j, path, {"tol", "maxiter", "stabilise_every", "warm_start", "diag_floor"});
    CgConfig c;
    c.tol = get_real(j, "tol", c.tol, path);
    c.maxiter = get_count(j, "maxiter", c.maxiter, path);
    c.stabilise_every = get_count(j, "stabilise_every", c.stabilise_every, path);
    c.warm_start = get_bool(j, "warm_start", c.warm_start, path);
    c.diag_floor = get_real(j, "diag_floor", c.diag_floor, path);
    return c;
}

Schedule schedule_from_json(const Json& j, const std::string& path) {
    require_object(j, path, {"kind", "init_value", "decay_rate", "period", "warmup_steps", "total_steps"});
    const auto kind = parse_enum(get_string(j, "kind", "constant", path),
                                 {ScheduleKind::constant, ScheduleKind::step, ScheduleKind::cosine_warmup}, path + ".kind");
    const double v = get_real(j, "init_value", 1.0, path);
    try {
        switch (kind) {
            case ScheduleKind::constant: return Schedule::constant(v);
            case ScheduleKind::step:
                return Schedule::step(v, get_real(j, "decay_rate", 0.1, path), get_count(j, "period", 1000, path));
            case ScheduleKind::cosine_warmup:
                return Schedule::cosine_warmup(v, get_count(j, "warmup_steps", 0, path),
                                               get_count(j, "total_steps", 1000, path));
        }
    } catch (const ContractError& e) {
        bad(path, e.what());
    }
    return Schedule::constant(v);
}

Link link_from_json(const Json& j, const std::string& path) {
    if (!j.is_object() || !j.contains("kind")) bad(path, "expected an object with a 'kind'");
    const std::string ks = get_string(j, "kind", "", path);
    const auto kind = link_kind_from_string(ks);
    if (!kind) bad(path + ".kind", "unknown link kind '" + ks + "'");
    try {
        switch (*kind) {
            case LinkKind::scale:
                require_object(j, path, {"kind", "factor"});
                return Link::scale(get_real(j, "factor", 1.0, path));
            case LinkKind::scale_by_schedule:
                require_object(j, path, {"kind", "schedule"});
                if (!j.contains("schedule")) bad(path + ".schedule", "missing");
                return Link::scale_by_schedule(schedule_from_json(j.at("schedule"), path + ".schedule"));
            case LinkKind::trace_momentum:
                require_object(j, path, {"kind", "beta"});
                return Link::trace_momentum(get_real(j, "beta", 0.9, path));
            case LinkKind::clip_global_norm:
                require_object(j, path, {"kind", "max_norm"});
                return Link::clip_global_norm(get_real(j, "max_norm", 1.0, path));
            case LinkKind::add_decayed_weights:
                require_object(j, path, {"kind", "weight_decay"});
                return Link::add_decayed_weights(get_real(j, "weight_decay", 0.0, path));
            case LinkKind::scale_by_adam:
                require_object(j, path, {"kind", "b1", "b2", "eps"});
                return Link::scale_by_adam(get_real(j, "b1", 0.9, path), get_real(j, "b2", 0.999, path),
                                           get_real(j, "eps", 1e-8, path));
            case LinkKind::sophia_clip:
                require_object(j, path, {"kind", "gamma", "eps"});
                return Link::sophia_clip(get_real(j, "gamma", 0.05, path), get_real(j, "eps", 1e-12, path));
        }
    } catch (const ContractError& e) {
        bad(path, e.what());
    }
    bad(path, "unreachable");
}

MethodSpec method_spec_from_json(const Json& j, const std::string& path) {
    require_object(j, path, {"name", "curvature", "solver", "precond", "damping", "estimator", "telemetry", "chain"});
    MethodSpec s;
    s.name = get_string(j, "name", s.name, path);

    if (j.contains("curvature")) {
        const Json& c = j.at("curvature");
        const std::string p = path + ".curvature";
        require_object(c, p, {"kind", "loss"});
        const std::string ks = get_string(c, "kind", "none", p);
        const auto kind = curvature_kind_from_string(ks);
        if (!kind) bad(p + ".kind", "unknown curvature kind '" + ks + "'");
        s.curvature.kind = *kind;
        s.curvature.loss = parse_enum(get_string(c, "loss", "mse", p), {LossKind::mse, LossKind::ce}, p + ".loss");
    }
    if (j.contains("solver")) {
        const Json& c = j.at("solver");
        const std::string p = path + ".solver";
        require_object(c, p, {"kind", "cg"});
        s.solver.kind = parse_enum(get_string(c, "kind", "identity", p),
                                   {SolverKind::identity, SolverKind::diag, SolverKind::cg, SolverKind::row_cholesky,
                                    SolverKind::row_cg},
                                   p + ".kind");
        if (c.contains("cg")) s.solver.cg = cg_config_from_json(c.at("cg"), p + ".cg");
    }
    if (j.contains("precond") && !j.at("precond").is_null()) {
        const Json& c = j.at("precond");
        const std::string p = path + ".precond";
        require_object(c, p, {"kind", "beta"});
        s.precond.kind = parse_enum(get_string(c, "kind", "none", p),
                                    {PrecondKind::none, PrecondKind::sq_grad, PrecondKind::diag_ema}, p + ".kind");
        s.precond.beta = get_real(c, "beta", s.precond.beta, p);
    }
    if (j.contains("damping")) {
        const Json& c = j.at("damping");
        const std::string p = path + ".damping";
        require_object(c, p, {"policy", "lam0", "tr"});
        s.damping.policy = parse_enum(get_string(c, "policy", "constant", p),
                                      {DampingPolicy::constant, DampingPolicy::trust_region}, p + ".policy");
        s.damping.lam0 = get_real(c, "lam0", s.damping.lam0, p);
        if (c.contains("tr")) {
            const Json& t = c.at("tr");
            const std::string q = p + ".tr";
            require_object(t, q, {"lower", "upper", "factor_good", "factor_bad", "lam_min", "lam_max", "rho_clip", "every_k"});
            auto& tr = s.damping.tr;
            tr.lower = get_real(t, "lower", tr.lower, q);
            tr.upper = get_real(t, "upper", tr.upper, q);
            tr.factor_good = get_real(t, "factor_good", tr.factor_good, q);
            tr.factor_bad = get_real(t, "factor_bad", tr.factor_bad, q);
            tr.lam_min = get_real(t, "lam_min", tr.lam_min, q);
            tr.lam_max = get_real(t, "lam_max", tr.lam_max, q);
            tr.rho_clip = get_real(t, "rho_clip", tr.rho_clip, q);
            tr.every_k = static_cast<int>(get_int(t, "every_k", tr.every_k, q));
        }
    }
    if (j.contains("estimator") && !j.at("estimator").is_null()) {
        const Json& c = j.at("estimator");
        const std::string p = path + ".estimator";
        require_object(c, p, {"kind", "n_samples", "every_k"});
        EstimatorSpec e;
        e.kind = parse_enum(get_string(c, "kind", "hutchinson", p), {EstimatorKind::hutchinson, EstimatorKind::gnb},
                            p + ".kind");
        e.n_samples = get_count(c, "n_samples", 1, p);
        e.every = cadence_from(c, "every_k", p);
        s.estimator = e;
    }
    if (j.contains("telemetry")) {
        const Json& c = j.at("telemetry");
        const std::string p = path + ".telemetry";
        require_object(c, p, {"rho_every_k", "trace_every_k", "top_eig_every_k", "trace_probes", "power_iters"});
        s.telemetry.rho_every_k = cadence_from(c, "rho_every_k", p);
        s.telemetry.trace_every_k = cadence_from(c, "trace_every_k", p);
        s.telemetry.top_eig_every_k = cadence_from(c, "top_eig_every_k", p);
        s.telemetry.trace_probes = get_count(c, "trace_probes", 1, p);
        s.telemetry.power_iters = get_count(c, "power_iters", 10, p);
    }
    if (j.contains("chain")) {
        const Json& c = j.at("chain");
        if (!c.is_array()) bad(path + ".chain", "expected an array of links");
        for (std::size_t i = 0; i < c.size(); ++i)
            s.chain.links.push_back(link_from_json(c[i], path + ".chain[" + std::to_string(i) + "]"));
    }
    return s;
}

MethodSpec preset_with_overrides(std::string_view preset, const Json& overrides) {
    Json doc = to_json(preset_spec(preset));
    if (overrides.is_null()) return method_spec_from_json(doc);
    if (!overrides.is_object()) bad("overrides", "expected an object");
    Json patch = overrides;
    Json sched_patch = Json::object();
    if (patch.contains("schedule")) {
        if (!patch.at("schedule").is_object()) bad("overrides.schedule", "expected an object");
        sched_patch = patch.at("schedule");
        patch.erase("schedule");
    }
    if (patch.contains("lr")) {
        if (!patch.at("lr").is_number()) bad("overrides.lr", "expected a number");
        sched_patch["init_value"] = patch.at("lr");
        patch.erase("lr");
    }
    doc.merge_patch(patch);
    if (!sched_patch.empty()) {
        bool found = false;
        for (Json& link : doc.at("chain"))
            if (link.value("kind", "") == "scale_by_schedule") {
                link["schedule"].merge_patch(sched_patch);
                found = true;
                break;
            }
        if (!found) bad("overrides", "'lr'/'schedule' given but the chain has no scale_by_schedule link");
    }
    return method_spec_from_json(doc);
}

Method assemble_or_throw(const MethodSpec& spec, const Model& model) {
    auto r = assemble(spec, model);
    if (auto* err = std::get_if<AssemblyError>(&r)) throw AssemblyFailure(*err);
    return std::get<Method>(std::move(r));
}

Method make(std::string_view preset, const Model& model, const Json& overrides) {
    return assemble_or_throw(preset_with_overrides(preset, overrides), model);
}

}  // namespace curvstep
