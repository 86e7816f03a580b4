#include "curvstep/solvers.hpp"

#include <algorithm>
#include <cmath>

namespace curvstep {

namespace {

// Vector operations the CG template needs, for both vector spaces.
double vdot(const ParamVector& a, const ParamVector& b) { return dot(a, b); }
double vdot(const Eigen::VectorXd& a, const Eigen::VectorXd& b) { return a.dot(b); }
void vaxpy(double alpha, const ParamVector& x, ParamVector& y) { axpy(alpha, x, y); }
void vaxpy(double alpha, const Eigen::VectorXd& x, Eigen::VectorXd& y) { y += alpha * x; }
bool vfinite(const ParamVector& a) { return a.all_finite(); }
bool vfinite(const Eigen::VectorXd& a) { return a.allFinite(); }
ParamVector vzeros(const ParamVector& like) { return ParamVector::zeros_like(like); }
Eigen::VectorXd vzeros(const Eigen::VectorXd& like) { return Eigen::VectorXd::Zero(like.size()); }
std::size_t vsize(const ParamVector& a) { return a.size(); }
std::size_t vsize(const Eigen::VectorXd& a) { return static_cast<std::size_t>(a.size()); }
double& vat(ParamVector& a, std::size_t i) { return a[i]; }
double& vat(Eigen::VectorXd& a, std::size_t i) { return a(static_cast<Eigen::Index>(i)); }
double vat(const ParamVector& a, std::size_t i) { return a[i]; }
double vat(const Eigen::VectorXd& a, std::size_t i) { return a(static_cast<Eigen::Index>(i)); }

template <class Vec>
struct CgOutcome {
    Vec x;
    std::size_t iterations = 0;
    double rel_residual = 0.0;
    CgStop stop = CgStop::max_iterations;
};

// Preconditioned CG on A = op + lam I. `inv_m` (may be empty) holds 1/M.
template <class Vec, class Op>
CgOutcome<Vec> conjugate_gradient(const Op& op, const Vec& b, double lam, const CgConfig& cfg, const Vec* inv_m,
                                  const Vec* x0) {
    auto apply = [&](const Vec& v) {
        Vec out = op(v);
        if (lam != 0.0) vaxpy(lam, v, out);
        return out;
    };
    auto precondition = [&](const Vec& r) {
        Vec z = r;
        if (inv_m)
            for (std::size_t i = 0; i < vsize(z); ++i) vat(z, i) *= vat(*inv_m, i);
        return z;
    };

    CgOutcome<Vec> out;
    const double bnorm = std::sqrt(vdot(b, b));
    out.x = x0 ? *x0 : vzeros(b);
    if (bnorm == 0.0) {
        out.x = vzeros(b);
        out.stop = CgStop::zero_rhs;
        return out;
    }
    if (!std::isfinite(bnorm)) {
        out.stop = CgStop::non_finite;
        return out;
    }
    const double target = cfg.tol * bnorm;

    Vec r = b;
    if (x0) vaxpy(-1.0, apply(out.x), r);
    double rnorm = std::sqrt(vdot(r, r));
    out.rel_residual = rnorm / bnorm;
    if (rnorm <= target) {
        out.stop = CgStop::converged;
        return out;
    }

    Vec z = precondition(r);
    Vec p = z;
    double rz = vdot(r, z);
    for (std::size_t k = 1; k <= cfg.maxiter; ++k) {
        const Vec ap = apply(p);
        const double pap = vdot(p, ap);
        if (!std::isfinite(pap)) {
            out.stop = CgStop::non_finite;
            return out;
        }
        if (pap <= 0.0) {
            out.stop = CgStop::negative_curvature;
            return out;
        }
        const double alpha = rz / pap;
        Vec x_next = out.x;
        vaxpy(alpha, p, x_next);
        if (!vfinite(x_next)) {
            out.stop = CgStop::non_finite;
            return out;
        }
        out.x = std::move(x_next);
        out.iterations = k;
        if (cfg.stabilise_every > 0 && k % cfg.stabilise_every == 0) {
            r = b;
            vaxpy(-1.0, apply(out.x), r);
        } else {
            vaxpy(-alpha, ap, r);
        }
        rnorm = std::sqrt(vdot(r, r));
        out.rel_residual = rnorm / bnorm;
        if (rnorm <= target) {
            out.stop = CgStop::converged;
            return out;
        }
        z = precondition(r);
        const double rz_next = vdot(r, z);
        const double beta = rz_next / rz;
        rz = rz_next;
        for (std::size_t i = 0; i < vsize(p); ++i) vat(p, i) = vat(z, i) + beta * vat(p, i);
    }
    out.stop = CgStop::max_iterations;
    return out;
}

}  // namespace

void CgConfig::validate() const {
    CURVSTEP_REQUIRE(tol > 0.0, "CgConfig: tol must be positive");
    CURVSTEP_REQUIRE(maxiter >= 1, "CgConfig: maxiter must be at least 1");
    CURVSTEP_REQUIRE(diag_floor > 0.0, "CgConfig: diag_floor must be positive");
}

const char* to_string(CgStop s) {
    switch (s) {
        case CgStop::converged: return "converged";
        case CgStop::max_iterations: return "max_iterations";
        case CgStop::negative_curvature: return "negative_curvature";
        case CgStop::non_finite: return "non_finite";
        case CgStop::zero_rhs: return "zero_rhs";
    }
    return "?";
}

ParamVector solve_diag(const ParamVector& diag, const ParamVector& g, double lam, double floor) {
    require_same_layout(diag, g);
    ParamVector s = g;
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = g[i] / (std::max(diag[i], floor) + lam);
    return s;
}

SolveResult cg_solve(const std::function<ParamVector(const ParamVector&)>& matvec, const ParamVector& g, double lam,
                     const CgConfig& config, const std::optional<ParamVector>& precond,
                     const std::optional<ParamVector>& x0) {
    config.validate();
    std::optional<ParamVector> inv_m;
    if (precond) {
        require_same_layout(*precond, g);
        inv_m = ParamVector::zeros_like(g);
        for (std::size_t i = 0; i < g.size(); ++i) (*inv_m)[i] = 1.0 / (std::max((*precond)[i], config.diag_floor) + lam);
    }
    const ParamVector* start = nullptr;
    if (x0 && config.warm_start) {
        require_same_layout(*x0, g);
        start = &*x0;
    }
    auto res = conjugate_gradient(matvec, g, lam, config, inv_m ? &*inv_m : nullptr, start);
    SolveResult out;
    out.direction = std::move(res.x);
    out.iterations = res.iterations;
    out.stop = res.stop;
    out.converged = res.stop == CgStop::converged || res.stop == CgStop::zero_rhs;
    out.final_relative_residual = res.rel_residual;
    return out;
}

Eigen::VectorXd row_solve_cholesky(const Eigen::MatrixXd& gram, const Eigen::VectorXd& rhs, double mu) {
    CURVSTEP_REQUIRE(gram.rows() == gram.cols() && gram.rows() == rhs.size(), "row_solve_cholesky: shape mismatch");
    CURVSTEP_REQUIRE(mu >= 0.0, "row_solve_cholesky: mu must be non-negative");
    Eigen::MatrixXd a = gram;
    a.diagonal().array() += mu;
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() != Eigen::Success)
        throw FactorizationError("row Cholesky failed: damped Gram matrix is not positive definite (mu too small?)");
    Eigen::VectorXd v = llt.solve(rhs);
    if (!v.allFinite()) throw FactorizationError("row Cholesky produced non-finite solution");
    return v;
}

RowSolveResult row_solve_cg(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& gram_matvec,
                            const Eigen::VectorXd& rhs, double mu, const CgConfig& config,
                            const std::optional<Eigen::VectorXd>& x0) {
    config.validate();
    const Eigen::VectorXd* start = nullptr;
    if (x0 && config.warm_start && x0->size() == rhs.size()) start = &*x0;
    auto res = conjugate_gradient(gram_matvec, rhs, mu, config, static_cast<const Eigen::VectorXd*>(nullptr), start);
    RowSolveResult out;
    out.solution = std::move(res.x);
    out.iterations = res.iterations;
    out.stop = res.stop;
    out.converged = res.stop == CgStop::converged || res.stop == CgStop::zero_rhs;
    out.final_relative_residual = res.rel_residual;
    return out;
}

double damping_to_row(double lam, std::size_t b) {
    CURVSTEP_REQUIRE(lam >= 0.0 && b >= 1, "damping_to_row: need lam >= 0 and b >= 1");
    return static_cast<double>(b) * lam;
}

}  // namespace curvstep
