#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <optional>
#include <stdexcept>

#include "curvstep/numeric.hpp"

namespace curvstep {

/// Floor applied to diagonal curvature estimates before inversion.
inline constexpr double kDefaultDiagFloor = 1e-12;

struct CgConfig {
    double tol = 1e-5;                 // relative residual target
    std::size_t maxiter = 10;
    std::size_t stabilise_every = 0;   // refresh the true residual every k iterations; 0 = never
    bool warm_start = false;
    double diag_floor = kDefaultDiagFloor;

    void validate() const;
    bool operator==(const CgConfig&) const = default;
};

enum class CgStop { converged, max_iterations, negative_curvature, non_finite, zero_rhs };

const char* to_string(CgStop s);

struct SolveResult {
    ParamVector direction;
    std::size_t iterations = 0;
    bool converged = false;
    double final_relative_residual = 0.0;
    CgStop stop = CgStop::max_iterations;
};

struct RowSolveResult {
    Eigen::VectorXd solution;
    std::size_t iterations = 0;
    bool converged = false;
    double final_relative_residual = 0.0;
    CgStop stop = CgStop::max_iterations;
};

/// Row-space Cholesky failed: the damped Gram matrix is not positive definite.
class FactorizationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// s_i = g_i / (max(diag_i, floor) + lam)
ParamVector solve_diag(const ParamVector& diag, const ParamVector& g, double lam, double floor = kDefaultDiagFloor);

/// (P)CG on (H + lam I) s = g. With `precond`, M = max(precond, floor) + lam.
SolveResult cg_solve(const std::function<ParamVector(const ParamVector&)>& matvec, const ParamVector& g, double lam,
                     const CgConfig& config, const std::optional<ParamVector>& precond = std::nullopt,
                     const std::optional<ParamVector>& x0 = std::nullopt);

/// Solves (gram + mu I) v = rhs by Cholesky.
Eigen::VectorXd row_solve_cholesky(const Eigen::MatrixXd& gram, const Eigen::VectorXd& rhs, double mu);

RowSolveResult row_solve_cg(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& gram_matvec,
                            const Eigen::VectorXd& rhs, double mu, const CgConfig& config,
                            const std::optional<Eigen::VectorXd>& x0 = std::nullopt);

/// mu = b * lam: row-space damping equivalent to lam under mean reduction.
double damping_to_row(double lam, std::size_t b);

}  // namespace curvstep
