#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>

#include "curvstep/model.hpp"
#include "curvstep/numeric.hpp"

namespace curvstep {

/// `none` is the degenerate operator used by first-order presets: the
/// snapshot carries loss and gradient only.
enum class CurvatureKind { none, hessian, ggn_mse, ggn_ce };

const char* to_string(CurvatureKind k);
std::optional<CurvatureKind> curvature_kind_from_string(std::string_view s);

bool has_row_primitives(CurvatureKind k);
bool compatible(CurvatureKind k, LossKind loss);

using Matvec = std::function<ParamVector(const ParamVector&)>;

/// Step-local linearization state. Built once per optimizer step; every
/// curvature product, row primitive and post-update probe of that step
/// reads from the same cached forward/backward pass.
class Snapshot {
public:
    CurvatureKind kind() const { return kind_; }
    double loss_before() const { return lin_->loss(); }
    const ParamVector& grad() const { return lin_->grad(); }
    std::size_t batch_size() const { return lin_->batch_size(); }
    const Linearization& linearization() const { return *lin_; }

    /// H v without damping.
    ParamVector matvec(const ParamVector& v) const;
    /// The matvec as a standalone closure sharing this snapshot's state.
    Matvec op() const;

    bool has_rows() const { return has_row_primitives(kind_); }
    /// Row-space dimension m (b * output_dim).
    std::size_t row_dim() const;
    /// \hat J v, length m.
    Eigen::VectorXd scaled_row_apply(const ParamVector& v) const;
    /// \hat J^T u.
    ParamVector scaled_row_transpose(const Eigen::VectorXd& u) const;
    /// Row RHS \hat r with grad = (1/b) \hat J^T \hat r.
    const Eigen::VectorXd& row_rhs() const;
    /// Per-example symmetric square root of the output Hessian (CE only),
    /// stacked as (c, c*b).
    const Eigen::MatrixXd& output_hessian_sqrt() const { return sqrt_hz_; }

private:
    friend Snapshot make_snapshot(CurvatureKind, const Model&, const ParamVector&, const Batch&);

    void require_rows(const char* op) const;
    Eigen::MatrixXd scale_columns(const Eigen::MatrixXd& m) const;

    CurvatureKind kind_ = CurvatureKind::none;
    std::shared_ptr<const Linearization> lin_;
    Eigen::MatrixXd sqrt_hz_;
    Eigen::VectorXd rhs_;
};

Snapshot make_snapshot(CurvatureKind kind, const Model& model, const ParamVector& w, const Batch& batch);

/// Number of snapshots built on the calling thread since the last reset.
std::uint64_t snapshot_count();
void reset_snapshot_count();

ParamVector ggn_matvec(const Snapshot& s, const ParamVector& v);
ParamVector hessian_matvec(const Snapshot& s, const ParamVector& v);
/// Dense m x m Gram matrix \hat J \hat J^T.
Eigen::MatrixXd row_gram(const Snapshot& s);
/// \hat J^T v_row.
ParamVector backproject(const Snapshot& s, const Eigen::VectorXd& v_row);

}  // namespace curvstep
