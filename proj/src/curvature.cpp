#include "curvstep/curvature.hpp"

#include <cmath>
#include <string>

namespace curvstep {

namespace {

thread_local std::uint64_t g_snapshot_count = 0;

// Relative cutoff below which output-Hessian eigenvalues count as zero.
constexpr double kEigCutoff = 1e-10;

}  // namespace

const char* to_string(CurvatureKind k) {
    switch (k) {
        case CurvatureKind::none: return "none";
        case CurvatureKind::hessian: return "hessian";
        case CurvatureKind::ggn_mse: return "ggn_mse";
        case CurvatureKind::ggn_ce: return "ggn_ce";
    }
    return "?";
}

std::optional<CurvatureKind> curvature_kind_from_string(std::string_view s) {
    for (auto k : {CurvatureKind::none, CurvatureKind::hessian, CurvatureKind::ggn_mse, CurvatureKind::ggn_ce})
        if (s == to_string(k)) return k;
    return std::nullopt;
}

bool has_row_primitives(CurvatureKind k) { return k == CurvatureKind::ggn_mse || k == CurvatureKind::ggn_ce; }

bool compatible(CurvatureKind k, LossKind loss) {
    switch (k) {
        case CurvatureKind::ggn_mse: return loss == LossKind::mse;
        case CurvatureKind::ggn_ce: return loss == LossKind::ce;
        default: return true;
    }
}

std::uint64_t snapshot_count() { return g_snapshot_count; }
void reset_snapshot_count() { g_snapshot_count = 0; }

Snapshot make_snapshot(CurvatureKind kind, const Model& model, const ParamVector& w, const Batch& batch) {
    CURVSTEP_REQUIRE(compatible(kind, batch.loss_kind),
                     std::string("curvature ") + to_string(kind) + " is incompatible with loss " +
                         to_string(batch.loss_kind));
    ++g_snapshot_count;
    Snapshot s;
    s.kind_ = kind;
    s.lin_ = std::make_shared<const Linearization>(model, w, batch);
    const Linearization& lin = *s.lin_;
    const auto b = static_cast<double>(lin.batch_size());

    if (kind == CurvatureKind::ggn_mse) {
        const Eigen::MatrixXd r = lin.output_grad() * b;  // z - y
        s.rhs_ = Eigen::Map<const Eigen::VectorXd>(r.data(), r.size());
    } else if (kind == CurvatureKind::ggn_ce) {
        const Eigen::MatrixXd& p = lin.probs();
        const Eigen::Index c = p.rows();
        const Eigen::Index n = p.cols();
        s.sqrt_hz_.resize(c, c * n);
        s.rhs_.resize(c * n);
        const Eigen::MatrixXd resid = lin.output_grad() * b;  // p - onehot(y)
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig;
        for (Eigen::Index i = 0; i < n; ++i) {
            const Eigen::VectorXd pi = p.col(i);
            Eigen::MatrixXd hz = -pi * pi.transpose();
            hz.diagonal() += pi;
            eig.compute(hz);
            const Eigen::VectorXd& lam = eig.eigenvalues();
            const double cutoff = kEigCutoff * std::max(lam.maxCoeff(), 0.0);
            Eigen::VectorXd root(c), pinv_root(c);
            for (Eigen::Index k = 0; k < c; ++k) {
                const bool keep = lam(k) > cutoff && lam(k) > 0.0;
                root(k) = keep ? std::sqrt(lam(k)) : 0.0;
                pinv_root(k) = keep ? 1.0 / std::sqrt(lam(k)) : 0.0;
            }
            const Eigen::MatrixXd& q = eig.eigenvectors();
            s.sqrt_hz_.middleCols(i * c, c) = q * root.asDiagonal() * q.transpose();
            s.rhs_.segment(i * c, c) = q * (pinv_root.asDiagonal() * (q.transpose() * resid.col(i)));
        }
    }
    return s;
}

ParamVector Snapshot::matvec(const ParamVector& v) const {
    switch (kind_) {
        case CurvatureKind::hessian: return lin_->hvp(v);
        case CurvatureKind::ggn_mse:
        case CurvatureKind::ggn_ce: return lin_->ggn_matvec(v);
        case CurvatureKind::none: break;
    }
    throw ContractError("matvec is unavailable for a first-order (none) snapshot");
}

Matvec Snapshot::op() const {
    Snapshot copy = *this;
    return [copy](const ParamVector& v) { return copy.matvec(v); };
}

void Snapshot::require_rows(const char* op) const {
    CURVSTEP_REQUIRE(has_rows(), std::string(op) + ": row primitives require a GGN curvature, got " + to_string(kind_));
}

std::size_t Snapshot::row_dim() const {
    require_rows("row_dim");
    return lin_->batch_size() * lin_->model().output_dim();
}

Eigen::MatrixXd Snapshot::scale_columns(const Eigen::MatrixXd& m) const {
    if (kind_ != CurvatureKind::ggn_ce) return m;
    const Eigen::Index c = m.rows();
    Eigen::MatrixXd out(c, m.cols());
    for (Eigen::Index i = 0; i < m.cols(); ++i) out.col(i).noalias() = sqrt_hz_.middleCols(i * c, c) * m.col(i);
    return out;
}

Eigen::VectorXd Snapshot::scaled_row_apply(const ParamVector& v) const {
    require_rows("scaled_row_apply");
    const Eigen::MatrixXd t = scale_columns(lin_->jvp(v));
    return Eigen::Map<const Eigen::VectorXd>(t.data(), t.size());
}

ParamVector Snapshot::scaled_row_transpose(const Eigen::VectorXd& u) const {
    require_rows("scaled_row_transpose");
    CURVSTEP_REQUIRE(static_cast<std::size_t>(u.size()) == row_dim(), "row vector length does not match row dimension");
    const auto c = static_cast<Eigen::Index>(lin_->model().output_dim());
    const Eigen::MatrixXd u_mat = Eigen::Map<const Eigen::MatrixXd>(u.data(), c, u.size() / c);
    return lin_->vjp(scale_columns(u_mat));
}

const Eigen::VectorXd& Snapshot::row_rhs() const {
    require_rows("row_rhs");
    return rhs_;
}

ParamVector ggn_matvec(const Snapshot& s, const ParamVector& v) {
    CURVSTEP_REQUIRE(has_row_primitives(s.kind()), std::string("ggn_matvec needs a GGN snapshot, got ") + to_string(s.kind()));
    return s.matvec(v);
}

ParamVector hessian_matvec(const Snapshot& s, const ParamVector& v) {
    CURVSTEP_REQUIRE(s.kind() == CurvatureKind::hessian,
                     std::string("hessian_matvec needs a hessian snapshot, got ") + to_string(s.kind()));
    return s.matvec(v);
}

Eigen::MatrixXd row_gram(const Snapshot& s) {
    CURVSTEP_REQUIRE(s.has_rows(), std::string("row_gram needs a GGN snapshot, got ") + to_string(s.kind()));
    const Linearization& lin = s.linearization();
    const Model& model = lin.model();
    const auto c = static_cast<Eigen::Index>(model.output_dim());
    const auto n = static_cast<Eigen::Index>(lin.batch_size());
    const Eigen::Index m = c * n;
    const std::size_t L = model.num_layers();

    // Row (i, k) of \hat J restricted to layer l is the outer product
    // g_{l,ik} h_{l,i}^T (weights) plus g_{l,ik} (bias), so
    // <row(i,k), row(j,k')> = sum_l <g_{l,ik}, g_{l,jk'}> (<h_{l,i}, h_{l,j}> + 1).
    std::vector<Eigen::MatrixXd> stacked(L);
    for (std::size_t l = 0; l < L; ++l) stacked[l].resize(static_cast<Eigen::Index>(model.fan_out(l)), m);
    for (Eigen::Index k = 0; k < c; ++k) {
        Eigen::MatrixXd cot = Eigen::MatrixXd::Zero(c, n);
        if (s.kind() == CurvatureKind::ggn_ce) {
            for (Eigen::Index i = 0; i < n; ++i) cot.col(i) = s.output_hessian_sqrt().col(i * c + k);
        } else {
            cot.row(k).setOnes();
        }
        const auto cols = lin.backprop_columns(cot);
        for (std::size_t l = 0; l < L; ++l)
            for (Eigen::Index i = 0; i < n; ++i) stacked[l].col(i * c + k) = cols[l].col(i);
    }

    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(m, m);
    for (std::size_t l = 0; l < L; ++l) {
        const Eigen::MatrixXd& h = lin.layer_input(l);
        Eigen::MatrixXd kernel = h.transpose() * h;
        kernel.array() += 1.0;
        Eigen::MatrixXd inner(m, m);
        inner.noalias() = stacked[l].transpose() * stacked[l];
        for (Eigen::Index j = 0; j < m; ++j)
            for (Eigen::Index i = 0; i < m; ++i) gram(i, j) += inner(i, j) * kernel(i / c, j / c);
    }
    return gram;
}

ParamVector backproject(const Snapshot& s, const Eigen::VectorXd& v_row) {
    return s.scaled_row_transpose(v_row);
}

}  // namespace curvstep
