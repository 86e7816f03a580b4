#include "curvstep/estimators.hpp"

#include <cmath>

namespace curvstep {

ParamVector hutchinson_diag(const Matvec& matvec, Rng& rng, const LayoutPtr& layout, std::size_t n_probes) {
    CURVSTEP_REQUIRE(n_probes >= 1, "hutchinson_diag: n_probes must be at least 1");
    ParamVector acc(layout);
    for (std::size_t p = 0; p < n_probes; ++p) {
        const ParamVector z(layout, rademacher(rng, layout->size()));
        const ParamVector hz = matvec(z);
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += z[i] * hz[i];
    }
    acc *= 1.0 / static_cast<double>(n_probes);
    return acc;
}

double hutchinson_trace(const Matvec& matvec, Rng& rng, const LayoutPtr& layout, std::size_t n_probes) {
    CURVSTEP_REQUIRE(n_probes >= 1, "hutchinson_trace: n_probes must be at least 1");
    double acc = 0.0;
    for (std::size_t p = 0; p < n_probes; ++p) {
        const ParamVector z(layout, rademacher(rng, layout->size()));
        acc += dot(z, matvec(z));
    }
    return acc / static_cast<double>(n_probes);
}

double power_iter_top_eig(const Matvec& matvec, Rng& rng, const LayoutPtr& layout, std::size_t iters) {
    CURVSTEP_REQUIRE(iters >= 1, "power_iter_top_eig: iters must be at least 1");
    ParamVector v(layout);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = rng.normal();
    v *= 1.0 / global_norm(v);
    double eig = 0.0;
    for (std::size_t k = 0; k < iters; ++k) {
        ParamVector hv = matvec(v);
        eig = dot(v, hv);
        const double n = global_norm(hv);
        if (n == 0.0 || !std::isfinite(n)) return n == 0.0 ? 0.0 : eig;
        v = std::move(hv);
        v *= 1.0 / n;
    }
    return eig;
}

ParamVector gnb_diag(const Linearization& lin, Rng& rng, std::size_t n_samples) {
    CURVSTEP_REQUIRE(lin.batch().loss_kind == LossKind::ce, "gnb_diag requires a cross-entropy batch");
    CURVSTEP_REQUIRE(n_samples >= 1, "gnb_diag: n_samples must be at least 1");
    const Eigen::MatrixXd& p = lin.probs();
    const auto b = static_cast<double>(lin.batch_size());
    ParamVector acc(lin.model().layout());
    for (std::size_t s = 0; s < n_samples; ++s) {
        Eigen::MatrixXd cot = p;
        for (Eigen::Index i = 0; i < p.cols(); ++i) {
            const double u = rng.uniform();
            double cum = 0.0;
            Eigen::Index label = p.rows() - 1;
            for (Eigen::Index k = 0; k < p.rows(); ++k) {
                cum += p(k, i);
                if (u < cum) {
                    label = k;
                    break;
                }
            }
            cot(label, i) -= 1.0;
        }
        const ParamVector g = lin.vjp(cot / b);
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += b * g[i] * g[i];
    }
    acc *= 1.0 / static_cast<double>(n_samples);
    return acc;
}

ParamVector gnb_diag(const Model& model, const ParamVector& w, const Batch& batch, Rng& rng, std::size_t n_samples) {
    CURVSTEP_REQUIRE(batch.loss_kind == LossKind::ce, "gnb_diag requires a cross-entropy batch");
    return gnb_diag(Linearization(model, w, batch, /*with_grad=*/false), rng, n_samples);
}

}  // namespace curvstep
