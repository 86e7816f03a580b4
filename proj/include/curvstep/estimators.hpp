#pragma once

#include <cstddef>

#include "curvstep/curvature.hpp"
#include "curvstep/model.hpp"
#include "curvstep/numeric.hpp"

namespace curvstep {

// Randomized curvature summaries that only consume a matvec. None of them
// build a new linearization.

/// (1/n) sum_z z * (H z) over Rademacher probes.
ParamVector hutchinson_diag(const Matvec& matvec, Rng& rng, const LayoutPtr& layout, std::size_t n_probes);

/// (1/n) sum_z z^T H z over Rademacher probes.
double hutchinson_trace(const Matvec& matvec, Rng& rng, const LayoutPtr& layout, std::size_t n_probes);

/// Rayleigh quotient after `iters` normalized power iterations from a
/// random start. Returns 0 for the zero operator.
double power_iter_top_eig(const Matvec& matvec, Rng& rng, const LayoutPtr& layout, std::size_t iters);

/// Gauss-Newton-Bartlett diagonal: labels resampled from the model's own
/// softmax, b * g_hat^2 averaged over rounds. Reuses `lin`.
ParamVector gnb_diag(const Linearization& lin, Rng& rng, std::size_t n_samples);

ParamVector gnb_diag(const Model& model, const ParamVector& w, const Batch& batch, Rng& rng, std::size_t n_samples);

}  // namespace curvstep
