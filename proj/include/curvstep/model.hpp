#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <vector>

#include "curvstep/numeric.hpp"

namespace curvstep {

enum class Activation { relu, tanh };
enum class LossKind { mse, ce };

const char* to_string(Activation a);
const char* to_string(LossKind k);

/// Dense MLP with bias on every layer, activation on hidden layers only and
/// a linear output layer. Weights are stored row-major as (fan_out, fan_in).
class Model {
public:
    Model(std::size_t input_dim, std::vector<std::size_t> hidden_widths, std::size_t output_dim,
          Activation activation = Activation::relu);

    std::size_t input_dim() const { return input_dim_; }
    std::size_t output_dim() const { return output_dim_; }
    const std::vector<std::size_t>& hidden_widths() const { return hidden_; }
    Activation activation() const { return activation_; }

    std::size_t num_layers() const { return hidden_.size() + 1; }
    std::size_t fan_in(std::size_t layer) const;
    std::size_t fan_out(std::size_t layer) const;
    std::size_t param_count() const { return layout_->size(); }
    const LayoutPtr& layout() const { return layout_; }

    /// He (relu) or Glorot-style (tanh) normal init, zero biases.
    ParamVector init_params(Rng& rng) const;

    bool operator==(const Model& o) const {
        return input_dim_ == o.input_dim_ && hidden_ == o.hidden_ && output_dim_ == o.output_dim_ &&
               activation_ == o.activation_;
    }

private:
    std::size_t input_dim_;
    std::vector<std::size_t> hidden_;
    std::size_t output_dim_;
    Activation activation_;
    LayoutPtr layout_;
};

/// A mini-batch. `inputs` is (b, input_dim). MSE batches carry `targets`
/// (b, output_dim); CE batches carry class indices in `labels`.
struct Batch {
    Eigen::MatrixXd inputs;
    Eigen::MatrixXd targets;
    std::vector<int> labels;
    LossKind loss_kind = LossKind::mse;

    std::size_t size() const { return static_cast<std::size_t>(inputs.rows()); }

    static Batch mse(Eigen::MatrixXd x, Eigen::MatrixXd y);
    static Batch ce(Eigen::MatrixXd x, std::vector<int> labels);
};

void validate_batch(const Model& model, const Batch& batch);

/// Cached forward (and optionally reverse) pass at a fixed (w, batch).
/// All derivative primitives below reuse it; internal matrices are
/// feature-major, i.e. (features, b).
class Linearization {
public:
    Linearization(const Model& model, const ParamVector& w, const Batch& batch, bool with_grad = true);

    const Model& model() const { return model_; }
    const ParamVector& params() const { return w_; }
    const Batch& batch() const { return batch_; }
    std::size_t batch_size() const { return batch_.size(); }

    double loss() const { return loss_; }
    /// (output_dim, b) network outputs.
    const Eigen::MatrixXd& outputs() const { return act_.back(); }
    /// Softmax probabilities (CE only), (c, b).
    const Eigen::MatrixXd& probs() const { return probs_; }
    /// dL/dz for the mean loss, (output_dim, b).
    const Eigen::MatrixXd& output_grad() const { return out_grad_; }
    const ParamVector& grad() const;

    /// J v for every example, (output_dim, b).
    Eigen::MatrixXd jvp(const ParamVector& v) const;
    /// sum_i J_i^T U[:, i].
    ParamVector vjp(const Eigen::MatrixXd& cotangent) const;
    /// Per-layer backpropagated cotangents without the batch reduction;
    /// entry l is (fan_out(l), b).
    std::vector<Eigen::MatrixXd> backprop_columns(const Eigen::MatrixXd& cotangent) const;
    /// Layer input activations, entry l is (fan_in(l), b).
    const Eigen::MatrixXd& layer_input(std::size_t l) const { return act_[l]; }

    /// Applies the per-example output Hessian of the loss (no 1/b).
    Eigen::MatrixXd apply_output_hessian(const Eigen::MatrixXd& tangent) const;
    /// Exact Hessian-vector product of the mean loss (forward-over-reverse).
    ParamVector hvp(const ParamVector& v) const;
    /// (1/b) sum_i J_i^T H_{z,i} J_i v.
    ParamVector ggn_matvec(const ParamVector& v) const;

private:
    void backward_into(const Eigen::MatrixXd& out_cotangent, ParamVector& grad,
                       std::vector<Eigen::MatrixXd>* keep_layer_grads,
                       std::vector<Eigen::MatrixXd>* keep_hidden_grads) const;

    Model model_;
    ParamVector w_;
    Batch batch_;
    std::vector<Eigen::MatrixXd> act_;  // act_[0] = X^T, act_[l] = sigma(z_l), act_[L] = z_L
    Eigen::MatrixXd probs_;
    Eigen::MatrixXd out_grad_;
    double loss_ = 0.0;
    bool has_grad_ = false;
    ParamVector grad_;
    std::vector<Eigen::MatrixXd> layer_g_;   // dL/dz_l, l = 0..L-1
    std::vector<Eigen::MatrixXd> hidden_g_;  // dL/dh_l before the activation derivative
};

/// (b, output_dim) outputs.
Eigen::MatrixXd forward(const Model& model, const ParamVector& w, const Eigen::MatrixXd& inputs);

double loss_value(const Model& model, const ParamVector& w, const Batch& batch);

struct LossAndGrad {
    double loss;
    ParamVector grad;
};

LossAndGrad loss_and_grad(const Model& model, const ParamVector& w, const Batch& batch);
ParamVector hvp(const Model& model, const ParamVector& w, const Batch& batch, const ParamVector& v);
/// (b, output_dim); row i is J_i v.
Eigen::MatrixXd jvp_outputs(const Model& model, const ParamVector& w, const Batch& batch, const ParamVector& v);
/// U is (b, output_dim); returns sum_i J_i^T U_i with no 1/b factor.
ParamVector vjp_outputs(const Model& model, const ParamVector& w, const Batch& batch, const Eigen::MatrixXd& U);

}  // namespace curvstep
