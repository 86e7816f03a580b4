#include "curvstep/model.hpp"

#include <cmath>
#include <string>

namespace curvstep {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstWeightMap = Eigen::Map<const RowMatrix>;
using WeightMap = Eigen::Map<RowMatrix>;
using ConstBiasMap = Eigen::Map<const Eigen::VectorXd>;
using BiasMap = Eigen::Map<Eigen::VectorXd>;

ConstWeightMap weight(const Model& m, const ParamVector& w, std::size_t l) {
    return ConstWeightMap(w.block(2 * l).data(), static_cast<Eigen::Index>(m.fan_out(l)),
                          static_cast<Eigen::Index>(m.fan_in(l)));
}

ConstBiasMap bias(const Model& m, const ParamVector& w, std::size_t l) {
    return ConstBiasMap(w.block(2 * l + 1).data(), static_cast<Eigen::Index>(m.fan_out(l)));
}

WeightMap weight(const Model& m, ParamVector& w, std::size_t l) {
    return WeightMap(w.block(2 * l).data(), static_cast<Eigen::Index>(m.fan_out(l)),
                     static_cast<Eigen::Index>(m.fan_in(l)));
}

BiasMap bias(const Model& m, ParamVector& w, std::size_t l) {
    return BiasMap(w.block(2 * l + 1).data(), static_cast<Eigen::Index>(m.fan_out(l)));
}

// Activation derivatives expressed through the activation output h = sigma(z).
// relu'(0) is taken as 0.
Eigen::MatrixXd act_deriv(Activation a, const Eigen::MatrixXd& h) {
    if (a == Activation::relu) return (h.array() > 0.0).cast<double>().matrix();
    return (1.0 - h.array().square()).matrix();
}

Eigen::MatrixXd act_second_deriv(Activation a, const Eigen::MatrixXd& h) {
    if (a == Activation::relu) return Eigen::MatrixXd::Zero(h.rows(), h.cols());
    return (-2.0 * h.array() * (1.0 - h.array().square())).matrix();
}

void apply_activation(Activation a, Eigen::MatrixXd& z) {
    if (a == Activation::relu)
        z = z.cwiseMax(0.0);
    else
        z = z.array().tanh().matrix();
}

std::vector<Eigen::MatrixXd> forward_acts(const Model& m, const ParamVector& w, Eigen::MatrixXd xt) {
    CURVSTEP_REQUIRE(same_layout(m.layout(), w.layout()), "parameter layout does not match model");
    CURVSTEP_REQUIRE(static_cast<std::size_t>(xt.rows()) == m.input_dim(), "forward: input width does not match model");
    std::vector<Eigen::MatrixXd> acts;
    acts.reserve(m.num_layers() + 1);
    acts.push_back(std::move(xt));
    for (std::size_t l = 0; l < m.num_layers(); ++l) {
        Eigen::MatrixXd z = weight(m, w, l) * acts.back();
        z.colwise() += bias(m, w, l);
        if (l + 1 < m.num_layers()) apply_activation(m.activation(), z);
        acts.push_back(std::move(z));
    }
    return acts;
}

}  // namespace

const char* to_string(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }
const char* to_string(LossKind k) { return k == LossKind::mse ? "mse" : "ce"; }

Model::Model(std::size_t input_dim, std::vector<std::size_t> hidden_widths, std::size_t output_dim,
             Activation activation)
    : input_dim_(input_dim), hidden_(std::move(hidden_widths)), output_dim_(output_dim), activation_(activation) {
    CURVSTEP_REQUIRE(input_dim_ >= 1 && output_dim_ >= 1, "Model: dimensions must be positive");
    std::vector<LayerShape> shapes;
    for (std::size_t l = 0; l < num_layers(); ++l) {
        CURVSTEP_REQUIRE(fan_out(l) >= 1, "Model: hidden widths must be positive");
        const std::string name = "dense_" + std::to_string(l);
        shapes.push_back({name + ".weight", {fan_out(l), fan_in(l)}});
        shapes.push_back({name + ".bias", {fan_out(l)}});
    }
    layout_ = std::make_shared<const Layout>(std::move(shapes));
}

std::size_t Model::fan_in(std::size_t layer) const { return layer == 0 ? input_dim_ : hidden_.at(layer - 1); }

std::size_t Model::fan_out(std::size_t layer) const {
    return layer + 1 == num_layers() ? output_dim_ : hidden_.at(layer);
}

ParamVector Model::init_params(Rng& rng) const {
    ParamVector w(layout_);
    for (std::size_t l = 0; l < num_layers(); ++l) {
        const double gain = activation_ == Activation::relu ? 2.0 : 1.0;
        const double sd = std::sqrt(gain / static_cast<double>(fan_in(l)));
        for (double& x : w.block(2 * l)) x = sd * rng.normal();
    }
    return w;
}

Batch Batch::mse(Eigen::MatrixXd x, Eigen::MatrixXd y) {
    Batch b;
    b.inputs = std::move(x);
    b.targets = std::move(y);
    b.loss_kind = LossKind::mse;
    return b;
}

Batch Batch::ce(Eigen::MatrixXd x, std::vector<int> labels) {
    Batch b;
    b.inputs = std::move(x);
    b.labels = std::move(labels);
    b.loss_kind = LossKind::ce;
    return b;
}

void validate_batch(const Model& model, const Batch& batch) {
    CURVSTEP_REQUIRE(batch.size() >= 1, "batch must contain at least one example");
    CURVSTEP_REQUIRE(static_cast<std::size_t>(batch.inputs.cols()) == model.input_dim(),
                     "batch input width does not match model");
    if (batch.loss_kind == LossKind::mse) {
        CURVSTEP_REQUIRE(batch.targets.rows() == batch.inputs.rows() &&
                             static_cast<std::size_t>(batch.targets.cols()) == model.output_dim(),
                         "mse targets must be (b, output_dim)");
    } else {
        CURVSTEP_REQUIRE(batch.labels.size() == batch.size(), "ce batch needs one label per example");
        for (int y : batch.labels)
            CURVSTEP_REQUIRE(y >= 0 && static_cast<std::size_t>(y) < model.output_dim(), "ce label out of range");
    }
}

Linearization::Linearization(const Model& model, const ParamVector& w, const Batch& batch, bool with_grad)
    : model_(model), w_(w), batch_(batch) {
    validate_batch(model_, batch_);
    act_ = forward_acts(model_, w_, batch_.inputs.transpose());

    const Eigen::MatrixXd& z = act_.back();
    const auto b = static_cast<double>(batch_.size());
    if (batch_.loss_kind == LossKind::mse) {
        const Eigen::MatrixXd resid = z - batch_.targets.transpose();
        loss_ = 0.5 * resid.squaredNorm() / b;
        out_grad_ = resid / b;
    } else {
        probs_.resize(z.rows(), z.cols());
        double total = 0.0;
        for (Eigen::Index i = 0; i < z.cols(); ++i) {
            const double mx = z.col(i).maxCoeff();
            const double lse = mx + std::log((z.col(i).array() - mx).exp().sum());
            total += lse - z(batch_.labels[static_cast<std::size_t>(i)], i);
            probs_.col(i) = (z.col(i).array() - lse).exp().matrix();
        }
        loss_ = total / b;
        out_grad_ = probs_;
        for (Eigen::Index i = 0; i < z.cols(); ++i) out_grad_(batch_.labels[static_cast<std::size_t>(i)], i) -= 1.0;
        out_grad_ /= b;
    }

    if (with_grad) {
        grad_ = ParamVector(model_.layout());
        backward_into(out_grad_, grad_, &layer_g_, &hidden_g_);
        has_grad_ = true;
    }
}

const ParamVector& Linearization::grad() const {
    CURVSTEP_REQUIRE(has_grad_, "Linearization built without gradient");
    return grad_;
}

void Linearization::backward_into(const Eigen::MatrixXd& out_cotangent, ParamVector& grad,
                                  std::vector<Eigen::MatrixXd>* keep_layer_grads,
                                  std::vector<Eigen::MatrixXd>* keep_hidden_grads) const {
    const std::size_t L = model_.num_layers();
    if (keep_layer_grads) keep_layer_grads->assign(L, {});
    if (keep_hidden_grads) keep_hidden_grads->assign(L, {});
    Eigen::MatrixXd g = out_cotangent;
    for (std::size_t l = L; l-- > 0;) {
        weight(model_, grad, l).noalias() = g * act_[l].transpose();
        bias(model_, grad, l) = g.rowwise().sum();
        if (l > 0) {
            Eigen::MatrixXd gh = weight(model_, w_, l).transpose() * g;
            Eigen::MatrixXd next = gh.cwiseProduct(act_deriv(model_.activation(), act_[l]));
            if (keep_hidden_grads) (*keep_hidden_grads)[l] = std::move(gh);
            if (keep_layer_grads) (*keep_layer_grads)[l] = std::move(g);
            g = std::move(next);
        } else if (keep_layer_grads) {
            (*keep_layer_grads)[l] = std::move(g);
        }
    }
}

Eigen::MatrixXd Linearization::jvp(const ParamVector& v) const {
    require_same_layout(w_, v);
    Eigen::MatrixXd rh;  // tangent of the current layer input; empty means zero
    Eigen::MatrixXd rz;
    for (std::size_t l = 0; l < model_.num_layers(); ++l) {
        rz = weight(model_, v, l) * act_[l];
        if (l > 0) rz.noalias() += weight(model_, w_, l) * rh;
        rz.colwise() += bias(model_, v, l);
        if (l + 1 < model_.num_layers()) rh = rz.cwiseProduct(act_deriv(model_.activation(), act_[l + 1]));
    }
    return rz;
}

ParamVector Linearization::vjp(const Eigen::MatrixXd& cotangent) const {
    CURVSTEP_REQUIRE(static_cast<std::size_t>(cotangent.rows()) == model_.output_dim() &&
                         static_cast<std::size_t>(cotangent.cols()) == batch_.size(),
                     "vjp: cotangent shape mismatch");
    ParamVector out(model_.layout());
    backward_into(cotangent, out, nullptr, nullptr);
    return out;
}

std::vector<Eigen::MatrixXd> Linearization::backprop_columns(const Eigen::MatrixXd& cotangent) const {
    CURVSTEP_REQUIRE(static_cast<std::size_t>(cotangent.rows()) == model_.output_dim() &&
                         static_cast<std::size_t>(cotangent.cols()) == batch_.size(),
                     "backprop_columns: cotangent shape mismatch");
    const std::size_t L = model_.num_layers();
    std::vector<Eigen::MatrixXd> gs(L);
    gs[L - 1] = cotangent;
    for (std::size_t l = L - 1; l > 0; --l) {
        gs[l - 1] = (weight(model_, w_, l).transpose() * gs[l]).cwiseProduct(act_deriv(model_.activation(), act_[l]));
    }
    return gs;
}

Eigen::MatrixXd Linearization::apply_output_hessian(const Eigen::MatrixXd& tangent) const {
    if (batch_.loss_kind == LossKind::mse) return tangent;
    // (diag(p) - p p^T) t, column by column.
    Eigen::MatrixXd out = probs_.cwiseProduct(tangent);
    const Eigen::RowVectorXd pt = probs_.cwiseProduct(tangent).colwise().sum();
    out -= probs_ * pt.asDiagonal();
    return out;
}

ParamVector Linearization::ggn_matvec(const ParamVector& v) const {
    const Eigen::MatrixXd rz = jvp(v);
    return vjp(apply_output_hessian(rz) / static_cast<double>(batch_.size()));
}

ParamVector Linearization::hvp(const ParamVector& v) const {
    require_same_layout(w_, v);
    CURVSTEP_REQUIRE(has_grad_, "hvp requires a Linearization with gradient");
    const std::size_t L = model_.num_layers();
    const Activation a = model_.activation();

    // Forward tangents: rz[l] is the tangent of z_l, rh[l] the tangent of act_[l].
    std::vector<Eigen::MatrixXd> rz(L), rh(L);
    for (std::size_t l = 0; l < L; ++l) {
        rz[l] = weight(model_, v, l) * act_[l];
        if (l > 0) rz[l].noalias() += weight(model_, w_, l) * rh[l];
        rz[l].colwise() += bias(model_, v, l);
        if (l + 1 < L) rh[l + 1] = rz[l].cwiseProduct(act_deriv(a, act_[l + 1]));
    }

    ParamVector out(model_.layout());
    Eigen::MatrixXd rg = apply_output_hessian(rz[L - 1]) / static_cast<double>(batch_.size());
    for (std::size_t l = L; l-- > 0;) {
        const Eigen::MatrixXd& g = layer_g_[l];
        auto rgw = weight(model_, out, l);
        rgw.noalias() = rg * act_[l].transpose();
        if (l > 0) rgw.noalias() += g * rh[l].transpose();
        bias(model_, out, l) = rg.rowwise().sum();
        if (l > 0) {
            Eigen::MatrixXd rgh = weight(model_, v, l).transpose() * g;
            rgh.noalias() += weight(model_, w_, l).transpose() * rg;
            Eigen::MatrixXd next = rgh.cwiseProduct(act_deriv(a, act_[l]));
            if (a != Activation::relu)
                next += act_second_deriv(a, act_[l]).cwiseProduct(rz[l - 1]).cwiseProduct(hidden_g_[l]);
            rg = std::move(next);
        }
    }
    return out;
}

Eigen::MatrixXd forward(const Model& model, const ParamVector& w, const Eigen::MatrixXd& inputs) {
    auto acts = forward_acts(model, w, inputs.transpose());
    return acts.back().transpose();
}

double loss_value(const Model& model, const ParamVector& w, const Batch& batch) {
    return Linearization(model, w, batch, /*with_grad=*/false).loss();
}

LossAndGrad loss_and_grad(const Model& model, const ParamVector& w, const Batch& batch) {
    Linearization lin(model, w, batch);
    return {lin.loss(), lin.grad()};
}

ParamVector hvp(const Model& model, const ParamVector& w, const Batch& batch, const ParamVector& v) {
    return Linearization(model, w, batch).hvp(v);
}

Eigen::MatrixXd jvp_outputs(const Model& model, const ParamVector& w, const Batch& batch, const ParamVector& v) {
    return Linearization(model, w, batch, false).jvp(v).transpose();
}

ParamVector vjp_outputs(const Model& model, const ParamVector& w, const Batch& batch, const Eigen::MatrixXd& U) {
    return Linearization(model, w, batch, false).vjp(U.transpose());
}

}  // namespace curvstep
