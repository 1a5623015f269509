#pragma once

#include <functional>
#include <vector>

#include "recast/matrix.hpp"
#include "recast/rng.hpp"

namespace recast::nn {

enum class Activation { Relu, Gelu };

/// One dense layer: y = W x + b, W is out_dim x in_dim.
struct DenseLayer {
    Matrix weights;
    Vector bias;

    std::size_t in_dim() const { return weights.cols(); }
    std::size_t out_dim() const { return weights.rows(); }
    bool all_finite() const;
};

/// A stack of dense layers with the activation applied between layers
/// (never after the last one).
struct MlpParams {
    std::vector<DenseLayer> layers;
    Activation activation = Activation::Relu;

    std::size_t input_dim() const { return layers.front().in_dim(); }
    std::size_t output_dim() const { return layers.back().out_dim(); }
    std::size_t parameter_count() const;
    bool all_finite() const;
};

/// Glorot-uniform initialization, deterministic per rng state.
MlpParams make_mlp(const std::vector<std::size_t>& dims, Activation activation, Rng& rng);

/// Per-layer inputs and pre-activations retained for the backward pass.
struct ForwardCache {
    std::vector<Vector> layer_inputs;     // a_0 = input, a_l = act(z_l)
    std::vector<Vector> pre_activations;  // z_l = W_l a_l + b_l
};

Vector mlp_forward(const MlpParams& params, const Vector& input, ForwardCache* cache = nullptr);

/// Gradients mirror the parameter shapes; DenseLayer doubles as the holder.
struct MlpGrads {
    std::vector<DenseLayer> layers;

    static MlpGrads zeros_like(const MlpParams& params);
    void accumulate(const MlpGrads& other);
    void scale(double factor);
    bool all_finite() const;
};

/// Backward through the whole stack. `input_gradient`, when non-null,
/// receives dLoss/dInput.
MlpGrads mlp_backward(const MlpParams& params, const ForwardCache& cache,
                      const Vector& output_gradient, Vector* input_gradient = nullptr);

struct LossResult {
    double value = 0.0;
    Matrix gradient;
};

/// Mean absolute error over all entries; subgradient at zero residual is 0.
LossResult l1_loss(const Matrix& prediction, const Matrix& target);

struct AdamState {
    std::vector<DenseLayer> first_moment;
    std::vector<DenseLayer> second_moment;
    long step_count = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    static AdamState zeros_like(const MlpParams& params);
};

/// Bias-corrected Adam update in place. Throws on non-finite gradients
/// without touching the parameters.
void adam_step(MlpParams& params, const MlpGrads& grads, AdamState& state, double lr);

/// base_lr * 0.5 * (1 + cos(pi * epoch / total_epochs)); epoch 0 -> base_lr.
double cosine_lr(double base_lr, std::size_t epoch, std::size_t total_epochs);

/// Deterministic loss returning its value and analytic parameter gradients.
using LossWithGrad = std::function<std::pair<double, MlpGrads>(const MlpParams&)>;

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::size_t checked_parameters = 0;
    bool within(double tolerance) const { return max_rel_error <= tolerance; }
};

/// Compares the analytic gradient of `loss_fn` against central finite
/// differences over every parameter. Report only; asserting is the caller's
/// business.
GradCheckReport grad_check(const MlpParams& params, const LossWithGrad& loss_fn,
                           double fd_step = 1e-5);

}  // namespace recast::nn
