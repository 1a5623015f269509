#pragma once

#include <cstdint>
#include <vector>

#include "recast/codebook.hpp"
#include "recast/matrix.hpp"
#include "recast/nn.hpp"
#include "recast/series.hpp"

namespace recast {

struct ModelDims {
    std::size_t lookback = 96;   // L
    std::size_t horizon = 96;    // H
    std::size_t patch_len = 16;  // L_p
    std::size_t k = 8;           // codebook size

    std::size_t n_patches() const { return (lookback + patch_len - 1) / patch_len; }
    std::size_t n_future_patches() const { return (horizon + patch_len - 1) / patch_len; }
    std::size_t code_dim() const { return patch_len / 2; }
    std::size_t quant_input_dim() const { return n_patches() * code_dim(); }
    std::size_t quant_output_dim() const { return n_future_patches() * code_dim(); }
};

/// Quantization-path MLP over codeword embeddings plus residual-path MLP,
/// both channel-shared, plus the codebook they quantize against.
struct DualPathModel {
    nn::MlpParams quant_mlp;  // N*(L_p/2) -> hidden -> N_y*(L_p/2)
    nn::MlpParams res_mlp;    // L -> hidden -> H
    Codebook codebook;
    ModelDims dims;
};

/// Both MLPs initialized from streams derived from `seed`; the codebook
/// starts empty (epoch 0) and is installed by the training loop.
DualPathModel make_model(const ModelDims& dims, std::size_t quant_hidden, std::size_t res_hidden,
                         nn::Activation activation, std::uint64_t seed);

/// Concatenated codeword vectors for one channel's patch indices, in patch
/// order; the continuous input the quantization MLP consumes.
Vector embed_indices(const std::vector<std::size_t>& channel_indices, const Codebook& codebook);

struct QuantPathResult {
    QuantizedSeries q_y;                       // predicted future indices, C x N_y
    Matrix y_q_norm;                           // C x H, normalized scale
    Matrix continuous;                         // C x N_y*(L_p/2), pre-snap MLP output
    std::vector<nn::ForwardCache> caches;      // per channel
};

/// MLP over the embedded input indices; each output chunk is snapped to its
/// nearest codeword (forward uses the codeword, backward treats the snap as
/// identity). snap=false keeps the continuous chunks, used to test the
/// straight-through contract.
QuantPathResult quant_path_forward(const DualPathModel& model, const QuantizedSeries& q_x,
                                   bool snap = true);

struct ResPathResult {
    Matrix y_r_norm;  // C x H
    std::vector<nn::ForwardCache> caches;
};

ResPathResult residual_path_forward(const DualPathModel& model, const Matrix& x_r);

struct ForwardOptions {
    bool no_residual = false;  // zero the residual path output
    bool snap = true;
};

struct ForecastOutput {
    Matrix y_hat;  // C x H, original scale
    Matrix y_q;    // C x H, quantization path output before denormalization
    Matrix y_r;    // C x H, residual path output before denormalization
    QuantizedSeries q_y;
    series::NormStats stats;

    // intermediate tensors, exposed for tests and the backward pass
    Matrix x_norm;
    Matrix x_q;
    Matrix x_r;
    QuantizedSeries q_x;
    Matrix quant_continuous;
    std::vector<nn::ForwardCache> quant_caches;
    std::vector<nn::ForwardCache> res_caches;
};

/// normalize -> patchify -> downsample -> quantize -> {quant path; residual
/// path on X - X_q} -> sum -> denormalize.
ForecastOutput dual_path_forward(const DualPathModel& model, const series::WindowPair& window,
                                 const ForwardOptions& options = {});

struct TrainingLossOptions {
    bool no_residual = false;
    double aux_weight = 0.0;            // optional codeword-regression term
    const Matrix* aux_targets = nullptr;  // C x N_y*(L_p/2), codewords of the true future
};

struct TrainingLossResult {
    double value = 0.0;     // L1 + w_sep * separation (+ aux)
    double pre_loss = 0.0;  // the L1 component
    nn::MlpGrads quant_grads;
    nn::MlpGrads res_grads;
};

/// L1 on the denormalized forecast plus the weighted separation term.
/// Gradients flow to both MLPs; the snap is straight-through and the
/// codebook receives none.
TrainingLossResult training_loss(const DualPathModel& model, const ForecastOutput& output,
                                 const Matrix& target, double sep_loss_value, double w_sep,
                                 const TrainingLossOptions& options = {});

}  // namespace recast
