#include "recast/forecaster.hpp"

#include <cmath>
#include <stdexcept>

namespace recast {

DualPathModel make_model(const ModelDims& dims, std::size_t quant_hidden, std::size_t res_hidden,
                         nn::Activation activation, std::uint64_t seed) {
    DualPathModel model;
    model.dims = dims;
    Rng quant_rng(split_seed(seed, 11));
    Rng res_rng(split_seed(seed, 12));
    model.quant_mlp =
        nn::make_mlp({dims.quant_input_dim(), quant_hidden, dims.quant_output_dim()}, activation,
                     quant_rng);
    model.res_mlp = nn::make_mlp({dims.lookback, res_hidden, dims.horizon}, activation, res_rng);
    model.codebook.epoch = 0;
    return model;
}

Vector embed_indices(const std::vector<std::size_t>& channel_indices, const Codebook& codebook) {
    Vector embedded;
    embedded.reserve(channel_indices.size() * codebook.dim());
    for (std::size_t id : channel_indices) {
        if (id >= codebook.size()) throw std::out_of_range("embed_indices: index out of range");
        const double* word = codebook.codewords.row(id);
        embedded.insert(embedded.end(), word, word + codebook.dim());
    }
    return embedded;
}

QuantPathResult quant_path_forward(const DualPathModel& model, const QuantizedSeries& q_x,
                                   bool snap) {
    const ModelDims& dims = model.dims;
    if (q_x.per_channel() != dims.n_patches())
        throw std::invalid_argument("quant_path_forward: input patch count mismatch");

    const std::size_t channels = q_x.channels();
    const std::size_t code_dim = dims.code_dim();
    const std::size_t n_future = dims.n_future_patches();

    QuantPathResult result;
    result.q_y.codebook_epoch = model.codebook.epoch;
    result.q_y.indices.assign(channels, std::vector<std::size_t>(n_future, 0));
    result.y_q_norm = Matrix(channels, dims.horizon);
    result.continuous = Matrix(channels, dims.quant_output_dim());
    result.caches.resize(channels);

    for (std::size_t c = 0; c < channels; ++c) {
        const Vector embedded = embed_indices(q_x.indices[c], model.codebook);
        const Vector out = nn::mlp_forward(model.quant_mlp, embedded, &result.caches[c]);
        for (std::size_t i = 0; i < out.size(); ++i) result.continuous(c, i) = out[i];

        std::size_t t = 0;
        for (std::size_t p = 0; p < n_future; ++p) {
            Vector chunk(out.begin() + static_cast<long>(p * code_dim),
                         out.begin() + static_cast<long>((p + 1) * code_dim));
            const std::size_t id = nearest_codeword(chunk, model.codebook.codewords);
            result.q_y.indices[c][p] = id;
            const double* source = snap ? model.codebook.codewords.row(id) : chunk.data();
            for (std::size_t i = 0; i < dims.patch_len && t < dims.horizon; ++i, ++t)
                result.y_q_norm(c, t) = source[i / 2];
        }
    }
    return result;
}

ResPathResult residual_path_forward(const DualPathModel& model, const Matrix& x_r) {
    if (x_r.cols() != model.dims.lookback)
        throw std::invalid_argument("residual_path_forward: input width mismatch");
    ResPathResult result;
    result.y_r_norm = Matrix(x_r.rows(), model.dims.horizon);
    result.caches.resize(x_r.rows());
    for (std::size_t c = 0; c < x_r.rows(); ++c) {
        const Vector out = nn::mlp_forward(model.res_mlp, x_r.row_vector(c), &result.caches[c]);
        for (std::size_t t = 0; t < out.size(); ++t) result.y_r_norm(c, t) = out[t];
    }
    return result;
}

ForecastOutput dual_path_forward(const DualPathModel& model, const series::WindowPair& window,
                                 const ForwardOptions& options) {
    const ModelDims& dims = model.dims;
    if (window.x.cols() != dims.lookback)
        throw std::invalid_argument("dual_path_forward: window width " +
                                    std::to_string(window.x.cols()) + " != lookback " +
                                    std::to_string(dims.lookback));
    if (model.codebook.epoch < 1)
        throw std::logic_error("dual_path_forward: codebook not initialized");

    ForecastOutput out;
    auto [x_norm, stats] = series::instance_normalize(window.x);
    out.x_norm = std::move(x_norm);
    out.stats = std::move(stats);

    const series::PatchSet patches = series::patchify(out.x_norm, dims.patch_len);
    const DownsampledPatches down = downsample_patches(patches);
    out.q_x = quantize(down, model.codebook);

    out.x_q = reconstruct(out.q_x, model.codebook, dims.lookback);
    out.x_r = Matrix(out.x_norm.rows(), out.x_norm.cols());
    for (std::size_t i = 0; i < out.x_r.size(); ++i)
        out.x_r.data()[i] = out.x_norm.data()[i] - out.x_q.data()[i];

    QuantPathResult quant = quant_path_forward(model, out.q_x, options.snap);
    out.q_y = std::move(quant.q_y);
    out.y_q = std::move(quant.y_q_norm);
    out.quant_continuous = std::move(quant.continuous);
    out.quant_caches = std::move(quant.caches);

    if (options.no_residual) {
        out.y_r = Matrix(window.x.rows(), dims.horizon, 0.0);
    } else {
        ResPathResult res = residual_path_forward(model, out.x_r);
        out.y_r = std::move(res.y_r_norm);
        out.res_caches = std::move(res.caches);
    }

    out.y_hat = Matrix(window.x.rows(), dims.horizon);
    for (std::size_t c = 0; c < out.y_hat.rows(); ++c)
        for (std::size_t t = 0; t < dims.horizon; ++t)
            out.y_hat(c, t) = out.stats.std[c] * (out.y_q(c, t) + out.y_r(c, t)) + out.stats.mean[c];
    return out;
}

TrainingLossResult training_loss(const DualPathModel& model, const ForecastOutput& output,
                                 const Matrix& target, double sep_loss_value, double w_sep,
                                 const TrainingLossOptions& options) {
    if (!output.y_hat.same_shape(target))
        throw std::invalid_argument("training_loss: target shape mismatch");

    const ModelDims& dims = model.dims;
    const std::size_t channels = output.y_hat.rows();
    const std::size_t code_dim = dims.code_dim();

    TrainingLossResult result;
    const nn::LossResult l1 = nn::l1_loss(output.y_hat, target);
    result.pre_loss = l1.value;
    result.value = l1.value + w_sep * sep_loss_value;

    result.quant_grads = nn::MlpGrads::zeros_like(model.quant_mlp);
    result.res_grads = nn::MlpGrads::zeros_like(model.res_mlp);

    const double aux_scale =
        options.aux_weight > 0.0 && options.aux_targets
            ? 2.0 * options.aux_weight / static_cast<double>(output.quant_continuous.size())
            : 0.0;
    if (aux_scale > 0.0 && !options.aux_targets->same_shape(output.quant_continuous))
        throw std::invalid_argument("training_loss: aux target shape mismatch");

    for (std::size_t c = 0; c < channels; ++c) {
        // dL/d(path output, normalized scale) = sigma_c * dL/dY_hat
        Vector g_norm(dims.horizon);
        for (std::size_t t = 0; t < dims.horizon; ++t)
            g_norm[t] = output.stats.std[c] * l1.gradient(c, t);

        if (!options.no_residual) {
            const nn::MlpGrads g =
                nn::mlp_backward(model.res_mlp, output.res_caches[c], g_norm);
            result.res_grads.accumulate(g);
        }

        // adjoint of truncate(upsample(chunks)): each codeword-space slot
        // collects the gradients of its two repeated positions; the snap is
        // straight-through
        Vector chunk_grad(dims.quant_output_dim(), 0.0);
        for (std::size_t p = 0; p < dims.n_future_patches(); ++p) {
            for (std::size_t d = 0; d < code_dim; ++d) {
                double g = 0.0;
                const std::size_t t0 = p * dims.patch_len + 2 * d;
                if (t0 < dims.horizon) g += g_norm[t0];
                if (t0 + 1 < dims.horizon) g += g_norm[t0 + 1];
                chunk_grad[p * code_dim + d] = g;
            }
        }
        if (aux_scale > 0.0) {
            for (std::size_t i = 0; i < chunk_grad.size(); ++i) {
                const double diff =
                    output.quant_continuous(c, i) - (*options.aux_targets)(c, i);
                chunk_grad[i] += aux_scale * diff;
                result.value += options.aux_weight * diff * diff /
                                static_cast<double>(output.quant_continuous.size());
            }
        }
        const nn::MlpGrads g =
            nn::mlp_backward(model.quant_mlp, output.quant_caches[c], chunk_grad);
        result.quant_grads.accumulate(g);
    }
    return result;
}

}  // namespace recast
