#include "recast/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace recast::nn {

namespace {

double activate(Activation act, double z) {
    switch (act) {
        case Activation::Relu:
            return z > 0.0 ? z : 0.0;
        case Activation::Gelu:
            return 0.5 * z * (1.0 + std::erf(z * M_SQRT1_2));
    }
    return z;
}

double activate_grad(Activation act, double z) {
    switch (act) {
        case Activation::Relu:
            return z > 0.0 ? 1.0 : 0.0;
        case Activation::Gelu: {
            const double cdf = 0.5 * (1.0 + std::erf(z * M_SQRT1_2));
            const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI);
            return cdf + z * pdf;
        }
    }
    return 1.0;
}

}  // namespace

bool DenseLayer::all_finite() const {
    if (!weights.all_finite()) return false;
    for (double b : bias)
        if (!std::isfinite(b)) return false;
    return true;
}

std::size_t MlpParams::parameter_count() const {
    std::size_t n = 0;
    for (const auto& layer : layers) n += layer.weights.size() + layer.bias.size();
    return n;
}

bool MlpParams::all_finite() const {
    for (const auto& layer : layers)
        if (!layer.all_finite()) return false;
    return true;
}

MlpParams make_mlp(const std::vector<std::size_t>& dims, Activation activation, Rng& rng) {
    if (dims.size() < 2) throw std::invalid_argument("make_mlp: need at least input and output dims");
    MlpParams params;
    params.activation = activation;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        DenseLayer layer;
        layer.weights = Matrix(dims[l + 1], dims[l]);
        layer.bias = Vector(dims[l + 1], 0.0);
        const double limit = std::sqrt(6.0 / static_cast<double>(dims[l] + dims[l + 1]));
        for (std::size_t r = 0; r < layer.weights.rows(); ++r)
            for (std::size_t c = 0; c < layer.weights.cols(); ++c)
                layer.weights(r, c) = rng.uniform(-limit, limit);
        params.layers.push_back(std::move(layer));
    }
    return params;
}

Vector mlp_forward(const MlpParams& params, const Vector& input, ForwardCache* cache) {
    if (params.layers.empty()) throw std::invalid_argument("mlp_forward: empty network");
    if (input.size() != params.input_dim())
        throw std::invalid_argument("mlp_forward: input length " + std::to_string(input.size()) +
                                    " != first layer in_dim " + std::to_string(params.input_dim()));

    if (cache) {
        cache->layer_inputs.clear();
        cache->pre_activations.clear();
    }

    Vector current = input;
    const std::size_t last = params.layers.size() - 1;
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        const DenseLayer& layer = params.layers[l];
        if (current.size() != layer.in_dim())
            throw std::invalid_argument("mlp_forward: layer " + std::to_string(l) + " dim mismatch");
        if (cache) cache->layer_inputs.push_back(current);

        Vector z(layer.out_dim(), 0.0);
        for (std::size_t r = 0; r < layer.out_dim(); ++r) {
            const double* w = layer.weights.row(r);
            double acc = layer.bias[r];
            for (std::size_t c = 0; c < layer.in_dim(); ++c) acc += w[c] * current[c];
            z[r] = acc;
        }
        if (cache) cache->pre_activations.push_back(z);

        if (l == last) {
            current = std::move(z);
        } else {
            Vector a(z.size());
            for (std::size_t i = 0; i < z.size(); ++i) a[i] = activate(params.activation, z[i]);
            current = std::move(a);
        }
    }
    return current;
}

MlpGrads MlpGrads::zeros_like(const MlpParams& params) {
    MlpGrads grads;
    for (const auto& layer : params.layers) {
        DenseLayer g;
        g.weights = Matrix(layer.out_dim(), layer.in_dim());
        g.bias = Vector(layer.out_dim(), 0.0);
        grads.layers.push_back(std::move(g));
    }
    return grads;
}

void MlpGrads::accumulate(const MlpGrads& other) {
    if (layers.size() != other.layers.size())
        throw std::invalid_argument("MlpGrads::accumulate: layer count mismatch");
    for (std::size_t l = 0; l < layers.size(); ++l) {
        Matrix& w = layers[l].weights;
        const Matrix& ow = other.layers[l].weights;
        if (!w.same_shape(ow)) throw std::invalid_argument("MlpGrads::accumulate: shape mismatch");
        for (std::size_t i = 0; i < w.size(); ++i) w.data()[i] += ow.data()[i];
        for (std::size_t i = 0; i < layers[l].bias.size(); ++i)
            layers[l].bias[i] += other.layers[l].bias[i];
    }
}

void MlpGrads::scale(double factor) {
    for (auto& layer : layers) {
        for (std::size_t i = 0; i < layer.weights.size(); ++i) layer.weights.data()[i] *= factor;
        for (double& b : layer.bias) b *= factor;
    }
}

bool MlpGrads::all_finite() const {
    for (const auto& layer : layers)
        if (!layer.all_finite()) return false;
    return true;
}

MlpGrads mlp_backward(const MlpParams& params, const ForwardCache& cache,
                      const Vector& output_gradient, Vector* input_gradient) {
    const std::size_t n_layers = params.layers.size();
    if (cache.layer_inputs.size() != n_layers || cache.pre_activations.size() != n_layers)
        throw std::logic_error("mlp_backward: cache does not match network");
    if (output_gradient.size() != params.output_dim())
        throw std::logic_error("mlp_backward: output gradient length mismatch");

    MlpGrads grads = MlpGrads::zeros_like(params);
    Vector delta = output_gradient;  // dLoss/dz for the current layer

    for (std::size_t li = n_layers; li-- > 0;) {
        const DenseLayer& layer = params.layers[li];
        const Vector& a_in = cache.layer_inputs[li];

        // dL/dW = delta outer a_in, dL/db = delta
        DenseLayer& g = grads.layers[li];
        for (std::size_t r = 0; r < layer.out_dim(); ++r) {
            const double d = delta[r];
            g.bias[r] = d;
            double* gw = g.weights.row(r);
            for (std::size_t c = 0; c < layer.in_dim(); ++c) gw[c] = d * a_in[c];
        }

        const bool need_input_grad = li > 0 || input_gradient != nullptr;
        if (!need_input_grad) continue;

        Vector prev(layer.in_dim(), 0.0);
        for (std::size_t r = 0; r < layer.out_dim(); ++r) {
            const double d = delta[r];
            const double* w = layer.weights.row(r);
            for (std::size_t c = 0; c < layer.in_dim(); ++c) prev[c] += d * w[c];
        }

        if (li == 0) {
            if (input_gradient) *input_gradient = std::move(prev);
            break;
        }

        // pass through the activation of the previous layer
        const Vector& z_prev = cache.pre_activations[li - 1];
        for (std::size_t i = 0; i < prev.size(); ++i)
            prev[i] *= activate_grad(params.activation, z_prev[i]);
        delta = std::move(prev);
    }
    return grads;
}

LossResult l1_loss(const Matrix& prediction, const Matrix& target) {
    if (!prediction.same_shape(target))
        throw std::invalid_argument("l1_loss: shape mismatch " + shape_string(prediction) +
                                    " vs " + shape_string(target));
    LossResult result;
    result.gradient = Matrix(prediction.rows(), prediction.cols());
    const double count = static_cast<double>(prediction.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < prediction.size(); ++i) {
        const double r = prediction.data()[i] - target.data()[i];
        sum += std::abs(r);
        result.gradient.data()[i] = (r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0)) / count;
    }
    result.value = sum / count;
    return result;
}

AdamState AdamState::zeros_like(const MlpParams& params) {
    AdamState state;
    const MlpGrads z = MlpGrads::zeros_like(params);
    state.first_moment = z.layers;
    state.second_moment = z.layers;
    return state;
}

void adam_step(MlpParams& params, const MlpGrads& grads, AdamState& state, double lr) {
    if (grads.layers.size() != params.layers.size())
        throw std::invalid_argument("adam_step: gradient/parameter layer mismatch");
    if (!grads.all_finite())
        throw std::runtime_error("adam_step: non-finite gradient, step aborted");

    state.step_count += 1;
    const double t = static_cast<double>(state.step_count);
    const double bc1 = 1.0 - std::pow(state.beta1, t);
    const double bc2 = 1.0 - std::pow(state.beta2, t);

    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        DenseLayer& layer = params.layers[l];
        const DenseLayer& g = grads.layers[l];
        DenseLayer& m = state.first_moment[l];
        DenseLayer& v = state.second_moment[l];
        if (!layer.weights.same_shape(g.weights))
            throw std::invalid_argument("adam_step: layer shape mismatch");

        auto update = [&](double& p, double grad, double& m1, double& m2) {
            m1 = state.beta1 * m1 + (1.0 - state.beta1) * grad;
            m2 = state.beta2 * m2 + (1.0 - state.beta2) * grad * grad;
            const double m_hat = m1 / bc1;
            const double v_hat = m2 / bc2;
            p -= lr * m_hat / (std::sqrt(v_hat) + state.eps);
        };

        for (std::size_t i = 0; i < layer.weights.size(); ++i)
            update(layer.weights.data()[i], g.weights.data()[i], m.weights.data()[i],
                   v.weights.data()[i]);
        for (std::size_t i = 0; i < layer.bias.size(); ++i)
            update(layer.bias[i], g.bias[i], m.bias[i], v.bias[i]);
    }
}

double cosine_lr(double base_lr, std::size_t epoch, std::size_t total_epochs) {
    if (total_epochs == 0) throw std::invalid_argument("cosine_lr: total_epochs == 0");
    if (epoch >= total_epochs) throw std::invalid_argument("cosine_lr: epoch out of range");
    return base_lr * 0.5 *
           (1.0 + std::cos(M_PI * static_cast<double>(epoch) / static_cast<double>(total_epochs)));
}

namespace {

// Flat views over every scalar parameter, used only by grad_check.
std::vector<double*> parameter_pointers(MlpParams& params) {
    std::vector<double*> ptrs;
    for (auto& layer : params.layers) {
        for (std::size_t i = 0; i < layer.weights.size(); ++i) ptrs.push_back(layer.weights.data() + i);
        for (double& b : layer.bias) ptrs.push_back(&b);
    }
    return ptrs;
}

std::vector<double> flatten_grads(const MlpGrads& grads) {
    std::vector<double> flat;
    for (const auto& layer : grads.layers) {
        flat.insert(flat.end(), layer.weights.data(), layer.weights.data() + layer.weights.size());
        flat.insert(flat.end(), layer.bias.begin(), layer.bias.end());
    }
    return flat;
}

}  // namespace

GradCheckReport grad_check(const MlpParams& params, const LossWithGrad& loss_fn, double fd_step) {
    const auto [value, analytic] = loss_fn(params);
    (void)value;
    const std::vector<double> analytic_flat = flatten_grads(analytic);

    MlpParams probe = params;
    std::vector<double*> ptrs = parameter_pointers(probe);
    if (ptrs.size() != analytic_flat.size())
        throw std::logic_error("grad_check: gradient size mismatch");

    GradCheckReport report;
    report.checked_parameters = ptrs.size();
    for (std::size_t i = 0; i < ptrs.size(); ++i) {
        const double original = *ptrs[i];
        *ptrs[i] = original + fd_step;
        const double plus = loss_fn(probe).first;
        *ptrs[i] = original - fd_step;
        const double minus = loss_fn(probe).first;
        *ptrs[i] = original;

        const double numeric = (plus - minus) / (2.0 * fd_step);
        const double a = analytic_flat[i];
        const double rel = std::abs(a - numeric) / std::max(std::abs(a) + std::abs(numeric), 1e-6);
        report.max_rel_error = std::max(report.max_rel_error, rel);
    }
    return report;
}

}  // namespace recast::nn
