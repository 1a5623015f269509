#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "recast/forecaster.hpp"

using namespace recast;

namespace {

Codebook random_codebook(Rng& rng, std::size_t k, std::size_t dim) {
    Codebook book;
    book.epoch = 1;
    book.codewords = Matrix(k, dim);
    for (std::size_t i = 0; i < book.codewords.size(); ++i)
        book.codewords.data()[i] = rng.uniform(-1.0, 1.0);
    return book;
}

void zero_mlp(nn::MlpParams& mlp) {
    for (auto& layer : mlp.layers) {
        layer.weights = Matrix(layer.out_dim(), layer.in_dim(), 0.0);
        layer.bias.assign(layer.out_dim(), 0.0);
    }
}

series::WindowPair random_window(Rng& rng, std::size_t channels, std::size_t lookback,
                                 std::size_t horizon, double scale = 2.0) {
    series::WindowPair w;
    w.x = Matrix(channels, lookback);
    w.y = Matrix(channels, horizon);
    for (std::size_t i = 0; i < w.x.size(); ++i) w.x.data()[i] = rng.uniform(-scale, scale);
    for (std::size_t i = 0; i < w.y.size(); ++i) w.y.data()[i] = rng.uniform(-scale, scale);
    return w;
}

bool grads_equal(const nn::MlpGrads& a, const nn::MlpGrads& b) {
    if (a.layers.size() != b.layers.size()) return false;
    for (std::size_t l = 0; l < a.layers.size(); ++l)
        if (!(a.layers[l].weights == b.layers[l].weights && a.layers[l].bias == b.layers[l].bias))
            return false;
    return true;
}

}  // namespace

TEST_CASE("model dims arithmetic") {
    ModelDims dims{96, 100, 16, 8};
    CHECK(dims.n_patches() == 6);
    CHECK(dims.n_future_patches() == 7);  // ceil(100/16)
    CHECK(dims.code_dim() == 8);
    CHECK(dims.quant_input_dim() == 48);
    CHECK(dims.quant_output_dim() == 56);
}

TEST_CASE("embed_indices concatenates codewords in patch order") {
    Rng rng(1);
    const Codebook book = random_codebook(rng, 2, 3);
    const Vector e = embed_indices({1, 0}, book);
    REQUIRE(e.size() == 6);
    for (std::size_t j = 0; j < 3; ++j) {
        CHECK(e[j] == book.codewords(1, j));
        CHECK(e[3 + j] == book.codewords(0, j));
    }

    const Vector tiled = embed_indices({0, 0, 0}, book);
    for (std::size_t p = 0; p < 3; ++p)
        for (std::size_t j = 0; j < 3; ++j) CHECK(tiled[p * 3 + j] == book.codewords(0, j));

    // chunking the embedding recovers the codewords
    const Vector round = embed_indices({1, 0, 1}, book);
    for (std::size_t p = 0; p < 3; ++p) {
        const std::size_t id = p % 2 == 0 ? 1 : 0;
        for (std::size_t j = 0; j < 3; ++j) CHECK(round[p * 3 + j] == book.codewords(id, j));
    }

    CHECK_THROWS_AS(embed_indices({5}, book), std::out_of_range);
}

TEST_CASE("quant_path_forward constant head snaps to the nearest codeword") {
    Rng rng(2);
    ModelDims dims{8, 8, 4, 3};  // N = 2, N_y = 2, code_dim = 2
    DualPathModel model = make_model(dims, 4, 4, nn::Activation::Relu, 3);
    model.codebook = random_codebook(rng, 3, 2);

    // zero weights, output bias = codeword 0 tiled across future chunks
    zero_mlp(model.quant_mlp);
    for (std::size_t p = 0; p < dims.n_future_patches(); ++p)
        for (std::size_t j = 0; j < dims.code_dim(); ++j)
            model.quant_mlp.layers.back().bias[p * dims.code_dim() + j] =
                model.codebook.codewords(0, j);

    QuantizedSeries q_x;
    q_x.codebook_epoch = 1;
    q_x.indices = {{1, 2}};
    const QuantPathResult out = quant_path_forward(model, q_x);
    CHECK(out.q_y.indices[0] == std::vector<std::size_t>{0, 0});
}

TEST_CASE("quant_path_forward breaks ties toward the lower index") {
    ModelDims dims{2, 2, 2, 2};  // code_dim = 1, single patch
    DualPathModel model = make_model(dims, 2, 2, nn::Activation::Relu, 4);
    model.codebook.epoch = 1;
    model.codebook.codewords = Matrix(2, 1);
    model.codebook.codewords(0, 0) = 0.0;
    model.codebook.codewords(1, 0) = 1.0;
    zero_mlp(model.quant_mlp);
    model.quant_mlp.layers.back().bias[0] = 0.5;  // exactly between the codewords

    QuantizedSeries q_x;
    q_x.codebook_epoch = 1;
    q_x.indices = {{0}};
    const QuantPathResult out = quant_path_forward(model, q_x);
    CHECK(out.q_y.indices[0][0] == 0);
}

TEST_CASE("snapped quant output always lies in the codebook row set") {
    Rng rng(5);
    ModelDims dims{16, 12, 4, 5};
    DualPathModel model = make_model(dims, 6, 6, nn::Activation::Relu, 6);
    model.codebook = random_codebook(rng, 5, 2);

    for (int trial = 0; trial < 10; ++trial) {
        const series::WindowPair w = random_window(rng, 2, 16, 12);
        const ForecastOutput out = dual_path_forward(model, w);
        for (std::size_t c = 0; c < 2; ++c)
            for (std::size_t p = 0; p < out.q_y.per_channel(); ++p)
                for (std::size_t i = 0; i < dims.patch_len; ++i) {
                    const std::size_t t = p * dims.patch_len + i;
                    if (t >= dims.horizon) continue;
                    CHECK(out.y_q(c, t) ==
                          model.codebook.codewords(out.q_y.indices[c][p], i / 2));
                }
    }
}

TEST_CASE("residual_path_forward zero input with zero bias gives zero output") {
    Rng rng(7);
    ModelDims dims{10, 6, 2, 2};
    DualPathModel model = make_model(dims, 4, 8, nn::Activation::Relu, 8);
    const ResPathResult out = residual_path_forward(model, Matrix(3, 10, 0.0));
    for (std::size_t i = 0; i < out.y_r_norm.size(); ++i) CHECK(out.y_r_norm.data()[i] == 0.0);
}

TEST_CASE("residual_path_forward shares weights across channels") {
    Rng rng(9);
    ModelDims dims{10, 6, 2, 2};
    DualPathModel model = make_model(dims, 4, 8, nn::Activation::Relu, 9);
    Matrix x(2, 10);
    for (std::size_t t = 0; t < 10; ++t) x(0, t) = x(1, t) = rng.uniform(-1.0, 1.0);
    const ResPathResult out = residual_path_forward(model, x);
    for (std::size_t t = 0; t < 6; ++t) CHECK(out.y_r_norm(0, t) == out.y_r_norm(1, t));
}

TEST_CASE("dual_path_forward output shape and additivity") {
    Rng rng(11);
    ModelDims dims{24, 20, 8, 4};
    DualPathModel model = make_model(dims, 8, 16, nn::Activation::Relu, 12);
    model.codebook = random_codebook(rng, 4, 4);

    const series::WindowPair w = random_window(rng, 3, 24, 20);
    const ForecastOutput out = dual_path_forward(model, w);
    CHECK(out.y_hat.rows() == 3);
    CHECK(out.y_hat.cols() == 20);
    CHECK(out.q_y.per_channel() == dims.n_future_patches());

    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t t = 0; t < 20; ++t)
            CHECK(out.y_hat(c, t) ==
                  out.stats.std[c] * (out.y_q(c, t) + out.y_r(c, t)) + out.stats.mean[c]);
}

TEST_CASE("dual_path_forward perfect codebook fixture zeroes the residual exactly") {
    Rng rng(13);
    ModelDims dims{24, 8, 8, 3};
    DualPathModel model = make_model(dims, 4, 8, nn::Activation::Relu, 14);

    // pair-constant raw signal; the codebook is then built from the signal's
    // own normalized downsampled patches, so every patch quantizes with zero
    // error and X_r is bitwise zero
    series::WindowPair w;
    w.x = Matrix(1, 24);
    w.y = Matrix(1, 8, 0.0);
    for (std::size_t j = 0; j < 12; ++j) {
        const double v = rng.uniform(-3.0, 3.0);
        w.x(0, 2 * j) = v;
        w.x(0, 2 * j + 1) = v;
    }

    const auto [x_norm, stats] = series::instance_normalize(w.x);
    const DownsampledPatches down = downsample_patches(series::patchify(x_norm, 8));
    REQUIRE(down.patches.size() == 3);
    model.codebook.epoch = 1;
    model.codebook.codewords = Matrix(3, 4);
    for (std::size_t p = 0; p < 3; ++p)
        for (std::size_t j = 0; j < 4; ++j) model.codebook.codewords(p, j) = down.patches[p][j];

    const ForecastOutput out = dual_path_forward(model, w);
    CHECK(out.q_x.indices[0] == std::vector<std::size_t>{0, 1, 2});
    CHECK(out.x_r == Matrix(1, 24, 0.0));

    // with zero-bias initialization the residual net's response to exact
    // zero input is exactly zero
    for (std::size_t t = 0; t < 8; ++t) CHECK(out.y_r(0, t) == 0.0);
}

TEST_CASE("dual_path_forward constant channel degenerates to the mean") {
    Rng rng(17);
    ModelDims dims{16, 8, 4, 3};
    DualPathModel model = make_model(dims, 4, 8, nn::Activation::Relu, 18);
    model.codebook = random_codebook(rng, 3, 2);

    series::WindowPair w;
    w.x = Matrix(1, 16, 7.5);
    w.y = Matrix(1, 8, 7.5);
    const ForecastOutput out = dual_path_forward(model, w);
    for (std::size_t t = 0; t < 16; ++t) CHECK(out.x_norm(0, t) == doctest::Approx(0.0));
    for (std::size_t t = 0; t < 8; ++t)
        CHECK(out.y_hat(0, t) ==
              doctest::Approx(7.5 + out.stats.std[0] * (out.y_q(0, t) + out.y_r(0, t))));
}

TEST_CASE("channel permutation equivariance") {
    Rng rng(19);
    ModelDims dims{16, 12, 4, 4};
    DualPathModel model = make_model(dims, 6, 10, nn::Activation::Relu, 20);
    model.codebook = random_codebook(rng, 4, 2);

    const series::WindowPair w = random_window(rng, 4, 16, 12);
    series::WindowPair permuted;
    permuted.x = Matrix(4, 16);
    permuted.y = Matrix(4, 12);
    const std::size_t perm[4] = {3, 1, 0, 2};
    for (std::size_t c = 0; c < 4; ++c)
        for (std::size_t t = 0; t < 16; ++t) permuted.x(c, t) = w.x(perm[c], t);

    const ForecastOutput a = dual_path_forward(model, w);
    const ForecastOutput b = dual_path_forward(model, permuted);
    for (std::size_t c = 0; c < 4; ++c)
        for (std::size_t t = 0; t < 12; ++t) CHECK(b.y_hat(c, t) == a.y_hat(perm[c], t));
}

TEST_CASE("training_loss is zero on a perfect forecast with zero separation") {
    Rng rng(21);
    ModelDims dims{16, 8, 4, 3};
    DualPathModel model = make_model(dims, 4, 8, nn::Activation::Relu, 22);
    model.codebook = random_codebook(rng, 3, 2);
    const series::WindowPair w = random_window(rng, 2, 16, 8);

    const ForecastOutput out = dual_path_forward(model, w);
    const TrainingLossResult loss = training_loss(model, out, out.y_hat, 0.0, 0.1);
    CHECK(loss.value == 0.0);
    CHECK(loss.pre_loss == 0.0);
}

TEST_CASE("training_loss reduces to the prediction loss when w_sep is zero") {
    Rng rng(23);
    ModelDims dims{16, 8, 4, 3};
    DualPathModel model = make_model(dims, 4, 8, nn::Activation::Relu, 24);
    model.codebook = random_codebook(rng, 3, 2);
    const series::WindowPair w = random_window(rng, 2, 16, 8);

    const ForecastOutput out = dual_path_forward(model, w);
    const TrainingLossResult loss = training_loss(model, out, w.y, 3.7, 0.0);
    CHECK(loss.value == loss.pre_loss);

    const TrainingLossResult with_sep = training_loss(model, out, w.y, 3.7, 0.5);
    CHECK(with_sep.value == doctest::Approx(loss.pre_loss + 0.5 * 3.7));
}

TEST_CASE("path isolation: quant gradients are unchanged when the residual path is zeroed") {
    Rng rng(25);
    ModelDims dims{16, 8, 4, 3};
    DualPathModel model = make_model(dims, 4, 8, nn::Activation::Relu, 26);
    model.codebook = random_codebook(rng, 3, 2);
    series::WindowPair w = random_window(rng, 2, 16, 8);

    // target far above any path output keeps the L1 sign pattern fixed, so
    // the two forwards see identical loss gradients per entry
    const ForecastOutput probe = dual_path_forward(model, w);
    for (std::size_t i = 0; i < w.y.size(); ++i)
        w.y.data()[i] = probe.y_hat.data()[i] + 1000.0;

    const ForecastOutput full = dual_path_forward(model, w);
    const TrainingLossResult full_loss = training_loss(model, full, w.y, 0.0, 0.0);

    ForwardOptions ablated;
    ablated.no_residual = true;
    const ForecastOutput abl = dual_path_forward(model, w, ablated);
    TrainingLossOptions opts;
    opts.no_residual = true;
    const TrainingLossResult abl_loss = training_loss(model, abl, w.y, 0.0, 0.0, opts);

    CHECK(grads_equal(full_loss.quant_grads, abl_loss.quant_grads));
    bool res_zero = true;
    for (const auto& layer : abl_loss.res_grads.layers) {
        for (std::size_t i = 0; i < layer.weights.size(); ++i)
            if (layer.weights.data()[i] != 0.0) res_zero = false;
        for (double b : layer.bias)
            if (b != 0.0) res_zero = false;
    }
    CHECK(res_zero);
}

TEST_CASE("straight-through: snapped and unsnapped forwards produce the same gradients") {
    Rng rng(27);
    ModelDims dims{8, 8, 8, 3};  // single input patch, single future patch
    DualPathModel model = make_model(dims, 5, 6, nn::Activation::Relu, 28);
    model.codebook = random_codebook(rng, 3, 4);
    series::WindowPair w = random_window(rng, 1, 8, 8);

    const ForecastOutput probe = dual_path_forward(model, w);
    for (std::size_t i = 0; i < w.y.size(); ++i)
        w.y.data()[i] = probe.y_hat.data()[i] + 1000.0;  // fixed sign pattern

    const ForecastOutput snapped = dual_path_forward(model, w);
    ForwardOptions unsnapped_options;
    unsnapped_options.snap = false;
    const ForecastOutput unsnapped = dual_path_forward(model, w, unsnapped_options);

    const TrainingLossResult a = training_loss(model, snapped, w.y, 0.0, 0.0);
    const TrainingLossResult b = training_loss(model, unsnapped, w.y, 0.0, 0.0);
    CHECK(grads_equal(a.quant_grads, b.quant_grads));
}

TEST_CASE("residual path gradient matches finite differences through the full loss") {
    Rng rng(29);
    ModelDims dims{8, 4, 4, 2};
    DualPathModel model = make_model(dims, 3, 6, nn::Activation::Relu, 30);
    model.codebook = random_codebook(rng, 2, 2);
    series::WindowPair w = random_window(rng, 2, 8, 4);
    const ForecastOutput probe = dual_path_forward(model, w);
    for (std::size_t i = 0; i < w.y.size(); ++i)
        w.y.data()[i] = probe.y_hat.data()[i] + (rng.unit() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.4, 1.2);

    const auto loss_fn = [&](const nn::MlpParams& res) {
        DualPathModel m = model;
        m.res_mlp = res;
        const ForecastOutput out = dual_path_forward(m, w);
        const TrainingLossResult loss = training_loss(m, out, w.y, 0.0, 0.0);
        return std::make_pair(loss.value, loss.res_grads);
    };
    const nn::GradCheckReport report = nn::grad_check(model.res_mlp, loss_fn);
    CHECK(report.max_rel_error <= 1e-4);
}

TEST_CASE("auxiliary codeword regression pulls the continuous head toward the target") {
    Rng rng(33);
    ModelDims dims{8, 8, 4, 2};
    DualPathModel model = make_model(dims, 4, 4, nn::Activation::Relu, 34);
    model.codebook = random_codebook(rng, 2, 2);
    series::WindowPair w = random_window(rng, 1, 8, 8);

    const ForecastOutput out = dual_path_forward(model, w);
    Matrix aux_targets(1, dims.quant_output_dim());
    for (std::size_t i = 0; i < aux_targets.size(); ++i)
        aux_targets.data()[i] = out.quant_continuous.data()[i];  // already matched

    TrainingLossOptions opts;
    opts.aux_weight = 1.0;
    opts.aux_targets = &aux_targets;
    const TrainingLossResult matched = training_loss(model, out, w.y, 0.0, 0.0, opts);
    const TrainingLossResult plain = training_loss(model, out, w.y, 0.0, 0.0);
    CHECK(matched.value == plain.value);  // zero aux residual adds nothing

    for (std::size_t i = 0; i < aux_targets.size(); ++i) aux_targets.data()[i] += 1.0;
    const TrainingLossResult pulled = training_loss(model, out, w.y, 0.0, 0.0, opts);
    CHECK(pulled.value > plain.value);
}
