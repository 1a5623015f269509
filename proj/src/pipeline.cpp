#include "recast/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace recast {

namespace {

// stable stream ids for the independent rng streams derived from the seed
constexpr std::uint64_t kStreamLloydSeed = 500;
constexpr std::uint64_t kStreamSampling = 600;
constexpr std::uint64_t kStreamBatchOrder = 700;

}  // namespace

Ablation parse_ablation(const std::string& text) {
    if (text == "no_residual") return Ablation::NoResidual;
    if (text == "no_updating") return Ablation::NoUpdating;
    if (text == "no_random") return Ablation::NoRandom;
    if (text == "no_scoring") return Ablation::NoScoring;
    if (text == "no_dro") return Ablation::NoDro;
    throw std::invalid_argument("unknown ablation '" + text + "'");
}

std::string ablation_name(Ablation a) {
    switch (a) {
        case Ablation::NoResidual: return "no_residual";
        case Ablation::NoUpdating: return "no_updating";
        case Ablation::NoRandom: return "no_random";
        case Ablation::NoScoring: return "no_scoring";
        case Ablation::NoDro: return "no_dro";
    }
    return "?";
}

std::string TrainConfig::canonical_string() const {
    std::ostringstream os;
    os.precision(17);
    os << "L=" << lookback << ";H=" << horizon << ";Lp=" << patch_len << ";K=" << k
       << ";gamma=" << gamma << ";w_sep=" << w_sep << ";lr=" << lr
       << ";sample_ratio=" << sample_ratio << ";eps=" << eps << ";epochs=" << epochs
       << ";patience=" << patience << ";batch=" << batch_size << ";seed=" << seed
       << ";lloyd_max_iters=" << lloyd_max_iters << ";stride=" << stride
       << ";quant_hidden=" << quant_hidden << ";res_hidden=" << res_hidden
       << ";weight_norm=" << weight_norm_mode_name(weight_norm)
       << ";sep_adjust=" << (sep_adjust ? 1 : 0) << ";sep_steps=" << sep_steps
       << ";aux=" << aux_codeword_weight << ";thin_training=" << (thin_training ? 1 : 0)
       << ";ablations=";
    for (Ablation a : ablations) os << ablation_name(a) << ",";
    return os.str();
}

std::uint64_t TrainConfig::hash() const {
    const std::string s = canonical_string();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

TrainState make_train_state(const TrainConfig& config) {
    TrainState state;
    state.model = make_model(config.dims(), config.quant_hidden, config.res_hidden,
                             nn::Activation::Relu, config.seed);
    state.quant_adam = nn::AdamState::zeros_like(state.model.quant_mlp);
    state.res_adam = nn::AdamState::zeros_like(state.model.res_mlp);
    return state;
}

std::vector<Vector> pool_downsampled_patches(const std::vector<series::WindowPair>& windows,
                                             std::size_t patch_len) {
    std::vector<Vector> pool;
    for (const auto& window : windows) {
        auto [x_norm, stats] = series::instance_normalize(window.x);
        (void)stats;
        const series::PatchSet set = series::patchify(x_norm, patch_len);
        for (const auto& patch : set.patches) pool.push_back(series::downsample(patch));
    }
    return pool;
}

std::vector<Vector> sample_patches(const std::vector<Vector>& all, double ratio,
                                   std::uint64_t seed, int epoch, bool take_all) {
    if (ratio <= 0.0 || ratio > 1.0)
        throw std::invalid_argument("sample_patches: ratio must be in (0, 1]");
    if (take_all || ratio == 1.0) return all;

    const std::size_t keep = static_cast<std::size_t>(ratio * static_cast<double>(all.size()));
    if (keep == 0) return all;  // fall back rather than cluster nothing

    Rng rng(split_seed(split_seed(seed, kStreamSampling), static_cast<std::uint64_t>(epoch)));
    const std::vector<std::size_t> picks = rng.sample_without_replacement(all.size(), keep);
    std::vector<Vector> sampled;
    sampled.reserve(keep);
    for (std::size_t i : picks) sampled.push_back(all[i]);
    return sampled;
}

EvalMetrics evaluate(const DualPathModel& model, const std::vector<series::WindowPair>& windows,
                     std::size_t horizon, const ForwardOptions& options) {
    if (windows.empty()) throw std::invalid_argument("evaluate: empty window set");
    const std::size_t h = horizon == 0 ? model.dims.horizon : horizon;
    if (h > model.dims.horizon)
        throw std::invalid_argument("evaluate: horizon " + std::to_string(h) +
                                    " exceeds model horizon " +
                                    std::to_string(model.dims.horizon));

    double se = 0.0, ae = 0.0;
    std::size_t count = 0;
    for (const auto& window : windows) {
        const ForecastOutput out = dual_path_forward(model, window, options);
        for (std::size_t c = 0; c < out.y_hat.rows(); ++c)
            for (std::size_t t = 0; t < h; ++t) {
                const double err = out.y_hat(c, t) - window.y(c, t);
                se += err * err;
                ae += std::abs(err);
                ++count;
            }
    }
    EvalMetrics metrics;
    metrics.mse = se / static_cast<double>(count);
    metrics.mae = ae / static_cast<double>(count);
    metrics.window_count = windows.size();
    return metrics;
}

EpochOutcome run_epoch(TrainState& state, const std::vector<series::WindowPair>& train_windows,
                       const std::vector<Vector>& patch_pool,
                       const std::vector<series::WindowPair>& valid_windows,
                       const TrainConfig& config) {
    if (train_windows.empty()) throw std::invalid_argument("run_epoch: no training windows");
    const int t = state.epoch + 1;

    EpochOutcome outcome;
    outcome.report.epoch = t;

    // --- codebook phase -----------------------------------------------
    const std::vector<Vector> sampled =
        sample_patches(patch_pool, config.sample_ratio, config.seed, t,
                       config.ablated(Ablation::NoRandom));

    Rng lloyd_rng(split_seed(config.seed, kStreamLloydSeed));
    const bool warm = state.model.codebook.epoch >= 1;
    Matrix init;
    if (warm) init = alignment_warm_start(state.model.codebook);
    LloydResult lloyd = lloyd_cluster(sampled, config.k, warm ? &init : nullptr,
                                      config.lloyd_max_iters, lloyd_rng, t);
    outcome.report.lloyd_iters = lloyd.iterations;

    if (config.sep_adjust && config.w_sep > 0.0)
        apply_separation_adjustment(lloyd.pseudo.centers, config.w_sep,
                                    nn::cosine_lr(config.lr, static_cast<std::size_t>(t - 1),
                                                  config.epochs),
                                    config.sep_steps);
    outcome.report.sep_loss = separation_loss(lloyd.pseudo.centers);

    const Matrix previous_codewords = warm ? state.model.codebook.codewords : Matrix();

    if (t == 1) {
        state.model.codebook = init_codebook(lloyd.pseudo);
        outcome.report.codebook_shift = 0.0;
    } else if (config.ablated(Ablation::NoUpdating)) {
        outcome.report.codebook_shift = 0.0;
    } else {
        Vector weights(config.k, 1.0);
        if (!config.ablated(Ablation::NoScoring)) {
            const Vector rep = score_rep(sampled, lloyd.pseudo.centers, lloyd.assignment);
            const Vector delta = score_delta(lloyd.pseudo.centers, previous_codewords);
            const Vector je = score_je(sampled, lloyd.pseudo.centers);
            std::vector<ScoreTriple> triples(config.k);
            for (std::size_t i = 0; i < config.k; ++i)
                triples[i] = {rep[i], delta[i], je[i]};
            const ReliabilityWeights fused = fuse_and_normalize(
                triples, config.gamma, config.weight_norm,
                config.ablated(Ablation::NoDro) ? FusionMode::Mean : FusionMode::Dro);
            weights = fused.normalized;
            for (std::size_t i = 0; i < config.k; ++i)
                outcome.scores.push_back({t, i, rep[i], delta[i], je[i], fused.fused[i],
                                          fused.normalized[i]});
        }
        const Codebook updated = incremental_update(state.model.codebook, lloyd.pseudo, weights);
        double shift_sq = 0.0;
        for (std::size_t i = 0; i < updated.codewords.size(); ++i) {
            const double d = updated.codewords.data()[i] - state.model.codebook.codewords.data()[i];
            shift_sq += d * d;
        }
        outcome.report.codebook_shift = std::sqrt(shift_sq);
        state.model.codebook = updated;

        outcome.report.weight_min = *std::min_element(weights.begin(), weights.end());
        outcome.report.weight_max = *std::max_element(weights.begin(), weights.end());
        double mean = 0.0;
        for (double w : weights) mean += w;
        outcome.report.weight_mean = mean / static_cast<double>(weights.size());
    }

    // --- gradient phase against the frozen S^t -------------------------
    const double lr = nn::cosine_lr(config.lr, static_cast<std::size_t>(t - 1), config.epochs);
    const bool no_residual = config.ablated(Ablation::NoResidual);
    ForwardOptions forward_options;
    forward_options.no_residual = no_residual;

    std::vector<std::size_t> order(train_windows.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng order_rng(split_seed(split_seed(config.seed, kStreamBatchOrder),
                             static_cast<std::uint64_t>(t)));
    order_rng.shuffle(order);
    if (config.thin_training) {
        const std::size_t keep = std::max<std::size_t>(
            1, static_cast<std::size_t>(config.sample_ratio *
                                        static_cast<double>(order.size())));
        order.resize(keep);
    }

    double loss_sum = 0.0;
    std::size_t n_seen = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
        const std::size_t end = std::min(order.size(), begin + config.batch_size);
        nn::MlpGrads quant_grads = nn::MlpGrads::zeros_like(state.model.quant_mlp);
        nn::MlpGrads res_grads = nn::MlpGrads::zeros_like(state.model.res_mlp);

        for (std::size_t i = begin; i < end; ++i) {
            const series::WindowPair& window = train_windows[order[i]];
            const ForecastOutput out = dual_path_forward(state.model, window, forward_options);
            if (out.q_x.codebook_epoch != state.model.codebook.epoch)
                throw std::logic_error("run_epoch: gradient step saw a stale codebook");

            TrainingLossOptions loss_options;
            loss_options.no_residual = no_residual;
            Matrix aux_targets;
            if (config.aux_codeword_weight > 0.0) {
                // regression targets: codewords of the true future patches
                Matrix y_norm(window.y.rows(), window.y.cols());
                for (std::size_t c = 0; c < y_norm.rows(); ++c)
                    for (std::size_t j = 0; j < y_norm.cols(); ++j)
                        y_norm(c, j) = (window.y(c, j) - out.stats.mean[c]) / out.stats.std[c];
                const auto target_q = quantize(
                    downsample_patches(series::patchify(y_norm, config.patch_len)),
                    state.model.codebook);
                aux_targets = Matrix(y_norm.rows(), state.model.dims.quant_output_dim());
                for (std::size_t c = 0; c < y_norm.rows(); ++c) {
                    const Vector emb = embed_indices(target_q.indices[c], state.model.codebook);
                    for (std::size_t j = 0; j < emb.size(); ++j) aux_targets(c, j) = emb[j];
                }
                loss_options.aux_weight = config.aux_codeword_weight;
                loss_options.aux_targets = &aux_targets;
            }

            TrainingLossResult loss = training_loss(state.model, out, window.y,
                                                    outcome.report.sep_loss, config.w_sep,
                                                    loss_options);
            if (!std::isfinite(loss.value))
                throw std::runtime_error("run_epoch: non-finite training loss at epoch " +
                                         std::to_string(t));
            loss_sum += loss.value;
            ++n_seen;
            quant_grads.accumulate(loss.quant_grads);
            if (!no_residual) res_grads.accumulate(loss.res_grads);
        }

        const double inv = 1.0 / static_cast<double>(end - begin);
        quant_grads.scale(inv);
        nn::adam_step(state.model.quant_mlp, quant_grads, state.quant_adam, lr);
        if (!no_residual) {
            res_grads.scale(inv);
            nn::adam_step(state.model.res_mlp, res_grads, state.res_adam, lr);
        }
    }
    outcome.report.train_loss = n_seen > 0 ? loss_sum / static_cast<double>(n_seen) : 0.0;

    if (!valid_windows.empty()) {
        const EvalMetrics valid = evaluate(state.model, valid_windows, 0, forward_options);
        outcome.report.valid_mse = valid.mse;
        outcome.report.valid_mae = valid.mae;
    }

    state.epoch = t;
    return outcome;
}

FitResult fit(const series::SplitFrames& splits, const TrainConfig& config,
              const EpochCallback& on_epoch) {
    const auto train_windows =
        series::make_windows(splits.train, config.lookback, config.horizon, config.stride);
    const auto valid_windows =
        series::make_windows(splits.valid, config.lookback, config.horizon, 1);
    if (train_windows.empty()) throw std::runtime_error("fit: no training windows fit the split");
    if (valid_windows.empty()) throw std::runtime_error("fit: no validation windows fit the split");
    if (train_windows.size() * splits.train.channels() * config.dims().n_patches() < config.k)
        throw std::runtime_error("fit: fewer training patches than codewords");

    const std::vector<Vector> patch_pool =
        pool_downsampled_patches(train_windows, config.patch_len);

    TrainState state = make_train_state(config);
    FitResult result;
    result.best_valid_mse = std::numeric_limits<double>::max();
    EarlyStopper stopper;
    stopper.patience = config.patience;

    for (std::size_t t = 1; t <= config.epochs; ++t) {
        EpochOutcome outcome = run_epoch(state, train_windows, patch_pool, valid_windows, config);
        result.history.push_back(outcome.report);
        result.scores.insert(result.scores.end(), outcome.scores.begin(), outcome.scores.end());

        const bool stop = stopper.observe(outcome.report.valid_mse);
        if (stopper.improved()) {
            result.best_valid_mse = outcome.report.valid_mse;
            result.best_epoch = outcome.report.epoch;
            result.model = state.model;
        }
        if (on_epoch) on_epoch(outcome, state.model, stopper.improved());
        if (stop) break;
    }
    result.epochs_run = result.history.size();
    return result;
}

}  // namespace recast
