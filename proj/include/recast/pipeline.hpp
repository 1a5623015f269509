#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include "recast/forecaster.hpp"
#include "recast/reliability.hpp"
#include "recast/series.hpp"

namespace recast {

enum class Ablation { NoResidual, NoUpdating, NoRandom, NoScoring, NoDro };

Ablation parse_ablation(const std::string& text);
std::string ablation_name(Ablation a);

struct TrainConfig {
    std::size_t lookback = 96;    // L
    std::size_t horizon = 96;     // H
    std::size_t patch_len = 16;   // L_p
    std::size_t k = 8;            // codebook size
    double gamma = 1.0;
    double w_sep = 0.1;
    double lr = 3e-4;
    double sample_ratio = 0.5;
    double eps = 1e-5;
    std::size_t epochs = 30;
    std::size_t patience = 5;
    std::size_t batch_size = 32;
    std::uint64_t seed = 1;
    std::size_t lloyd_max_iters = 50;
    std::size_t stride = 1;
    std::size_t quant_hidden = 32;
    std::size_t res_hidden = 512;
    std::set<Ablation> ablations;
    WeightNormMode weight_norm = WeightNormMode::MeanOne;
    bool sep_adjust = true;  // explicit pathway for the separation term
    int sep_steps = 1;
    double aux_codeword_weight = 0.0;
    bool thin_training = false;  // extend patch sampling to the gradient pass

    bool ablated(Ablation a) const { return ablations.count(a) > 0; }
    ModelDims dims() const { return {lookback, horizon, patch_len, k}; }
    std::string canonical_string() const;
    std::uint64_t hash() const;  // FNV-1a of canonical_string
};

struct EpochReport {
    int epoch = 0;
    double train_loss = 0.0;
    double valid_mse = 0.0;
    double valid_mae = 0.0;
    std::size_t lloyd_iters = 0;
    double codebook_shift = 0.0;  // ||S^t - S^{t-1}||_F
    double weight_min = 1.0;
    double weight_max = 1.0;
    double weight_mean = 1.0;
    double sep_loss = 0.0;
};

/// One line per (epoch, codeword) in the metrics stream.
struct ScoreRecord {
    int epoch = 0;
    std::size_t k = 0;
    double rep = 0.0;
    double delta = 0.0;
    double je = 0.0;
    double fused = 0.0;
    double normalized = 1.0;
};

struct TrainState {
    DualPathModel model;
    nn::AdamState quant_adam;
    nn::AdamState res_adam;
    int epoch = 0;  // completed epochs
};

TrainState make_train_state(const TrainConfig& config);

/// Every downsampled patch of every window, channel-major within windows;
/// the clustering corpus before sampling.
std::vector<Vector> pool_downsampled_patches(const std::vector<series::WindowPair>& windows,
                                             std::size_t patch_len);

/// Uniform sample without replacement, reseeded deterministically from
/// (seed, epoch). take_all short-circuits (the -Random ablation); an empty
/// sample falls back to all patches.
std::vector<Vector> sample_patches(const std::vector<Vector>& all, double ratio,
                                   std::uint64_t seed, int epoch, bool take_all = false);

struct EpochOutcome {
    EpochReport report;
    std::vector<ScoreRecord> scores;
};

/// One epoch of the training loop: sample -> cluster (warm-started) -> score
/// -> fuse -> codebook update -> minibatch gradient passes against the
/// frozen S^t at the cosine-scheduled learning rate.
EpochOutcome run_epoch(TrainState& state, const std::vector<series::WindowPair>& train_windows,
                       const std::vector<Vector>& patch_pool,
                       const std::vector<series::WindowPair>& valid_windows,
                       const TrainConfig& config);

struct EvalMetrics {
    double mse = 0.0;
    double mae = 0.0;
    std::size_t window_count = 0;
};

/// Original-scale MSE/MAE over all windows, channels, horizon steps.
/// horizon = 0 means the model's own horizon; smaller values truncate.
EvalMetrics evaluate(const DualPathModel& model, const std::vector<series::WindowPair>& windows,
                     std::size_t horizon = 0, const ForwardOptions& options = {});

/// Patience rule on validation MSE: a run ends once `patience` consecutive
/// non-improving epochs accumulate (the next epoch never starts).
struct EarlyStopper {
    std::size_t patience = 5;
    double best = std::numeric_limits<double>::max();
    std::size_t non_improving = 0;

    /// Returns true when training should stop after the observed epoch.
    bool observe(double valid_mse) {
        if (valid_mse < best) {
            best = valid_mse;
            non_improving = 0;
            return false;
        }
        return ++non_improving >= patience;
    }

    bool improved() const { return non_improving == 0; }
};

struct FitResult {
    DualPathModel model;  // best-epoch checkpoint
    int best_epoch = 0;
    double best_valid_mse = 0.0;
    std::vector<EpochReport> history;
    std::vector<ScoreRecord> scores;
    std::size_t epochs_run = 0;
};

/// Fires after each epoch's bookkeeping; `improved` marks a new best
/// validation MSE (the moment a checkpoint is worth writing).
using EpochCallback =
    std::function<void(const EpochOutcome&, const DualPathModel& current, bool improved)>;

/// Trains up to config.epochs epochs with early stopping on validation MSE
/// (stop after `patience` consecutive non-improving epochs), returning the
/// best checkpoint.
FitResult fit(const series::SplitFrames& splits, const TrainConfig& config,
              const EpochCallback& on_epoch = nullptr);

}  // namespace recast
