#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "recast/matrix.hpp"

namespace recast::series {

/// Multichannel series, channels x timesteps. Immutable after load.
struct SeriesFrame {
    Matrix values;  // C x T
    std::vector<std::string> channel_names;

    std::size_t channels() const { return values.rows(); }
    std::size_t timesteps() const { return values.cols(); }
};

/// CSV with one header row; an optional leading timestamp column (header
/// "date" or a non-parsable first field) is dropped.
SeriesFrame load_csv(const std::string& path);

enum class DatasetKind { Ett, Other };

DatasetKind parse_dataset_kind(const std::string& text);
std::string dataset_kind_name(DatasetKind kind);

struct SplitFrames {
    SeriesFrame train;
    SeriesFrame valid;
    SeriesFrame test;
};

/// Chronological split at floor boundaries: 6:2:2 for ett, 7:1:2 otherwise.
/// When min_split_len > 0, every split must be at least that long (one
/// lookback+horizon window), else the dataset is rejected.
SplitFrames split_frame(const SeriesFrame& frame, DatasetKind kind, std::size_t min_split_len = 0);

struct WindowPair {
    Matrix x;  // C x L
    Matrix y;  // C x H
    std::size_t origin_index = 0;
};

std::vector<WindowPair> make_windows(const SeriesFrame& frame, std::size_t lookback,
                                     std::size_t horizon, std::size_t stride = 1);

/// Per-channel standardization statistics of one lookback window.
struct NormStats {
    Vector mean;
    Vector std;  // sqrt(var + eps), strictly positive
    double eps = 1e-5;
};

std::pair<Matrix, NormStats> instance_normalize(const Matrix& x, double eps = 1e-5);
Matrix instance_denormalize(const Matrix& y_norm, const NormStats& stats);

/// Channel-major patches of one normalized window. A short final patch is
/// right-padded by repeating the channel's last value; `pad` records the
/// extent so unpatchify is exact.
struct PatchSet {
    std::vector<Vector> patches;                             // C*N entries of length patch_len
    std::vector<std::pair<std::size_t, std::size_t>> index_map;  // (channel, patch position)
    std::size_t patch_len = 0;                               // L_p
    std::size_t patches_per_channel = 0;                     // N = ceil(L / L_p)
    std::size_t channels = 0;
    std::size_t pad = 0;                                     // padded values in the final patch
    std::size_t source_len = 0;                              // L
};

PatchSet patchify(const Matrix& x_norm, std::size_t patch_len);
Matrix unpatchify(const PatchSet& patches);

/// Adjacent-pair mean pooling; input length must be even.
Vector downsample(const Vector& patch);

/// Nearest-neighbor repeat; exact right-inverse of downsample on
/// pair-constant signals.
Vector upsample(const Vector& half_patch);

struct SynthSpec {
    std::size_t channels = 3;
    std::size_t timesteps = 3000;
    std::size_t motif_count = 3;
    std::size_t motif_len = 32;
    std::size_t occurrences = 4;  // per motif per channel
    double noise_sigma = 0.1;
    double amp1 = 1.0;
    double period1 = 96.0;
    double amp2 = 0.5;
    double period2 = 48.0;
};

struct MotifPlacement {
    std::size_t channel = 0;
    std::size_t motif_id = 0;
    std::size_t position = 0;
};

struct SynthResult {
    SeriesFrame frame;
    std::vector<Vector> motifs;               // motif templates, each length motif_len
    std::vector<MotifPlacement> placements;   // where each occurrence was written
};

/// Two sinusoids + recurring motif templates written at non-overlapping
/// random positions + Gaussian noise. Deterministic per seed.
SynthResult synth_generate(const SynthSpec& spec, std::uint64_t seed);

void write_csv(const SeriesFrame& frame, const std::string& path);

}  // namespace recast::series
