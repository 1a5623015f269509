#pragma once

#include <vector>

#include "recast/matrix.hpp"
#include "recast/rng.hpp"
#include "recast/series.hpp"

namespace recast {

/// K codewords in downsampled patch space (rows of length L_p/2), plus the
/// epoch at which they were produced. Updated only by incremental_update,
/// never by gradient.
struct Codebook {
    Matrix codewords;  // K x (L_p/2)
    int epoch = 0;

    std::size_t size() const { return codewords.rows(); }
    std::size_t dim() const { return codewords.cols(); }
};

/// Cluster centers of one epoch, before merging into the codebook.
struct PseudoCodebook {
    Matrix centers;  // K x (L_p/2)
    int epoch = 0;
};

/// Row-wise encoding of the binary membership matrix: labels[i] is the
/// cluster of sampled patch i.
struct Assignment {
    std::vector<std::size_t> labels;
    std::vector<std::size_t> counts;  // per cluster
};

/// Codeword ids per channel and patch position.
struct QuantizedSeries {
    std::vector<std::vector<std::size_t>> indices;  // C rows of N ids
    int codebook_epoch = 0;

    std::size_t channels() const { return indices.size(); }
    std::size_t per_channel() const { return indices.empty() ? 0 : indices.front().size(); }
};

/// Downsampled view of a PatchSet: channel-major patches of length L_p/2.
struct DownsampledPatches {
    std::vector<Vector> patches;
    std::size_t channels = 0;
    std::size_t per_channel = 0;
};

DownsampledPatches downsample_patches(const series::PatchSet& set);

/// Nearest codeword per patch by squared distance; ties go to the lowest
/// index.
QuantizedSeries quantize(const DownsampledPatches& patches, const Codebook& codebook);

std::size_t nearest_codeword(const Vector& patch, const Matrix& codewords);

/// Codebook lookup + upsample + concatenate per channel, truncated to
/// out_len. Realizes X_q (and Y_q when fed future indices).
Matrix reconstruct(const QuantizedSeries& quantized, const Codebook& codebook, std::size_t out_len);

struct LloydResult {
    PseudoCodebook pseudo;
    Assignment assignment;
    std::vector<double> energy_trace;  // clustering energy after each assignment pass
    std::size_t iterations = 0;
};

/**
 * Matrix-form Lloyd clustering with identity weighting: alternate
 * nearest-center assignment and per-cluster mean update until labels are
 * stable or max_iters is hit. Empty clusters are reseeded at the patch
 * farthest from its assigned center. When init_centers is null, k-means++
 * seeding draws from rng.
 */
LloydResult lloyd_cluster(const std::vector<Vector>& patches, std::size_t k,
                          const Matrix* init_centers, std::size_t max_iters, Rng& rng,
                          int epoch = 1);

double clustering_energy(const std::vector<Vector>& patches, const Matrix& centers,
                         const std::vector<std::size_t>& labels);

/// S^1 = pseudo codebook of epoch 1, copied verbatim.
Codebook init_codebook(const PseudoCodebook& pseudo);

/// S^t = S^{t-1} + (1/t)(diag(weights) pseudo - S^{t-1}).
Codebook incremental_update(const Codebook& previous, const PseudoCodebook& pseudo,
                            const Vector& weights);

/// log sum_{i,j} exp(-||s_i - s_j||^2 / tau), tau = ||S||_F^2 floored at
/// 1e-12; diagonal terms included.
double separation_loss(const Matrix& centers);

/// Gradient of separation_loss with tau frozen at its current value.
Matrix separation_loss_grad(const Matrix& centers);

/// Descend separation_loss on the centers (the explicit pathway for the
/// diversity term; the closed-form center update has no gradient route).
void apply_separation_adjustment(Matrix& centers, double weight, double step_size, int steps);

/// Lloyd initialization from the previous epoch's codewords, keeping cluster
/// index k aligned with codeword k across epochs.
Matrix alignment_warm_start(const Codebook& previous);

}  // namespace recast
