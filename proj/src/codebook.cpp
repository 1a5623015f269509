#include "recast/codebook.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace recast {

namespace {

double squared_distance(const Vector& a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

Matrix kmeans_pp_seed(const std::vector<Vector>& patches, std::size_t k, Rng& rng) {
    const std::size_t dim = patches.front().size();
    Matrix centers(k, dim);
    std::vector<std::size_t> chosen;
    chosen.push_back(rng.index(patches.size()));

    std::vector<double> dist_sq(patches.size(), std::numeric_limits<double>::max());
    while (chosen.size() < k) {
        const Vector& last = patches[chosen.back()];
        double total = 0.0;
        for (std::size_t i = 0; i < patches.size(); ++i) {
            dist_sq[i] = std::min(dist_sq[i], squared_distance(patches[i], last.data(), dim));
            total += dist_sq[i];
        }
        std::size_t next = 0;
        if (total <= 0.0) {
            next = rng.index(patches.size());
        } else {
            double r = rng.unit() * total;
            for (std::size_t i = 0; i < patches.size(); ++i) {
                r -= dist_sq[i];
                if (r <= 0.0) {
                    next = i;
                    break;
                }
                next = i;
            }
        }
        chosen.push_back(next);
    }
    for (std::size_t c = 0; c < k; ++c)
        for (std::size_t j = 0; j < dim; ++j) centers(c, j) = patches[chosen[c]][j];
    return centers;
}

}  // namespace

DownsampledPatches downsample_patches(const series::PatchSet& set) {
    DownsampledPatches out;
    out.channels = set.channels;
    out.per_channel = set.patches_per_channel;
    out.patches.reserve(set.patches.size());
    for (const auto& patch : set.patches) out.patches.push_back(series::downsample(patch));
    return out;
}

std::size_t nearest_codeword(const Vector& patch, const Matrix& codewords) {
    if (patch.size() != codewords.cols())
        throw std::invalid_argument("nearest_codeword: patch dim " + std::to_string(patch.size()) +
                                    " != codeword dim " + std::to_string(codewords.cols()));
    std::size_t best = 0;
    double best_dist = std::numeric_limits<double>::max();
    for (std::size_t k = 0; k < codewords.rows(); ++k) {
        const double d = squared_distance(patch, codewords.row(k), codewords.cols());
        if (d < best_dist) {
            best_dist = d;
            best = k;
        }
    }
    return best;
}

QuantizedSeries quantize(const DownsampledPatches& patches, const Codebook& codebook) {
    QuantizedSeries q;
    q.codebook_epoch = codebook.epoch;
    q.indices.assign(patches.channels, std::vector<std::size_t>(patches.per_channel, 0));
    for (std::size_t i = 0; i < patches.patches.size(); ++i) {
        const std::size_t c = i / patches.per_channel;
        const std::size_t p = i % patches.per_channel;
        q.indices[c][p] = nearest_codeword(patches.patches[i], codebook.codewords);
    }
    return q;
}

Matrix reconstruct(const QuantizedSeries& quantized, const Codebook& codebook,
                   std::size_t out_len) {
    const std::size_t patch_len = codebook.dim() * 2;
    Matrix out(quantized.channels(), out_len);
    for (std::size_t c = 0; c < quantized.channels(); ++c) {
        std::size_t t = 0;
        for (std::size_t p = 0; p < quantized.per_channel() && t < out_len; ++p) {
            const std::size_t id = quantized.indices[c][p];
            if (id >= codebook.size())
                throw std::out_of_range("reconstruct: codeword index out of range");
            const double* word = codebook.codewords.row(id);
            for (std::size_t i = 0; i < patch_len && t < out_len; ++i, ++t)
                out(c, t) = word[i / 2];  // upsample by repeat
        }
        if (t < out_len)
            throw std::invalid_argument("reconstruct: not enough patches to cover output length");
    }
    return out;
}

double clustering_energy(const std::vector<Vector>& patches, const Matrix& centers,
                         const std::vector<std::size_t>& labels) {
    double energy = 0.0;
    for (std::size_t i = 0; i < patches.size(); ++i)
        energy += squared_distance(patches[i], centers.row(labels[i]), centers.cols());
    return energy;
}

LloydResult lloyd_cluster(const std::vector<Vector>& patches, std::size_t k,
                          const Matrix* init_centers, std::size_t max_iters, Rng& rng,
                          int epoch) {
    if (patches.empty()) throw std::invalid_argument("lloyd_cluster: empty input");
    if (patches.size() < k)
        throw std::invalid_argument("lloyd_cluster: fewer patches (" +
                                    std::to_string(patches.size()) + ") than clusters (" +
                                    std::to_string(k) + ")");
    const std::size_t dim = patches.front().size();

    Matrix centers;
    if (init_centers) {
        if (init_centers->rows() != k || init_centers->cols() != dim)
            throw std::invalid_argument("lloyd_cluster: init centers have wrong shape");
        centers = *init_centers;
    } else {
        centers = kmeans_pp_seed(patches, k, rng);
    }

    LloydResult result;
    std::vector<std::size_t> labels(patches.size(), 0);
    std::vector<std::size_t> prev_labels;

    for (std::size_t iter = 0; iter < max_iters; ++iter) {
        for (std::size_t i = 0; i < patches.size(); ++i)
            labels[i] = nearest_codeword(patches[i], centers);

        result.energy_trace.push_back(clustering_energy(patches, centers, labels));
        result.iterations = iter + 1;

        if (iter > 0 && labels == prev_labels) break;
        prev_labels = labels;

        // per-cluster mean (Lloyd update under identity weighting)
        Matrix sums(k, dim);
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < patches.size(); ++i) {
            double* row = sums.row(labels[i]);
            for (std::size_t j = 0; j < dim; ++j) row[j] += patches[i][j];
            ++counts[labels[i]];
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] == 0) continue;
            for (std::size_t j = 0; j < dim; ++j)
                centers(c, j) = sums(c, j) / static_cast<double>(counts[c]);
        }

        // reseed each empty cluster at the currently worst-represented patch
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] != 0) continue;
            double worst = -1.0;
            std::size_t worst_patch = 0;
            for (std::size_t i = 0; i < patches.size(); ++i) {
                if (counts[labels[i]] <= 1) continue;  // keep donor clusters non-empty
                const double d = squared_distance(patches[i], centers.row(labels[i]), dim);
                if (d > worst) {
                    worst = d;
                    worst_patch = i;
                }
            }
            for (std::size_t j = 0; j < dim; ++j) centers(c, j) = patches[worst_patch][j];
            --counts[labels[worst_patch]];
            labels[worst_patch] = c;
            counts[c] = 1;
        }
    }

    // one closing mean update on the final labels; a repair on the last
    // iteration can otherwise leave a donor center away from its cluster mean
    {
        Matrix sums(k, dim);
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < patches.size(); ++i) {
            double* row = sums.row(labels[i]);
            for (std::size_t j = 0; j < dim; ++j) row[j] += patches[i][j];
            ++counts[labels[i]];
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] == 0) continue;
            for (std::size_t j = 0; j < dim; ++j)
                centers(c, j) = sums(c, j) / static_cast<double>(counts[c]);
        }
    }

    result.pseudo.centers = std::move(centers);
    result.pseudo.epoch = epoch;
    result.assignment.labels = std::move(labels);
    result.assignment.counts.assign(k, 0);
    for (std::size_t label : result.assignment.labels) ++result.assignment.counts[label];
    return result;
}

Codebook init_codebook(const PseudoCodebook& pseudo) {
    if (pseudo.epoch != 1)
        throw std::invalid_argument("init_codebook: expected an epoch-1 pseudo codebook, got epoch " +
                                    std::to_string(pseudo.epoch));
    Codebook book;
    book.codewords = pseudo.centers;
    book.epoch = 1;
    return book;
}

Codebook incremental_update(const Codebook& previous, const PseudoCodebook& pseudo,
                            const Vector& weights) {
    if (!previous.codewords.same_shape(pseudo.centers))
        throw std::invalid_argument("incremental_update: codebook/pseudo shape mismatch");
    if (weights.size() != previous.size())
        throw std::invalid_argument("incremental_update: weight count mismatch");
    if (pseudo.epoch != previous.epoch + 1 || pseudo.epoch < 2)
        throw std::invalid_argument("incremental_update: epoch must advance by one (got " +
                                    std::to_string(previous.epoch) + " -> " +
                                    std::to_string(pseudo.epoch) + ")");
    for (double w : weights)
        if (!std::isfinite(w))
            throw std::invalid_argument("incremental_update: non-finite weight");

    const double t = static_cast<double>(pseudo.epoch);
    Codebook next;
    next.epoch = pseudo.epoch;
    next.codewords = Matrix(previous.size(), previous.dim());
    for (std::size_t k = 0; k < previous.size(); ++k)
        for (std::size_t j = 0; j < previous.dim(); ++j) {
            const double prev = previous.codewords(k, j);
            next.codewords(k, j) = prev + (weights[k] * pseudo.centers(k, j) - prev) / t;
        }
    return next;
}

double separation_loss(const Matrix& centers) {
    const double tau = std::max(centers.frobenius_sq(), 1e-12);
    double sum = 0.0;
    for (std::size_t i = 0; i < centers.rows(); ++i)
        for (std::size_t j = 0; j < centers.rows(); ++j) {
            double d = 0.0;
            for (std::size_t c = 0; c < centers.cols(); ++c) {
                const double diff = centers(i, c) - centers(j, c);
                d += diff * diff;
            }
            sum += std::exp(-d / tau);
        }
    return std::log(sum);
}

Matrix separation_loss_grad(const Matrix& centers) {
    const double tau = std::max(centers.frobenius_sq(), 1e-12);
    const std::size_t k = centers.rows();
    const std::size_t dim = centers.cols();

    double total = 0.0;
    Matrix weights(k, k);  // exp(-d_ij / tau)
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) {
            double d = 0.0;
            for (std::size_t c = 0; c < dim; ++c) {
                const double diff = centers(i, c) - centers(j, c);
                d += diff * diff;
            }
            weights(i, j) = std::exp(-d / tau);
            total += weights(i, j);
        }

    // d/ds_a log sum exp(-d_ij/tau) = (-4 / (tau * total)) sum_j w_aj (s_a - s_j)
    Matrix grad(k, dim);
    for (std::size_t a = 0; a < k; ++a)
        for (std::size_t j = 0; j < k; ++j) {
            const double coeff = -4.0 * weights(a, j) / (tau * total);
            for (std::size_t c = 0; c < dim; ++c)
                grad(a, c) += coeff * (centers(a, c) - centers(j, c));
        }
    return grad;
}

void apply_separation_adjustment(Matrix& centers, double weight, double step_size, int steps) {
    if (weight == 0.0 || steps <= 0) return;
    for (int s = 0; s < steps; ++s) {
        const Matrix grad = separation_loss_grad(centers);
        for (std::size_t i = 0; i < centers.size(); ++i)
            centers.data()[i] -= weight * step_size * grad.data()[i];
    }
}

Matrix alignment_warm_start(const Codebook& previous) {
    if (previous.epoch < 1)
        throw std::invalid_argument("alignment_warm_start: previous codebook not initialized");
    return previous.codewords;
}

}  // namespace recast
