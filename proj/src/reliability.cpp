#include "recast/reliability.hpp"

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

// exp(numerator_exponent - denominator_exponent) with the role of the
// epsilon guard in the score denominators folded into a floor: the ratio
// stays inside (0, 1] even when the difference underflows.
double stable_exp_ratio(double diff) {
    return std::max(std::exp(diff), std::numeric_limits<double>::epsilon());
}

}  // namespace

Vector score_rep(const std::vector<Vector>& patches, const Matrix& centers,
                 const Assignment& assignment) {
    if (patches.empty()) throw std::invalid_argument("score_rep: empty patch set");
    if (assignment.labels.size() != patches.size())
        throw std::invalid_argument("score_rep: assignment does not match patches");

    const std::size_t k = centers.rows();
    Vector cluster_error(k, 0.0);
    for (std::size_t i = 0; i < patches.size(); ++i)
        cluster_error[assignment.labels[i]] +=
            squared_distance(patches[i], centers.row(assignment.labels[i]), centers.cols());

    double total = 0.0;
    for (double e : cluster_error) total += e;

    Vector scores(k);
    for (std::size_t c = 0; c < k; ++c)
        scores[c] = 1.0 - stable_exp_ratio(cluster_error[c] - total);
    return scores;
}

Vector score_delta(const Matrix& pseudo_centers, const Matrix& previous_codewords) {
    if (!pseudo_centers.same_shape(previous_codewords))
        throw std::invalid_argument("score_delta: shape mismatch " + shape_string(pseudo_centers) +
                                    " vs " + shape_string(previous_codewords));
    const std::size_t k = pseudo_centers.rows();
    Vector deviation(k, 0.0);
    double total = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
        double d = 0.0;
        for (std::size_t j = 0; j < pseudo_centers.cols(); ++j) {
            const double diff = pseudo_centers(c, j) - previous_codewords(c, j);
            d += diff * diff;
        }
        deviation[c] = d;
        total += d;
    }
    Vector scores(k);
    for (std::size_t c = 0; c < k; ++c) scores[c] = stable_exp_ratio(deviation[c] - total);
    return scores;
}

Vector score_je(const std::vector<Vector>& patches, const Matrix& centers) {
    if (patches.empty()) throw std::invalid_argument("score_je: empty patch set");
    const std::size_t k = centers.rows();
    Vector energy(k, 0.0);
    for (std::size_t c = 0; c < k; ++c) {
        const double* word = centers.row(c);
        double acc = 0.0;
        for (const auto& patch : patches)
            for (std::size_t j = 0; j < centers.cols(); ++j) acc += std::abs(patch[j] - word[j]);
        energy[c] = acc;
    }
    double total = 0.0;
    for (double e : energy) total += e;

    Vector scores(k);
    for (std::size_t c = 0; c < k; ++c) scores[c] = 1.0 - stable_exp_ratio(energy[c] - total);
    return scores;
}

double dro_fuse(const ScoreTriple& z, double gamma) {
    if (gamma <= 0.0) throw std::invalid_argument("dro_fuse: gamma must be positive");
    const double zs[3] = {z.rep, z.delta, z.je};
    const double m = std::min({zs[0], zs[1], zs[2]});
    double sum = 0.0;
    for (double v : zs) sum += std::exp(-(v - m) / gamma);
    return m - gamma * std::log(sum);
}

double kl_ball_oracle(const ScoreTriple& z, double gamma, std::size_t grid_resolution) {
    if (grid_resolution < 100)
        throw std::invalid_argument("kl_ball_oracle: grid resolution must be >= 100");
    const double zs[3] = {z.rep, z.delta, z.je};
    const double res = static_cast<double>(grid_resolution);
    const double log3 = std::log(3.0);

    // xlogx with the 0*log(0) = 0 convention
    auto xlogx = [](double x) { return x > 0.0 ? x * std::log(x) : 0.0; };
    auto objective = [&](double t0, double t1, double t2) {
        return t0 * zs[0] + t1 * zs[1] + t2 * zs[2] +
               gamma * (xlogx(t0) + xlogx(t1) + xlogx(t2) + log3);
    };

    double best = std::numeric_limits<double>::max();
    double arg0 = 1.0 / 3.0, arg1 = 1.0 / 3.0;
    for (std::size_t a = 0; a <= grid_resolution; ++a) {
        for (std::size_t b = 0; b + a <= grid_resolution; ++b) {
            const double t0 = static_cast<double>(a) / res;
            const double t1 = static_cast<double>(b) / res;
            const double t2 = static_cast<double>(grid_resolution - a - b) / res;
            const double value = objective(t0, t1, t2);
            if (value < best) {
                best = value;
                arg0 = t0;
                arg1 = t1;
            }
        }
    }

    // refine around the coarse argmin: one lattice scan leaves up to
    // ~gamma * (2/res)^2 / theta_min of discretization error, above the
    // 1e-4 budget near a simplex face
    const double width = 2.0 / res;
    const std::size_t fine = 160;
    const double lo0 = std::max(0.0, arg0 - width);
    const double hi0 = std::min(1.0, arg0 + width);
    const double lo1 = std::max(0.0, arg1 - width);
    const double hi1 = std::min(1.0, arg1 + width);
    for (std::size_t i = 0; i <= fine; ++i) {
        const double t0 = lo0 + (hi0 - lo0) * static_cast<double>(i) / static_cast<double>(fine);
        for (std::size_t j = 0; j <= fine; ++j) {
            const double t1 = lo1 + (hi1 - lo1) * static_cast<double>(j) / static_cast<double>(fine);
            const double t2 = 1.0 - t0 - t1;
            if (t2 < 0.0) continue;
            best = std::min(best, objective(t0, t1, t2));
        }
    }
    return best - gamma * log3;
}

ReliabilityWeights fuse_and_normalize(const std::vector<ScoreTriple>& scores, double gamma,
                                      WeightNormMode mode, FusionMode fusion) {
    if (scores.empty()) throw std::invalid_argument("fuse_and_normalize: no scores");
    ReliabilityWeights weights;
    weights.gamma = gamma;
    weights.fused.reserve(scores.size());
    for (const auto& z : scores) {
        const double fused = fusion == FusionMode::Dro
                                 ? dro_fuse(z, gamma)
                                 : (z.rep + z.delta + z.je) / 3.0;
        if (!std::isfinite(fused))
            throw std::runtime_error("fuse_and_normalize: non-finite fused score");
        weights.fused.push_back(fused);
    }

    // softmax of the fused scores: positive, order-preserving
    const double max_fused = *std::max_element(weights.fused.begin(), weights.fused.end());
    Vector soft(weights.fused.size());
    double total = 0.0;
    for (std::size_t i = 0; i < soft.size(); ++i) {
        soft[i] = std::exp(weights.fused[i] - max_fused);
        total += soft[i];
    }
    const double scale =
        mode == WeightNormMode::MeanOne ? static_cast<double>(soft.size()) / total : 1.0 / total;
    weights.normalized.resize(soft.size());
    for (std::size_t i = 0; i < soft.size(); ++i) weights.normalized[i] = soft[i] * scale;
    return weights;
}

WeightNormMode parse_weight_norm_mode(const std::string& text) {
    if (text == "mean_one") return WeightNormMode::MeanOne;
    if (text == "sum_one") return WeightNormMode::SumOne;
    throw std::invalid_argument("unknown weight norm mode '" + text +
                                "' (expected mean_one|sum_one)");
}

std::string weight_norm_mode_name(WeightNormMode mode) {
    return mode == WeightNormMode::MeanOne ? "mean_one" : "sum_one";
}

}  // namespace recast
