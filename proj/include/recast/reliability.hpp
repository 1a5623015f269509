#pragma once

#include <vector>

#include "recast/codebook.hpp"
#include "recast/matrix.hpp"

namespace recast {

/// Per-codeword reliability scores: representational quality, historical
/// consistency, and OOD sensitivity.
struct ScoreTriple {
    double rep = 0.0;    // in [0,1)
    double delta = 0.0;  // in (0,1]
    double je = 0.0;     // in [0,1)
};

/// w_rep,k = 1 - exp(E_k - E_tot), E_k the squared intra-cluster
/// reconstruction error of cluster k. Log-domain form of the exponential
/// ratio; never overflows.
Vector score_rep(const std::vector<Vector>& patches, const Matrix& centers,
                 const Assignment& assignment);

/// w_delta,k = exp(d_k - d_tot), d_k the squared deviation of pseudo
/// codeword k from the previous epoch's codeword k.
Vector score_delta(const Matrix& pseudo_centers, const Matrix& previous_codewords);

/// w_je,k = 1 - exp(A_k - A_tot), A_k the elementwise L1 distance from all
/// sampled patches to codeword k.
Vector score_je(const std::vector<Vector>& patches, const Matrix& centers);

/// Closed-form worst-case expected score over a KL ball around the uniform
/// distribution: -gamma * log sum_i exp(-z_i / gamma), evaluated stably.
double dro_fuse(const ScoreTriple& z, double gamma);

/// Brute-force minimum of <theta, z> + gamma * KL(theta || u) over a
/// barycentric grid on the 3-simplex, minus gamma*log(3). Equals dro_fuse up
/// to grid error; this is the verification oracle, independent of the
/// closed form.
double kl_ball_oracle(const ScoreTriple& z, double gamma, std::size_t grid_resolution);

enum class WeightNormMode { MeanOne, SumOne };
enum class FusionMode { Dro, Mean };

struct ReliabilityWeights {
    Vector fused;       // dro_fuse per codeword
    Vector normalized;  // positive, mean 1 (MeanOne) or sum 1 (SumOne)
    double gamma = 1.0;
};

/// Softmax of the fused scores, rescaled per mode. Order-preserving and
/// strictly positive. FusionMode::Mean replaces the DRO softmin with the
/// plain mean of the three scores (the -DRO ablation).
ReliabilityWeights fuse_and_normalize(const std::vector<ScoreTriple>& scores, double gamma,
                                      WeightNormMode mode = WeightNormMode::MeanOne,
                                      FusionMode fusion = FusionMode::Dro);

WeightNormMode parse_weight_norm_mode(const std::string& text);
std::string weight_norm_mode_name(WeightNormMode mode);

}  // namespace recast
