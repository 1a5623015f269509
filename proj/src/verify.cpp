#include "recast/verify.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>

#include "recast/checkpoint.hpp"
#include "recast/codebook.hpp"
#include "recast/forecaster.hpp"
#include "recast/nn.hpp"
#include "recast/pipeline.hpp"
#include "recast/reliability.hpp"
#include "recast/rng.hpp"
#include "recast/series.hpp"

namespace recast::verify {

namespace {

struct Check {
    bool ok = true;
    std::ostringstream detail;

    void expect(bool condition, const std::string& label) {
        if (!condition) {
            ok = false;
            detail << label << "; ";
        }
    }
};

std::vector<Vector> random_patches(Rng& rng, std::size_t count, std::size_t dim, double scale) {
    std::vector<Vector> patches(count, Vector(dim));
    for (auto& p : patches)
        for (double& v : p) v = rng.uniform(-scale, scale);
    return patches;
}

SuiteResult suite_dro(double perturb) {
    Check check;
    Rng rng(20240601);

    // equal scores: a - gamma ln 3
    const double equal = dro_fuse({0.5, 0.5, 0.5}, 1.0);
    check.expect(std::abs(equal - (0.5 - std::log(3.0))) < 1e-12, "equal-score identity");

    double max_oracle_err = 0.0;
    for (int i = 0; i < 40; ++i) {
        ScoreTriple z{rng.unit(), rng.unit(), rng.unit()};
        const double zmin = std::min({z.rep, z.delta, z.je});

        for (double gamma : {0.1, 1.0, 10.0}) {
            const double fused = dro_fuse(z, gamma) + perturb;
            check.expect(fused <= zmin + 1e-12, "softmin bound");
            const double oracle = kl_ball_oracle(z, gamma, 400);
            max_oracle_err = std::max(max_oracle_err, std::abs(fused - oracle));
        }

        // monotonicity in each coordinate
        const double base = dro_fuse(z, 1.0);
        ScoreTriple up = z;
        up.delta += 0.05;
        check.expect(dro_fuse(up, 1.0) > base, "monotonicity");

        // gamma -> 0 limit
        check.expect(std::abs(dro_fuse(z, 1e-3) - zmin) <= 5e-3, "gamma->0 limit");
    }
    check.expect(max_oracle_err <= 1e-4, "oracle match (max err " + std::to_string(max_oracle_err) + ")");

    return {"dro_oracle", check.ok,
            check.ok ? "closed form within 1e-4 of the simplex grid oracle" : check.detail.str()};
}

SuiteResult suite_telescoping() {
    Check check;
    Rng rng(77001);
    const std::size_t k = 6, dim = 8, epochs = 10;

    std::vector<Matrix> pseudos;
    std::vector<Vector> weight_sets;
    for (std::size_t t = 0; t < epochs; ++t) {
        Matrix m(k, dim);
        for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-2.0, 2.0);
        pseudos.push_back(std::move(m));
        Vector w(k);
        for (double& v : w) v = rng.uniform(0.25, 1.75);
        weight_sets.push_back(std::move(w));
    }

    Codebook book;
    book.epoch = 1;
    book.codewords = Matrix(k, dim);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < dim; ++j)
            book.codewords(i, j) = weight_sets[0][i] * pseudos[0](i, j);

    for (std::size_t t = 2; t <= epochs; ++t) {
        PseudoCodebook pseudo;
        pseudo.centers = pseudos[t - 1];
        pseudo.epoch = static_cast<int>(t);
        book = incremental_update(book, pseudo, weight_sets[t - 1]);

        Matrix expected(k, dim);
        for (std::size_t j = 0; j < t; ++j)
            for (std::size_t r = 0; r < k; ++r)
                for (std::size_t c = 0; c < dim; ++c)
                    expected(r, c) += weight_sets[j][r] * pseudos[j](r, c);
        for (std::size_t i = 0; i < expected.size(); ++i)
            expected.data()[i] /= static_cast<double>(t);

        check.expect(book.codewords.max_abs_diff(expected) <= 1e-10,
                     "telescoping at epoch " + std::to_string(t));
    }
    return {"telescoping", check.ok,
            check.ok ? "running weighted average identity holds to 1e-10" : check.detail.str()};
}

SuiteResult suite_gradient() {
    Check check;
    Rng rng(31415);

    for (int trial = 0; trial < 6; ++trial) {
        const std::size_t in = 2 + rng.index(14);
        const std::size_t out = 1 + rng.index(15);
        std::vector<std::size_t> dims;
        if (trial % 2 == 0) {
            dims = {in, out};
        } else {
            dims = {in, 2 + rng.index(14), out};
        }
        const nn::Activation act = trial % 3 == 2 ? nn::Activation::Gelu : nn::Activation::Relu;
        nn::MlpParams params = nn::make_mlp(dims, act, rng);

        Vector input(in);
        for (double& v : input) v = rng.uniform(-1.0, 1.0);
        Matrix target(1, out);
        const Vector base_out = nn::mlp_forward(params, input);
        for (std::size_t i = 0; i < out; ++i)
            target(0, i) = base_out[i] + (rng.unit() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.25, 1.0);

        const auto loss_fn = [&](const nn::MlpParams& p) {
            nn::ForwardCache cache;
            const Vector y = nn::mlp_forward(p, input, &cache);
            Matrix pred(1, out);
            for (std::size_t i = 0; i < out; ++i) pred(0, i) = y[i];
            const nn::LossResult l1 = nn::l1_loss(pred, target);
            return std::make_pair(l1.value, nn::mlp_backward(p, cache, l1.gradient.row_vector(0)));
        };
        const nn::GradCheckReport report = nn::grad_check(params, loss_fn);
        check.expect(report.within(1e-4),
                     "finite differences trial " + std::to_string(trial) + " err " +
                         std::to_string(report.max_rel_error));
    }

    // Adam determinism: identical seeds give bitwise-identical trajectories
    auto run_adam = [] {
        Rng r(99);
        nn::MlpParams p = nn::make_mlp({4, 5, 3}, nn::Activation::Relu, r);
        nn::AdamState state = nn::AdamState::zeros_like(p);
        Vector input{0.3, -0.2, 0.9, 0.5};
        Matrix target(1, 3, 0.25);
        for (int step = 0; step < 20; ++step) {
            nn::ForwardCache cache;
            const Vector y = nn::mlp_forward(p, input, &cache);
            Matrix pred(1, 3);
            for (std::size_t i = 0; i < 3; ++i) pred(0, i) = y[i];
            const nn::LossResult l1 = nn::l1_loss(pred, target);
            const nn::MlpGrads grads = nn::mlp_backward(p, cache, l1.gradient.row_vector(0));
            nn::adam_step(p, grads, state, 1e-2);
        }
        return p;
    };
    const nn::MlpParams a = run_adam();
    const nn::MlpParams b = run_adam();
    bool identical = true;
    for (std::size_t l = 0; l < a.layers.size(); ++l)
        identical = identical && a.layers[l].weights == b.layers[l].weights &&
                    a.layers[l].bias == b.layers[l].bias;
    check.expect(identical, "adam determinism");

    // cosine schedule: starts at base, non-increasing, positive at the end
    const double base_lr = 3e-4;
    double prev = nn::cosine_lr(base_lr, 0, 30);
    check.expect(prev == base_lr, "cosine epoch 0");
    bool monotone = true;
    for (std::size_t e = 1; e < 30; ++e) {
        const double lr = nn::cosine_lr(base_lr, e, 30);
        monotone = monotone && lr <= prev;
        prev = lr;
    }
    check.expect(monotone, "cosine monotone");
    check.expect(prev > 0.0, "cosine final positive");

    return {"gradient", check.ok,
            check.ok ? "analytic gradients, Adam determinism, cosine schedule" : check.detail.str()};
}

SuiteResult suite_roundtrip() {
    Check check;
    Rng rng(555);

    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t channels = 1 + rng.index(4);
        const std::size_t len = 8 + rng.index(120);
        Matrix x(channels, len);
        for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(-40.0, 40.0);

        auto [x_norm, stats] = series::instance_normalize(x);
        const Matrix back = series::instance_denormalize(x_norm, stats);
        check.expect(back.max_abs_diff(x) <= 1e-6, "normalization roundtrip");

        const std::size_t patch_len = 2 * (1 + rng.index(8));
        const series::PatchSet set = series::patchify(x_norm, patch_len);
        check.expect(series::unpatchify(set) == x_norm, "patchify roundtrip");

        Vector half(1 + rng.index(12));
        for (double& v : half) v = rng.uniform(-5.0, 5.0);
        check.expect(series::downsample(series::upsample(half)) == half, "down-up identity");
    }

    // window count formula and split chronology
    series::SeriesFrame frame;
    frame.values = Matrix(2, 100);
    for (std::size_t i = 0; i < frame.values.size(); ++i)
        frame.values.data()[i] = static_cast<double>(i);
    frame.channel_names = {"a", "b"};
    for (std::size_t stride : {std::size_t{1}, std::size_t{3}, std::size_t{7}}) {
        const auto windows = series::make_windows(frame, 20, 10, stride);
        const std::size_t expected = (100 - 20 - 10) / stride + 1;
        check.expect(windows.size() == expected, "window count stride " + std::to_string(stride));
    }
    const auto splits = series::split_frame(frame, series::DatasetKind::Other);
    check.expect(splits.train.timesteps() == 70 && splits.valid.timesteps() == 10 &&
                     splits.test.timesteps() == 20,
                 "7:1:2 split");
    check.expect(splits.train.values(0, 69) < splits.valid.values(0, 0) &&
                     splits.valid.values(0, 9) < splits.test.values(0, 0),
                 "chronological order");

    return {"roundtrip", check.ok,
            check.ok ? "normalize/patchify/down-up roundtrips and window formulas" : check.detail.str()};
}

SuiteResult suite_clustering() {
    Check check;
    Rng rng(8080);

    for (int trial = 0; trial < 25 && check.ok; ++trial) {
        const std::size_t dim = 2 + rng.index(6);
        const std::size_t n = 30 + rng.index(60);
        const std::size_t k = 2 + rng.index(4);
        const auto patches = random_patches(rng, n, dim, 3.0);

        Rng lloyd_rng(split_seed(4242, static_cast<std::uint64_t>(trial)));
        const LloydResult result = lloyd_cluster(patches, k, nullptr, 50, lloyd_rng, 1);

        for (std::size_t i = 1; i < result.energy_trace.size(); ++i)
            check.expect(result.energy_trace[i] <= result.energy_trace[i - 1] + 1e-9,
                         "energy non-increasing");
        check.expect(std::abs(result.energy_trace.back() -
                              clustering_energy(patches, result.pseudo.centers,
                                                result.assignment.labels)) < 1e-9,
                     "energy equals direct loop");

        // converged centers equal per-cluster means exactly
        Matrix mean(k, dim);
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < patches.size(); ++i) {
            for (std::size_t j = 0; j < dim; ++j)
                mean(result.assignment.labels[i], j) += patches[i][j];
            ++counts[result.assignment.labels[i]];
        }
        bool centers_are_means = true;
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] == 0) continue;
            for (std::size_t j = 0; j < dim; ++j)
                if (result.pseudo.centers(c, j) != mean(c, j) / static_cast<double>(counts[c]))
                    centers_are_means = false;
        }
        check.expect(centers_are_means, "center update equals per-cluster mean");
    }

    // quantization idempotence through reconstruct + downsample
    {
        Rng r2(919);
        Codebook book;
        book.epoch = 1;
        book.codewords = Matrix(5, 8);
        for (std::size_t i = 0; i < book.codewords.size(); ++i)
            book.codewords.data()[i] = r2.uniform(-1.0, 1.0);

        DownsampledPatches down;
        down.channels = 2;
        down.per_channel = 6;
        for (std::size_t i = 0; i < 12; ++i) {
            Vector p(8);
            for (double& v : p) v = r2.uniform(-1.0, 1.0);
            down.patches.push_back(std::move(p));
        }
        const QuantizedSeries q1 = quantize(down, book);
        const Matrix recon = reconstruct(q1, book, 6 * 16);
        const series::PatchSet set = series::patchify(recon, 16);
        const QuantizedSeries q2 = quantize(downsample_patches(set), book);
        check.expect(q1.indices == q2.indices, "quantization idempotence");
    }

    // separation loss decreases when coincident centers move apart
    {
        Matrix centers(3, 4, 0.5);
        const double tau = std::max(centers.frobenius_sq(), 1e-12);
        auto sep_with_frozen_tau = [&](const Matrix& m) {
            double sum = 0.0;
            for (std::size_t i = 0; i < m.rows(); ++i)
                for (std::size_t j = 0; j < m.rows(); ++j) {
                    double d = 0.0;
                    for (std::size_t c = 0; c < m.cols(); ++c) {
                        const double diff = m(i, c) - m(j, c);
                        d += diff * diff;
                    }
                    sum += std::exp(-d / tau);
                }
            return std::log(sum);
        };
        const double before = sep_with_frozen_tau(centers);
        Matrix apart = centers;
        for (std::size_t c = 0; c < apart.cols(); ++c) apart(0, c) += 1.0;
        check.expect(sep_with_frozen_tau(apart) < before, "separation decreases when spread");
    }

    return {"clustering", check.ok,
            check.ok ? "Lloyd energy, mean update, idempotence, separation" : check.detail.str()};
}

SuiteResult suite_scores() {
    Check check;
    Rng rng(60601);

    for (int trial = 0; trial < 25 && check.ok; ++trial) {
        const std::size_t dim = 2 + rng.index(6);
        const std::size_t n = 20 + rng.index(40);
        const std::size_t k = 2 + rng.index(5);
        const auto patches = random_patches(rng, n, dim, 0.8);

        Rng lloyd_rng(split_seed(1111, static_cast<std::uint64_t>(trial)));
        const LloydResult lloyd = lloyd_cluster(patches, k, nullptr, 50, lloyd_rng, 1);
        Matrix previous = lloyd.pseudo.centers;
        for (std::size_t i = 0; i < previous.size(); ++i)
            previous.data()[i] += rng.uniform(-0.3, 0.3);

        const Vector rep = score_rep(patches, lloyd.pseudo.centers, lloyd.assignment);
        const Vector delta = score_delta(lloyd.pseudo.centers, previous);
        const Vector je = score_je(patches, lloyd.pseudo.centers);

        for (std::size_t c = 0; c < k; ++c) {
            check.expect(rep[c] >= 0.0 && rep[c] < 1.0, "rep range");
            check.expect(je[c] >= 0.0 && je[c] < 1.0, "je range");
            check.expect(delta[c] > 0.0 && delta[c] <= 1.0, "delta range");
        }

        // direct (overflow-prone) evaluation where it stays finite
        double rep_total = 0.0;
        Vector rep_direct(k, 0.0);
        for (std::size_t i = 0; i < patches.size(); ++i) {
            double d = 0.0;
            for (std::size_t j = 0; j < dim; ++j) {
                const double diff = patches[i][j] - lloyd.pseudo.centers(lloyd.assignment.labels[i], j);
                d += diff * diff;
            }
            rep_direct[lloyd.assignment.labels[i]] += d;
            rep_total += d;
        }
        if (rep_total < 500.0) {
            for (std::size_t c = 0; c < k; ++c) {
                const double direct = 1.0 - std::exp(rep_direct[c]) / std::exp(rep_total);
                check.expect(std::abs(direct - rep[c]) <= 1e-9, "rep matches direct form");
            }
        }

        std::vector<ScoreTriple> triples(k);
        for (std::size_t c = 0; c < k; ++c) triples[c] = {rep[c], delta[c], je[c]};
        const ReliabilityWeights weights = fuse_and_normalize(triples, 1.0);
        double mean = 0.0;
        for (double w : weights.normalized) {
            check.expect(w > 0.0, "normalized positive");
            mean += w;
        }
        mean /= static_cast<double>(k);
        check.expect(std::abs(mean - 1.0) <= 1e-9, "normalized mean one");

        // permutation equivariance
        std::vector<ScoreTriple> reversed(triples.rbegin(), triples.rend());
        const ReliabilityWeights perm = fuse_and_normalize(reversed, 1.0);
        bool equivariant = true;
        for (std::size_t c = 0; c < k; ++c)
            if (std::abs(perm.normalized[k - 1 - c] - weights.normalized[c]) > 1e-12)
                equivariant = false;
        check.expect(equivariant, "permutation equivariance");
    }

    return {"scores", check.ok,
            check.ok ? "ranges, direct-form agreement, weight normalization" : check.detail.str()};
}

SuiteResult suite_forecaster() {
    Check check;
    Rng rng(123321);

    ModelDims dims{32, 24, 8, 4};
    DualPathModel model = make_model(dims, 8, 16, nn::Activation::Relu, 7);
    model.codebook.epoch = 1;
    model.codebook.codewords = Matrix(4, 4);
    for (std::size_t i = 0; i < model.codebook.codewords.size(); ++i)
        model.codebook.codewords.data()[i] = rng.uniform(-1.0, 1.0);

    series::WindowPair window;
    window.x = Matrix(3, 32);
    window.y = Matrix(3, 24);
    for (std::size_t i = 0; i < window.x.size(); ++i) window.x.data()[i] = rng.uniform(-2.0, 2.0);
    for (std::size_t i = 0; i < window.y.size(); ++i) window.y.data()[i] = rng.uniform(-2.0, 2.0);

    const ForecastOutput out = dual_path_forward(model, window);
    check.expect(out.y_hat.rows() == 3 && out.y_hat.cols() == 24, "output shape");
    check.expect(out.q_y.per_channel() == dims.n_future_patches(), "future patch count");

    bool additive = true;
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t t = 0; t < 24; ++t) {
            const double recomposed =
                out.stats.std[c] * (out.y_q(c, t) + out.y_r(c, t)) + out.stats.mean[c];
            if (out.y_hat(c, t) != recomposed) additive = false;
        }
    check.expect(additive, "additivity");

    // channel permutation equivariance
    series::WindowPair permuted;
    permuted.x = Matrix(3, 32);
    permuted.y = window.y;
    const std::size_t perm[3] = {2, 0, 1};
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t t = 0; t < 32; ++t) permuted.x(c, t) = window.x(perm[c], t);
    const ForecastOutput out_perm = dual_path_forward(model, permuted);
    bool equivariant = true;
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t t = 0; t < 24; ++t)
            if (out_perm.y_hat(c, t) != out.y_hat(perm[c], t)) equivariant = false;
    check.expect(equivariant, "channel permutation equivariance");

    // snapped outputs live in the codebook row set
    bool member = true;
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t p = 0; p < out.q_y.per_channel(); ++p) {
            const std::size_t id = out.q_y.indices[c][p];
            for (std::size_t i = 0; i < dims.patch_len; ++i) {
                const std::size_t t = p * dims.patch_len + i;
                if (t < dims.horizon &&
                    out.y_q(c, t) != model.codebook.codewords(id, i / 2))
                    member = false;
            }
        }
    check.expect(member, "snap membership");

    return {"forecaster", check.ok,
            check.ok ? "shapes, additivity, equivariance, snap membership" : check.detail.str()};
}

SuiteResult suite_pipeline() {
    Check check;

    series::SynthSpec spec;
    spec.channels = 2;
    spec.timesteps = 1000;
    spec.motif_count = 2;
    spec.motif_len = 24;
    spec.occurrences = 3;
    spec.noise_sigma = 0.05;
    const series::SynthResult synth = series::synth_generate(spec, 3003);
    const series::SplitFrames splits = series::split_frame(synth.frame, series::DatasetKind::Other);

    TrainConfig config;
    config.lookback = 64;
    config.horizon = 16;
    config.patch_len = 8;
    config.k = 4;
    config.epochs = 3;
    config.patience = 3;
    config.batch_size = 32;
    config.res_hidden = 32;
    config.quant_hidden = 8;
    config.seed = 11;

    const FitResult a = fit(splits, config);
    const FitResult b = fit(splits, config);
    check.expect(a.history.size() == b.history.size(), "history length reproducible");
    bool identical = a.history.size() == b.history.size();
    for (std::size_t i = 0; identical && i < a.history.size(); ++i) {
        const EpochReport &ra = a.history[i], &rb = b.history[i];
        identical = ra.train_loss == rb.train_loss && ra.valid_mse == rb.valid_mse &&
                    ra.valid_mae == rb.valid_mae && ra.codebook_shift == rb.codebook_shift &&
                    ra.sep_loss == rb.sep_loss;
    }
    check.expect(identical, "bitwise reproducible history");

    double min_valid = a.history.front().valid_mse;
    for (const auto& r : a.history) min_valid = std::min(min_valid, r.valid_mse);
    check.expect(a.best_valid_mse == min_valid, "checkpoint is the best epoch");

    // the ablation flag must not disturb the codebook phase
    TrainConfig ablated = config;
    ablated.ablations.insert(Ablation::NoResidual);
    const FitResult c = fit(splits, ablated);
    bool codebook_phase_equal = c.history.size() >= 1;
    for (std::size_t i = 0; codebook_phase_equal && i < std::min(c.history.size(), a.history.size()); ++i)
        codebook_phase_equal = a.history[i].codebook_shift == c.history[i].codebook_shift &&
                               a.history[i].sep_loss == c.history[i].sep_loss &&
                               a.history[i].lloyd_iters == c.history[i].lloyd_iters;
    check.expect(codebook_phase_equal, "ablation leaves codebook phase untouched");

    return {"pipeline", check.ok,
            check.ok ? "reproducibility, best-checkpoint rule, ablation separation"
                     : check.detail.str()};
}

}  // namespace

std::vector<SuiteResult> run_suites(const VerifyOptions& options) {
    using SuiteFn = std::function<SuiteResult()>;
    const std::vector<std::pair<std::string, SuiteFn>> suites = {
        {"telescoping", [&] { return suite_telescoping(); }},
        {"roundtrip", [&] { return suite_roundtrip(); }},
        {"gradient", [&] { return suite_gradient(); }},
        {"clustering", [&] { return suite_clustering(); }},
        {"scores", [&] { return suite_scores(); }},
        {"dro_oracle", [&] { return suite_dro(options.dro_perturb); }},
        {"forecaster", [&] { return suite_forecaster(); }},
        {"pipeline", [&] { return suite_pipeline(); }},
    };

    std::vector<SuiteResult> results;
    for (const auto& [name, suite] : suites) {
        SuiteResult result;
        try {
            result = suite();
        } catch (const std::exception& e) {
            result.name = name;
            result.passed = false;
            result.detail = std::string("exception: ") + e.what();
        }
        results.push_back(result);
        if (!result.passed && !options.continue_on_failure) break;
    }
    return results;
}

bool all_passed(const std::vector<SuiteResult>& results) {
    for (const auto& r : results)
        if (!r.passed) return false;
    return true;
}

}  // namespace recast::verify
