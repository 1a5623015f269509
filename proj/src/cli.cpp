#include "recast/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"

#include "recast/checkpoint.hpp"
#include "recast/pipeline.hpp"
#include "recast/series.hpp"
#include "recast/verify.hpp"

namespace recast::cli {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

struct TrainCliOptions {
    std::string data_path;
    std::string kind = "other";
    std::string out_dir = "recast_out";
    std::vector<std::string> ablations;
    std::string weight_norm = "mean_one";
    std::string config_file;
    TrainConfig config;
};

void add_train_flags(CLI::App* cmd, TrainCliOptions& opts) {
    auto last = [](CLI::Option* o) { return o->multi_option_policy(CLI::MultiOptionPolicy::TakeLast); };
    last(cmd->add_option("--data", opts.data_path, "CSV dataset path")->required());
    last(cmd->add_option("--kind", opts.kind, "dataset kind: ett (6:2:2 split) or other (7:1:2)")
             ->check(CLI::IsMember({"ett", "other"})));
    last(cmd->add_option("--L", opts.config.lookback, "lookback length"));
    last(cmd->add_option("--H", opts.config.horizon, "forecast horizon"));
    last(cmd->add_option("--Lp", opts.config.patch_len, "patch length (even)"));
    last(cmd->add_option("--K", opts.config.k, "codebook size"));
    last(cmd->add_option("--gamma", opts.config.gamma, "DRO radius for score fusion"));
    last(cmd->add_option("--wsep", opts.config.w_sep, "separation loss weight"));
    last(cmd->add_option("--lr", opts.config.lr, "base learning rate"));
    last(cmd->add_option("--epochs", opts.config.epochs, "training epochs"));
    last(cmd->add_option("--patience", opts.config.patience, "early stopping patience"));
    last(cmd->add_option("--sample-ratio", opts.config.sample_ratio, "patch sampling ratio"));
    last(cmd->add_option("--batch", opts.config.batch_size, "minibatch size"));
    last(cmd->add_option("--seed", opts.config.seed, "random seed"));
    last(cmd->add_option("--eps", opts.config.eps, "instance normalization epsilon"));
    last(cmd->add_option("--lloyd-iters", opts.config.lloyd_max_iters, "max Lloyd iterations"));
    last(cmd->add_option("--stride", opts.config.stride, "training window stride"));
    last(cmd->add_option("--quant-hidden", opts.config.quant_hidden, "quantization MLP hidden dim"));
    last(cmd->add_option("--res-hidden", opts.config.res_hidden, "residual MLP hidden dim"));
    cmd->add_option("--ablation", opts.ablations,
                    "ablation switch, repeatable: no_residual|no_updating|no_random|"
                    "no_scoring|no_dro")
        ->check(CLI::IsMember({"no_residual", "no_updating", "no_random", "no_scoring", "no_dro"}));
    last(cmd->add_option("--weight-norm", opts.weight_norm, "weight normalization: mean_one|sum_one")
             ->check(CLI::IsMember({"mean_one", "sum_one"})));
    last(cmd->add_option("--sep-steps", opts.config.sep_steps,
                         "separation adjustment steps per epoch"));
    cmd->add_flag("!--no-sep-adjust", opts.config.sep_adjust,
                  "disable the separation gradient adjustment");
    last(cmd->add_option("--aux-codeword-weight", opts.config.aux_codeword_weight,
                         "optional codeword regression weight for the quantization path"));
    cmd->add_flag("--thin-training", opts.config.thin_training,
                  "apply the sampling ratio to gradient-pass windows too");
    last(cmd->add_option("--out", opts.out_dir, "output directory"));
    last(cmd->add_option("--config", opts.config_file,
                         "flat key=value config file (flags take precedence)"));
}

// flat key=value lines -> flag tokens; values "true"/"false" drive bare flags
std::vector<std::string> config_file_args(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file " + path);
    std::vector<std::string> args;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::size_t comment = line.find('#');
        if (comment != std::string::npos) line.resize(comment);
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        const auto last_ch = line.find_last_not_of(" \t\r");
        line = line.substr(first, last_ch - first + 1);
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos || eq == 0)
            throw std::runtime_error("config file " + path + ": expected key=value at line " +
                                     std::to_string(line_no));
        std::string key = line.substr(0, eq);
        std::string value = line.substr(eq + 1);
        while (!key.empty() && (key.back() == ' ' || key.back() == '\t')) key.pop_back();
        while (!value.empty() && (value.front() == ' ' || value.front() == '\t'))
            value.erase(value.begin());
        const bool flag_key = key == "thin-training" || key == "no-sep-adjust";
        if (flag_key) {
            if (value == "true" || value == "1") args.push_back("--" + key);
        } else {
            args.push_back("--" + key);
            args.push_back(value);
        }
    }
    return args;
}

// Precedence contract: defaults < config file < command-line flags. The file
// keys are injected ahead of the flags so take-last lands on the flags.
std::vector<std::string> merge_config_file(const std::vector<std::string>& args) {
    if (args.empty() || args[0] != "train") return args;
    std::string path;
    for (std::size_t i = 1; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
        else if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
    }
    if (path.empty()) return args;
    std::vector<std::string> merged;
    merged.push_back(args[0]);
    const std::vector<std::string> from_file = config_file_args(path);
    merged.insert(merged.end(), from_file.begin(), from_file.end());
    merged.insert(merged.end(), args.begin() + 1, args.end());
    return merged;
}

void finalize_config(TrainCliOptions& opts) {
    for (const auto& name : opts.ablations) opts.config.ablations.insert(parse_ablation(name));
    opts.config.weight_norm = parse_weight_norm_mode(opts.weight_norm);
}

json epoch_to_json(const EpochReport& r) {
    return json{{"type", "epoch"},
                {"epoch", r.epoch},
                {"train_loss", r.train_loss},
                {"valid_mse", r.valid_mse},
                {"valid_mae", r.valid_mae},
                {"lloyd_iters", r.lloyd_iters},
                {"codebook_shift", r.codebook_shift},
                {"weight_min", r.weight_min},
                {"weight_max", r.weight_max},
                {"weight_mean", r.weight_mean},
                {"sep_loss", r.sep_loss}};
}

json score_to_json(const ScoreRecord& s) {
    return json{{"type", "scores"}, {"epoch", s.epoch},         {"k", s.k},
                {"rep", s.rep},     {"delta", s.delta},         {"je", s.je},
                {"fused", s.fused}, {"normalized", s.normalized}};
}

void print_metrics_row(const std::string& label, std::size_t horizon, const EvalMetrics& m) {
    std::cout << "  " << std::left << std::setw(10) << label << std::right << std::setw(6)
              << horizon << std::setw(12) << std::fixed << std::setprecision(6) << m.mse
              << std::setw(12) << m.mae << '\n';
}

void print_metrics_header() {
    std::cout << "  " << std::left << std::setw(10) << "split" << std::right << std::setw(6) << "H"
              << std::setw(12) << "MSE" << std::setw(12) << "MAE" << '\n';
}

int cmd_train(TrainCliOptions& opts) {
    finalize_config(opts);
    const series::SeriesFrame frame = series::load_csv(opts.data_path);
    const series::SplitFrames splits =
        series::split_frame(frame, series::parse_dataset_kind(opts.kind),
                            opts.config.lookback + opts.config.horizon);

    fs::create_directories(opts.out_dir);
    const std::string history_path = (fs::path(opts.out_dir) / "history.jsonl").string();
    std::ofstream history(history_path);
    if (!history) throw std::runtime_error("cannot open " + history_path);

    json header{{"type", "run_config"},
                {"config", opts.config.canonical_string()},
                {"config_hash", opts.config.hash()},
                {"data", fs::path(opts.data_path).filename().string()},
                {"kind", opts.kind}};
    json ablations = json::array();
    for (Ablation a : opts.config.ablations) ablations.push_back(ablation_name(a));
    header["ablations"] = ablations;
    history << header.dump() << '\n';

    const std::string checkpoint_path = (fs::path(opts.out_dir) / "checkpoint.json").string();
    const std::string dataset_id = fs::path(opts.data_path).filename().string();

    const FitResult result = fit(
        splits, opts.config,
        [&](const EpochOutcome& outcome, const DualPathModel& current, bool improved) {
            for (const auto& s : outcome.scores) history << score_to_json(s).dump() << '\n';
            history << epoch_to_json(outcome.report).dump() << '\n';
            history.flush();
            if (improved) {
                CheckpointMeta meta;
                meta.best_epoch = outcome.report.epoch;
                meta.best_valid_mse = outcome.report.valid_mse;
                meta.config_hash = opts.config.hash();
                meta.dataset_id = dataset_id;
                save_checkpoint(checkpoint_path, current, meta);
            }
            std::cout << "epoch " << std::setw(3) << outcome.report.epoch << "  train_loss "
                      << std::fixed << std::setprecision(6) << outcome.report.train_loss
                      << "  valid_mse " << outcome.report.valid_mse << "  codebook_shift "
                      << outcome.report.codebook_shift << '\n';
        });

    ForwardOptions forward;
    forward.no_residual = opts.config.ablated(Ablation::NoResidual);
    const auto test_windows =
        series::make_windows(splits.test, opts.config.lookback, opts.config.horizon, 1);
    const EvalMetrics test = evaluate(result.model, test_windows, 0, forward);

    json summary{{"best_epoch", result.best_epoch},
                 {"best_valid_mse", result.best_valid_mse},
                 {"epochs_run", result.epochs_run},
                 {"test_mse", test.mse},
                 {"test_mae", test.mae},
                 {"horizon", opts.config.horizon}};
    std::ofstream metrics((fs::path(opts.out_dir) / "test_metrics.json").string());
    metrics << summary.dump(2) << '\n';

    std::cout << "\nbest epoch " << result.best_epoch << " (valid MSE " << std::setprecision(6)
              << result.best_valid_mse << "), " << result.epochs_run << " epochs run\n";
    print_metrics_header();
    print_metrics_row("test", opts.config.horizon, test);
    std::cout << "checkpoint: " << checkpoint_path << "\nhistory:    " << history_path << '\n';
    return 0;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& data_path,
             const std::string& kind, const std::string& split, std::vector<std::size_t> horizons,
             const std::string& out_dir) {
    const LoadedCheckpoint loaded = load_checkpoint(checkpoint_path);
    const series::SeriesFrame frame = series::load_csv(data_path);
    const ModelDims& dims = loaded.model.dims;

    series::SeriesFrame target;
    if (split == "all") {
        target = frame;
    } else {
        // only the requested split needs to admit windows; the emptiness
        // check below covers that
        const series::SplitFrames splits =
            series::split_frame(frame, series::parse_dataset_kind(kind));
        target = split == "train" ? splits.train : split == "valid" ? splits.valid : splits.test;
    }

    const auto windows = series::make_windows(target, dims.lookback, dims.horizon, 1);
    if (windows.empty()) throw std::runtime_error("eval: no windows fit the requested split");
    if (horizons.empty()) horizons.push_back(dims.horizon);

    print_metrics_header();
    json out_metrics = json::array();
    for (std::size_t h : horizons) {
        const EvalMetrics m = evaluate(loaded.model, windows, h);
        print_metrics_row(split, h, m);
        out_metrics.push_back({{"horizon", h}, {"mse", m.mse}, {"mae", m.mae}, {"split", split}});
    }
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        std::ofstream out((fs::path(out_dir) / "eval_metrics.json").string());
        out << out_metrics.dump(2) << '\n';
    }
    return 0;
}

int cmd_forecast(const std::string& checkpoint_path, const std::string& data_path,
                 const std::string& out_path) {
    const LoadedCheckpoint loaded = load_checkpoint(checkpoint_path);
    const series::SeriesFrame frame = series::load_csv(data_path);
    const ModelDims& dims = loaded.model.dims;
    if (frame.timesteps() < dims.lookback)
        throw std::runtime_error("forecast: series shorter than the lookback window");

    series::WindowPair window;
    window.x = Matrix(frame.channels(), dims.lookback);
    const std::size_t start = frame.timesteps() - dims.lookback;
    for (std::size_t c = 0; c < frame.channels(); ++c)
        for (std::size_t t = 0; t < dims.lookback; ++t)
            window.x(c, t) = frame.values(c, start + t);
    window.y = Matrix(frame.channels(), dims.horizon);

    const ForecastOutput out = dual_path_forward(loaded.model, window);
    series::SeriesFrame forecast;
    forecast.values = out.y_hat;
    forecast.channel_names = frame.channel_names;
    series::write_csv(forecast, out_path);
    std::cout << "wrote " << dims.horizon << "-step forecast for " << frame.channels()
              << " channels to " << out_path << '\n';
    return 0;
}

int cmd_inspect_codebook(const std::string& checkpoint_path, const std::string& data_path,
                         const std::string& out_dir) {
    const LoadedCheckpoint loaded = load_checkpoint(checkpoint_path);
    const Codebook& book = loaded.model.codebook;
    fs::create_directories(out_dir);

    const std::string words_path = (fs::path(out_dir) / "codewords.csv").string();
    {
        std::ofstream out(words_path);
        out.precision(17);
        for (std::size_t k = 0; k < book.size(); ++k) {
            for (std::size_t j = 0; j < book.dim(); ++j) {
                if (j) out << ',';
                out << book.codewords(k, j);
            }
            out << '\n';
        }
    }

    json meta{{"epoch", book.epoch},
              {"K", book.size()},
              {"Lp", loaded.model.dims.patch_len},
              {"dataset_id", loaded.meta.dataset_id}};
    {
        std::ofstream out((fs::path(out_dir) / "codebook_meta.json").string());
        out << meta.dump(2) << '\n';
    }

    std::cout << "codebook: K=" << book.size() << " dim=" << book.dim() << " epoch=" << book.epoch
              << "\nwrote " << words_path << '\n';

    if (!data_path.empty()) {
        const series::SeriesFrame frame = series::load_csv(data_path);
        const auto windows = series::make_windows(frame, loaded.model.dims.lookback,
                                                  loaded.model.dims.horizon, 1);
        if (windows.empty()) throw std::runtime_error("inspect-codebook: no windows fit the data");
        const auto pool = pool_downsampled_patches(windows, loaded.model.dims.patch_len);
        std::vector<std::size_t> counts(book.size(), 0);
        for (const auto& patch : pool) ++counts[nearest_codeword(patch, book.codewords)];

        const std::string usage_path = (fs::path(out_dir) / "usage_counts.csv").string();
        std::ofstream out(usage_path);
        out << "codeword,count\n";
        for (std::size_t k = 0; k < counts.size(); ++k) out << k << ',' << counts[k] << '\n';
        std::cout << "usage counts over " << pool.size() << " patches -> " << usage_path << '\n';
    }
    return 0;
}

int cmd_synth(const series::SynthSpec& spec, std::uint64_t seed, const std::string& out_path) {
    const series::SynthResult result = series::synth_generate(spec, seed);
    series::write_csv(result.frame, out_path);
    std::cout << "wrote " << spec.channels << "x" << spec.timesteps << " synthetic series with "
              << result.placements.size() << " motif occurrences to " << out_path << '\n';
    return 0;
}

int cmd_verify(bool run_all, bool inject_fault) {
    verify::VerifyOptions options;
    options.continue_on_failure = run_all;
    options.dro_perturb = inject_fault ? 1e-3 : 0.0;
    const auto results = verify::run_suites(options);
    for (const auto& r : results)
        std::cout << (r.passed ? "[PASS] " : "[FAIL] ") << std::left << std::setw(14) << r.name
                  << r.detail << '\n';
    const bool ok = verify::all_passed(results);
    std::cout << (ok ? "all suites passed" : "verification FAILED") << '\n';
    return ok ? 0 : 1;
}

}  // namespace

int run(const std::vector<std::string>& args) {
    CLI::App app{"ReCast: reliability-aware codebook-assisted time series forecasting"};
    app.require_subcommand(1);

    TrainCliOptions train_opts;
    CLI::App* train = app.add_subcommand("train", "train a model and write checkpoint + history");
    add_train_flags(train, train_opts);

    std::string eval_checkpoint, eval_data, eval_kind = "other", eval_split = "test", eval_out;
    std::vector<std::size_t> eval_horizons;
    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint (MSE/MAE per horizon)");
    eval->add_option("--checkpoint", eval_checkpoint, "checkpoint path")->required();
    eval->add_option("--data", eval_data, "CSV dataset path")->required();
    eval->add_option("--kind", eval_kind, "dataset kind for the split")
        ->check(CLI::IsMember({"ett", "other"}));
    eval->add_option("--split", eval_split, "train|valid|test|all")
        ->check(CLI::IsMember({"train", "valid", "test", "all"}));
    eval->add_option("--horizon", eval_horizons,
                     "evaluation horizon(s), each <= the checkpoint horizon");
    eval->add_option("--out", eval_out, "directory for eval_metrics.json");

    std::string fc_checkpoint, fc_data, fc_out = "forecast.csv";
    CLI::App* forecast = app.add_subcommand("forecast", "forecast from the tail of a series");
    forecast->add_option("--checkpoint", fc_checkpoint, "checkpoint path")->required();
    forecast->add_option("--data", fc_data, "CSV dataset path")->required();
    forecast->add_option("--out", fc_out, "output CSV path");

    std::string ic_checkpoint, ic_data, ic_out = "codebook_dump";
    CLI::App* inspect = app.add_subcommand("inspect-codebook",
                                           "dump codewords and usage counts");
    inspect->add_option("--checkpoint", ic_checkpoint, "checkpoint path")->required();
    inspect->add_option("--data", ic_data, "CSV dataset for usage counts");
    inspect->add_option("--out", ic_out, "output directory");

    series::SynthSpec synth_spec;
    std::uint64_t synth_seed = 1;
    std::string synth_out = "synth.csv";
    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic motif dataset");
    synth->add_option("--C", synth_spec.channels, "channels");
    synth->add_option("--T", synth_spec.timesteps, "timesteps");
    synth->add_option("--motifs", synth_spec.motif_count, "motif template count");
    synth->add_option("--motif-len", synth_spec.motif_len, "motif length");
    synth->add_option("--occurrences", synth_spec.occurrences, "occurrences per motif per channel");
    synth->add_option("--noise", synth_spec.noise_sigma, "gaussian noise sigma");
    synth->add_option("--amp1", synth_spec.amp1, "first sinusoid amplitude");
    synth->add_option("--period1", synth_spec.period1, "first sinusoid period");
    synth->add_option("--amp2", synth_spec.amp2, "second sinusoid amplitude");
    synth->add_option("--period2", synth_spec.period2, "second sinusoid period");
    synth->add_option("--seed", synth_seed, "random seed");
    synth->add_option("--out", synth_out, "output CSV path");

    bool verify_all = false, verify_fault = false;
    CLI::App* verify_cmd = app.add_subcommand("verify", "run the module invariant suites");
    verify_cmd->add_flag("--all", verify_all, "keep running after a failing suite");
    verify_cmd->add_flag("--inject-fault", verify_fault,
                         "negative control: perturb the DRO check so it must fail");

    std::vector<std::string> argv_storage;
    argv_storage.push_back("recast");
    try {
        const std::vector<std::string> merged = merge_config_file(args);
        argv_storage.insert(argv_storage.end(), merged.begin(), merged.end());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    std::vector<const char*> argv;
    for (const auto& s : argv_storage) argv.push_back(s.c_str());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (train->parsed()) return cmd_train(train_opts);
        if (eval->parsed())
            return cmd_eval(eval_checkpoint, eval_data, eval_kind, eval_split, eval_horizons,
                            eval_out);
        if (forecast->parsed()) return cmd_forecast(fc_checkpoint, fc_data, fc_out);
        if (inspect->parsed()) return cmd_inspect_codebook(ic_checkpoint, ic_data, ic_out);
        if (synth->parsed()) return cmd_synth(synth_spec, synth_seed, synth_out);
        if (verify_cmd->parsed()) return cmd_verify(verify_all, verify_fault);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

int run(int argc, const char* const* argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run(args);
}

}  // namespace recast::cli
