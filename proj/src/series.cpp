#include "recast/series.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "recast/rng.hpp"

namespace recast::series {

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.push_back("");
    return fields;
}

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

bool parse_double(const std::string& text, double& out) {
    const std::string t = trim(text);
    if (t.empty()) return false;
    try {
        std::size_t pos = 0;
        out = std::stod(t, &pos);
        return pos == t.size();
    } catch (const std::exception&) {
        return false;
    }
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

SeriesFrame slice_frame(const SeriesFrame& frame, std::size_t begin, std::size_t len) {
    SeriesFrame out;
    out.channel_names = frame.channel_names;
    out.values = Matrix(frame.channels(), len);
    for (std::size_t c = 0; c < frame.channels(); ++c)
        for (std::size_t t = 0; t < len; ++t) out.values(c, t) = frame.values(c, begin + t);
    return out;
}

}  // namespace

SeriesFrame load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_csv: cannot open " + path);

    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("load_csv: empty file " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> header = split_line(line);
    if (header.empty()) throw std::runtime_error("load_csv: empty header in " + path);

    std::vector<std::vector<double>> columns_major;  // row-major raw rows
    std::size_t line_no = 1;
    bool drop_first = lower(trim(header[0])) == "date";
    bool drop_checked = drop_first;  // a "date" header decides immediately

    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        std::vector<std::string> fields = split_line(line);
        if (fields.size() != header.size())
            throw std::runtime_error("load_csv: ragged row at line " + std::to_string(line_no) +
                                     " in " + path);
        if (!drop_checked) {
            double probe = 0.0;
            drop_first = !parse_double(fields[0], probe);
            drop_checked = true;
        }
        const std::size_t offset = drop_first ? 1 : 0;
        std::vector<double> row;
        row.reserve(fields.size() - offset);
        for (std::size_t i = offset; i < fields.size(); ++i) {
            double v = 0.0;
            if (!parse_double(fields[i], v))
                throw std::runtime_error("load_csv: non-numeric cell '" + fields[i] + "' at line " +
                                         std::to_string(line_no) + " in " + path);
            if (!std::isfinite(v))
                throw std::runtime_error("load_csv: non-finite value at line " +
                                         std::to_string(line_no) + " in " + path);
            row.push_back(v);
        }
        columns_major.push_back(std::move(row));
    }

    if (columns_major.empty()) throw std::runtime_error("load_csv: no data rows in " + path);
    const std::size_t offset = drop_first ? 1 : 0;
    const std::size_t channels = header.size() - offset;
    if (channels == 0) throw std::runtime_error("load_csv: no numeric channels in " + path);

    SeriesFrame frame;
    frame.channel_names.assign(header.begin() + static_cast<long>(offset), header.end());
    for (auto& name : frame.channel_names) name = trim(name);
    frame.values = Matrix(channels, columns_major.size());
    for (std::size_t t = 0; t < columns_major.size(); ++t)
        for (std::size_t c = 0; c < channels; ++c) frame.values(c, t) = columns_major[t][c];
    return frame;
}

DatasetKind parse_dataset_kind(const std::string& text) {
    const std::string t = lower(trim(text));
    if (t == "ett") return DatasetKind::Ett;
    if (t == "other") return DatasetKind::Other;
    throw std::invalid_argument("unknown dataset kind '" + text + "' (expected ett|other)");
}

std::string dataset_kind_name(DatasetKind kind) {
    return kind == DatasetKind::Ett ? "ett" : "other";
}

SplitFrames split_frame(const SeriesFrame& frame, DatasetKind kind, std::size_t min_split_len) {
    const std::size_t total = frame.timesteps();
    const double train_ratio = kind == DatasetKind::Ett ? 0.6 : 0.7;
    const double valid_ratio = kind == DatasetKind::Ett ? 0.2 : 0.1;

    const std::size_t n_train = static_cast<std::size_t>(std::floor(train_ratio * static_cast<double>(total)));
    const std::size_t n_valid = static_cast<std::size_t>(std::floor(valid_ratio * static_cast<double>(total)));
    if (n_train + n_valid >= total)
        throw std::runtime_error("split_frame: series too short to split (T=" + std::to_string(total) + ")");
    const std::size_t n_test = total - n_train - n_valid;

    if (min_split_len > 0) {
        const std::size_t shortest = std::min({n_train, n_valid, n_test});
        if (shortest < min_split_len)
            throw std::runtime_error("split_frame: no window fits; shortest split has " +
                                     std::to_string(shortest) + " steps, need " +
                                     std::to_string(min_split_len));
    }

    SplitFrames splits;
    splits.train = slice_frame(frame, 0, n_train);
    splits.valid = slice_frame(frame, n_train, n_valid);
    splits.test = slice_frame(frame, n_train + n_valid, n_test);
    return splits;
}

std::vector<WindowPair> make_windows(const SeriesFrame& frame, std::size_t lookback,
                                     std::size_t horizon, std::size_t stride) {
    if (lookback == 0 || horizon == 0)
        throw std::invalid_argument("make_windows: lookback and horizon must be >= 1");
    if (stride == 0) throw std::invalid_argument("make_windows: stride must be >= 1");

    std::vector<WindowPair> windows;
    const std::size_t total = frame.timesteps();
    if (total < lookback + horizon) return windows;

    const std::size_t last_origin = total - lookback - horizon;
    for (std::size_t origin = 0; origin <= last_origin; origin += stride) {
        WindowPair w;
        w.origin_index = origin;
        w.x = Matrix(frame.channels(), lookback);
        w.y = Matrix(frame.channels(), horizon);
        for (std::size_t c = 0; c < frame.channels(); ++c) {
            for (std::size_t t = 0; t < lookback; ++t) w.x(c, t) = frame.values(c, origin + t);
            for (std::size_t t = 0; t < horizon; ++t)
                w.y(c, t) = frame.values(c, origin + lookback + t);
        }
        windows.push_back(std::move(w));
    }
    return windows;
}

std::pair<Matrix, NormStats> instance_normalize(const Matrix& x, double eps) {
    NormStats stats;
    stats.eps = eps;
    stats.mean.resize(x.rows());
    stats.std.resize(x.rows());

    Matrix normed(x.rows(), x.cols());
    const double len = static_cast<double>(x.cols());
    for (std::size_t c = 0; c < x.rows(); ++c) {
        double mean = 0.0;
        for (std::size_t t = 0; t < x.cols(); ++t) mean += x(c, t);
        mean /= len;
        double var = 0.0;
        for (std::size_t t = 0; t < x.cols(); ++t) {
            const double d = x(c, t) - mean;
            var += d * d;
        }
        var /= len;
        const double sd = std::sqrt(var + eps);
        stats.mean[c] = mean;
        stats.std[c] = sd;
        for (std::size_t t = 0; t < x.cols(); ++t) normed(c, t) = (x(c, t) - mean) / sd;
    }
    return {std::move(normed), std::move(stats)};
}

Matrix instance_denormalize(const Matrix& y_norm, const NormStats& stats) {
    if (y_norm.rows() != stats.mean.size())
        throw std::invalid_argument("instance_denormalize: channel count mismatch");
    Matrix y(y_norm.rows(), y_norm.cols());
    for (std::size_t c = 0; c < y.rows(); ++c)
        for (std::size_t t = 0; t < y.cols(); ++t)
            y(c, t) = stats.std[c] * y_norm(c, t) + stats.mean[c];
    return y;
}

PatchSet patchify(const Matrix& x_norm, std::size_t patch_len) {
    if (patch_len < 2 || patch_len % 2 != 0)
        throw std::invalid_argument("patchify: patch length must be even and >= 2");

    PatchSet set;
    set.patch_len = patch_len;
    set.channels = x_norm.rows();
    set.source_len = x_norm.cols();
    set.patches_per_channel = (x_norm.cols() + patch_len - 1) / patch_len;
    set.pad = set.patches_per_channel * patch_len - x_norm.cols();

    for (std::size_t c = 0; c < x_norm.rows(); ++c) {
        for (std::size_t p = 0; p < set.patches_per_channel; ++p) {
            Vector patch(patch_len);
            for (std::size_t i = 0; i < patch_len; ++i) {
                const std::size_t t = p * patch_len + i;
                patch[i] = t < x_norm.cols() ? x_norm(c, t) : x_norm(c, x_norm.cols() - 1);
            }
            set.patches.push_back(std::move(patch));
            set.index_map.emplace_back(c, p);
        }
    }
    return set;
}

Matrix unpatchify(const PatchSet& set) {
    Matrix x(set.channels, set.source_len);
    for (std::size_t i = 0; i < set.patches.size(); ++i) {
        const auto [c, p] = set.index_map[i];
        for (std::size_t j = 0; j < set.patch_len; ++j) {
            const std::size_t t = p * set.patch_len + j;
            if (t < set.source_len) x(c, t) = set.patches[i][j];
        }
    }
    return x;
}

Vector downsample(const Vector& patch) {
    if (patch.empty() || patch.size() % 2 != 0)
        throw std::invalid_argument("downsample: length must be even and positive");
    Vector out(patch.size() / 2);
    for (std::size_t j = 0; j < out.size(); ++j) out[j] = 0.5 * (patch[2 * j] + patch[2 * j + 1]);
    return out;
}

Vector upsample(const Vector& half_patch) {
    Vector out(half_patch.size() * 2);
    for (std::size_t j = 0; j < half_patch.size(); ++j) {
        out[2 * j] = half_patch[j];
        out[2 * j + 1] = half_patch[j];
    }
    return out;
}

SynthResult synth_generate(const SynthSpec& spec, std::uint64_t seed) {
    if (spec.channels == 0 || spec.timesteps == 0)
        throw std::invalid_argument("synth_generate: channels and timesteps must be positive");
    if (spec.motif_count > 0 && spec.motif_len == 0)
        throw std::invalid_argument("synth_generate: motif_len must be positive when motifs requested");
    if (spec.motif_len > spec.timesteps)
        throw std::invalid_argument("synth_generate: motif longer than the series");

    SynthResult result;
    result.frame.values = Matrix(spec.channels, spec.timesteps);
    for (std::size_t c = 0; c < spec.channels; ++c)
        result.frame.channel_names.push_back("ch" + std::to_string(c));

    Rng motif_rng(split_seed(seed, 1));
    Rng place_rng(split_seed(seed, 2));
    Rng noise_rng(split_seed(seed, 3));
    Rng phase_rng(split_seed(seed, 4));

    // smooth random templates: cumulative sum of small steps, mean-removed
    for (std::size_t m = 0; m < spec.motif_count; ++m) {
        Vector motif(spec.motif_len, 0.0);
        double level = motif_rng.uniform(-1.0, 1.0);
        for (std::size_t i = 0; i < spec.motif_len; ++i) {
            level += motif_rng.uniform(-0.35, 0.35);
            motif[i] = level;
        }
        double mean = 0.0;
        for (double v : motif) mean += v;
        mean /= static_cast<double>(spec.motif_len);
        for (double& v : motif) v -= mean;
        result.motifs.push_back(std::move(motif));
    }

    for (std::size_t c = 0; c < spec.channels; ++c) {
        const double phase1 = phase_rng.uniform(0.0, 2.0 * M_PI);
        const double phase2 = phase_rng.uniform(0.0, 2.0 * M_PI);
        for (std::size_t t = 0; t < spec.timesteps; ++t) {
            double v = 0.0;
            if (spec.amp1 != 0.0 && spec.period1 > 0.0)
                v += spec.amp1 * std::sin(2.0 * M_PI * static_cast<double>(t) / spec.period1 + phase1);
            if (spec.amp2 != 0.0 && spec.period2 > 0.0)
                v += spec.amp2 * std::sin(2.0 * M_PI * static_cast<double>(t) / spec.period2 + phase2);
            result.frame.values(c, t) = v;
        }

        // non-overlapping placements so occurrences stay verbatim at noise 0
        std::vector<std::pair<std::size_t, std::size_t>> taken;  // [begin, end)
        for (std::size_t m = 0; m < spec.motif_count; ++m) {
            for (std::size_t occ = 0; occ < spec.occurrences; ++occ) {
                bool placed = false;
                for (int attempt = 0; attempt < 64 && !placed; ++attempt) {
                    const std::size_t pos = place_rng.index(spec.timesteps - spec.motif_len + 1);
                    const std::size_t end = pos + spec.motif_len;
                    bool overlaps = false;
                    for (const auto& [b, e] : taken)
                        if (pos < e && b < end) {
                            overlaps = true;
                            break;
                        }
                    if (overlaps) continue;
                    taken.emplace_back(pos, end);
                    for (std::size_t i = 0; i < spec.motif_len; ++i)
                        result.frame.values(c, pos + i) = result.motifs[m][i];
                    result.placements.push_back({c, m, pos});
                    placed = true;
                }
                // crowded series: skip the occurrence rather than loop forever
            }
        }

        if (spec.noise_sigma > 0.0)
            for (std::size_t t = 0; t < spec.timesteps; ++t)
                result.frame.values(c, t) += noise_rng.normal(0.0, spec.noise_sigma);
    }
    return result;
}

void write_csv(const SeriesFrame& frame, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_csv: cannot open " + path);
    out.precision(17);
    for (std::size_t c = 0; c < frame.channels(); ++c) {
        if (c) out << ',';
        out << frame.channel_names[c];
    }
    out << '\n';
    for (std::size_t t = 0; t < frame.timesteps(); ++t) {
        for (std::size_t c = 0; c < frame.channels(); ++c) {
            if (c) out << ',';
            out << frame.values(c, t);
        }
        out << '\n';
    }
}

}  // namespace recast::series
