#include "recast/checkpoint.hpp"

#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace recast {

namespace {

using nlohmann::json;

json matrix_to_json(const Matrix& m) {
    json rows = json::array();
    for (std::size_t r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (std::size_t c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

Matrix matrix_from_json(const json& rows) {
    if (rows.empty()) return Matrix();
    Matrix m(rows.size(), rows[0].size());
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < rows[r].size(); ++c) m(r, c) = rows[r][c].get<double>();
    return m;
}

json mlp_to_json(const nn::MlpParams& mlp) {
    json j;
    j["activation"] = mlp.activation == nn::Activation::Relu ? "relu" : "gelu";
    j["layers"] = json::array();
    for (const auto& layer : mlp.layers) {
        json l;
        l["weights"] = matrix_to_json(layer.weights);
        l["bias"] = layer.bias;
        j["layers"].push_back(std::move(l));
    }
    return j;
}

nn::MlpParams mlp_from_json(const json& j) {
    nn::MlpParams mlp;
    mlp.activation =
        j.at("activation").get<std::string>() == "gelu" ? nn::Activation::Gelu : nn::Activation::Relu;
    for (const auto& l : j.at("layers")) {
        nn::DenseLayer layer;
        layer.weights = matrix_from_json(l.at("weights"));
        layer.bias = l.at("bias").get<Vector>();
        mlp.layers.push_back(std::move(layer));
    }
    return mlp;
}

}  // namespace

void save_checkpoint(const std::string& path, const DualPathModel& model,
                     const CheckpointMeta& meta) {
    json j;
    j["format"] = "recast-checkpoint-v1";
    j["dims"] = {{"L", model.dims.lookback},
                 {"H", model.dims.horizon},
                 {"Lp", model.dims.patch_len},
                 {"K", model.dims.k}};
    j["quant_mlp"] = mlp_to_json(model.quant_mlp);
    j["res_mlp"] = mlp_to_json(model.res_mlp);
    j["codebook"] = {{"epoch", model.codebook.epoch},
                     {"codewords", matrix_to_json(model.codebook.codewords)}};
    j["meta"] = {{"best_epoch", meta.best_epoch},
                 {"best_valid_mse", meta.best_valid_mse},
                 {"config_hash", meta.config_hash},
                 {"dataset_id", meta.dataset_id}};

    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
    out << j.dump(2) << '\n';
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw std::runtime_error("load_checkpoint: invalid JSON in " + path + ": " + e.what());
    }
    if (j.value("format", "") != "recast-checkpoint-v1")
        throw std::runtime_error("load_checkpoint: unrecognized format in " + path);

    LoadedCheckpoint loaded;
    const json& dims = j.at("dims");
    loaded.model.dims.lookback = dims.at("L").get<std::size_t>();
    loaded.model.dims.horizon = dims.at("H").get<std::size_t>();
    loaded.model.dims.patch_len = dims.at("Lp").get<std::size_t>();
    loaded.model.dims.k = dims.at("K").get<std::size_t>();
    loaded.model.quant_mlp = mlp_from_json(j.at("quant_mlp"));
    loaded.model.res_mlp = mlp_from_json(j.at("res_mlp"));
    loaded.model.codebook.epoch = j.at("codebook").at("epoch").get<int>();
    loaded.model.codebook.codewords = matrix_from_json(j.at("codebook").at("codewords"));
    const json& meta = j.at("meta");
    loaded.meta.best_epoch = meta.at("best_epoch").get<int>();
    loaded.meta.best_valid_mse = meta.at("best_valid_mse").get<double>();
    loaded.meta.config_hash = meta.at("config_hash").get<std::uint64_t>();
    loaded.meta.dataset_id = meta.at("dataset_id").get<std::string>();
    return loaded;
}

}  // namespace recast
