#pragma once

#include <cstdint>
#include <string>

#include "recast/forecaster.hpp"
#include "recast/pipeline.hpp"

namespace recast {

struct CheckpointMeta {
    int best_epoch = 0;
    double best_valid_mse = 0.0;
    std::uint64_t config_hash = 0;
    std::string dataset_id;
};

/// Self-describing JSON record: dims, both MLPs, the codebook and its epoch,
/// and the config hash. Doubles round-trip exactly.
void save_checkpoint(const std::string& path, const DualPathModel& model,
                     const CheckpointMeta& meta);

struct LoadedCheckpoint {
    DualPathModel model;
    CheckpointMeta meta;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace recast
