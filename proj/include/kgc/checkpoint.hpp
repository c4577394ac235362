#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "kgc/trainer.hpp"

namespace kgc {

inline constexpr int kCheckpointVersion = 1;

/// Model + optimizer state + config echo + RNG state.
///
/// On disk: `manifest.json` names every tensor with shape, byte offset and byte size;
/// `tensors.bin` holds the tensors row-major as little-endian 64-bit floats in manifest order.
struct Checkpoint {
    TrainState state;
    TrainConfig config;
};

void save_checkpoint(const std::filesystem::path& dir, const TrainState& state, const TrainConfig& config);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

/// Flat embedding matrix: magic "KGEV", version, u64 rows, u64 cols, then row-major
/// little-endian 64-bit floats.
void save_embeddings(const std::filesystem::path& path, const Mat& matrix);
Mat load_embeddings(const std::filesystem::path& path);

}  // namespace kgc
