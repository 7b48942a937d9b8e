#pragma once

#include <filesystem>

#include "ssmdg/model/model.hpp"
#include "ssmdg/prototypes/prototypes.hpp"

namespace ssmdg::train {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
    model::Model model;
    prototypes::PrototypeBank bank;
    std::size_t step = 0;
};

/// Writes `dir`/params.bin (little-endian float64 parameter values followed by
/// the prototype bank) and `dir`/manifest.json (model config, parameter
/// shapes and offsets, bank layout, format version).
void save_checkpoint(const std::filesystem::path& dir, const model::Model& model,
                     const prototypes::PrototypeBank& bank, std::size_t step);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace ssmdg::train
