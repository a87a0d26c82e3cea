#pragma once

#include <filesystem>

#include "vaquita/model.hpp"

namespace vaquita::io {

/// Writes every model parameter as a VQTA file plus a manifest.json naming
/// them, together with the tokenizer vocabulary.
void save_checkpoint(const std::filesystem::path& dir,
                     model::ModelState& state);

/// Rebuilds a seeded state from cfg, then overwrites every parameter from
/// the checkpoint. Shapes must match the configuration.
model::ModelState load_checkpoint(const std::filesystem::path& dir,
                                  const model::PipelineConfig& cfg);

}  // namespace vaquita::io
