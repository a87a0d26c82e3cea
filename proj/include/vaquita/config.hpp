#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "vaquita/model.hpp"

namespace vaquita::config {

/// Parses a pipeline configuration from strict JSON: every key below is
/// required, unknown keys are format errors.
///
/// {
///   "seed": 42,
///   "perceiver": {"T":.., "n":.., "d":.., "m":.., "p":.., "H":.., "d_h":..},
///   "vq": {"d_text":.., "H":.., "d_h":.., "s_q":..},
///   "encoder": {"raw_dim":.., "sampler_dim":..},
///   "vocab_size":.., "max_text_len":..,
///   "label_smoothing":.., "learning_rate":.., "batch_size":.., "epochs":..,
///   "trainable": {"tokenizer":.., "perceiver":.., "vqformer":..,
///                 "encoder":.., "decoder":..}
/// }
///
/// vq.d is taken from perceiver.d.
model::PipelineConfig parse_pipeline_config(const std::string& text);
model::PipelineConfig load_pipeline_config(const std::filesystem::path& path);

struct DatasetRecord {
  std::string frames_path;
  std::string question;
  std::string answer;
};

/// Dataset manifest: JSON list of {"frames": path, "question": s, "answer": s}.
/// Relative frame paths resolve against the manifest's directory.
std::vector<DatasetRecord> load_dataset_manifest(
    const std::filesystem::path& path);

}  // namespace vaquita::config
