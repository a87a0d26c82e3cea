#include "vaquita/config.hpp"

#include <fstream>
#include <set>

#include <json.hpp>

namespace vaquita::config {

namespace {

using nlohmann::json;

void check_keys(const json& obj, const std::set<std::string>& allowed,
                const std::string& where) {
  if (!obj.is_object())
    throw FormatError("config: " + where + " must be a JSON object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!allowed.count(it.key()))
      throw FormatError("config: unknown key \"" + it.key() + "\" in " +
                        where);
  }
  for (const auto& key : allowed) {
    if (!obj.contains(key))
      throw FormatError("config: missing key \"" + key + "\" in " + where);
  }
}

std::size_t get_size(const json& obj, const char* key) {
  const auto& v = obj.at(key);
  if (!v.is_number_unsigned() || v.get<std::uint64_t>() == 0)
    throw FormatError(std::string("config: \"") + key +
                      "\" must be a positive integer");
  return v.get<std::size_t>();
}

double get_number(const json& obj, const char* key) {
  const auto& v = obj.at(key);
  if (!v.is_number())
    throw FormatError(std::string("config: \"") + key + "\" must be a number");
  return v.get<double>();
}

bool get_bool(const json& obj, const char* key) {
  const auto& v = obj.at(key);
  if (!v.is_boolean())
    throw FormatError(std::string("config: \"") + key + "\" must be a boolean");
  return v.get<bool>();
}

}  // namespace

model::PipelineConfig parse_pipeline_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("config: invalid JSON: ") + e.what());
  }
  check_keys(root,
             {"seed", "perceiver", "vq", "encoder", "vocab_size",
              "max_text_len", "label_smoothing", "learning_rate", "batch_size",
              "epochs", "trainable"},
             "config");

  model::PipelineConfig cfg;
  if (!root.at("seed").is_number_unsigned())
    throw FormatError("config: \"seed\" must be a non-negative integer");
  cfg.seed = root.at("seed").get<std::uint64_t>();

  const auto& prc = root.at("perceiver");
  check_keys(prc, {"T", "n", "d", "m", "p", "H", "d_h"}, "perceiver");
  cfg.perceiver.T = get_size(prc, "T");
  cfg.perceiver.n = get_size(prc, "n");
  cfg.perceiver.d = get_size(prc, "d");
  cfg.perceiver.m = get_size(prc, "m");
  cfg.perceiver.p = get_size(prc, "p");
  cfg.perceiver.H = get_size(prc, "H");
  cfg.perceiver.d_h = get_size(prc, "d_h");

  const auto& vq = root.at("vq");
  check_keys(vq, {"d_text", "H", "d_h", "s_q"}, "vq");
  cfg.vq.d = cfg.perceiver.d;
  cfg.vq.d_text = get_size(vq, "d_text");
  cfg.vq.H = get_size(vq, "H");
  cfg.vq.d_h = get_size(vq, "d_h");
  cfg.vq.s_q = get_number(vq, "s_q");

  const auto& enc = root.at("encoder");
  check_keys(enc, {"raw_dim", "sampler_dim"}, "encoder");
  cfg.encoder_raw_dim = get_size(enc, "raw_dim");
  cfg.sampler_dim = get_size(enc, "sampler_dim");

  cfg.vocab_size = get_size(root, "vocab_size");
  cfg.max_text_len = get_size(root, "max_text_len");
  cfg.label_smoothing = get_number(root, "label_smoothing");
  cfg.learning_rate = get_number(root, "learning_rate");
  cfg.batch_size = get_size(root, "batch_size");
  cfg.epochs = get_size(root, "epochs");

  const auto& tr = root.at("trainable");
  check_keys(tr, {"tokenizer", "perceiver", "vqformer", "encoder", "decoder"},
             "trainable");
  cfg.trainable.tokenizer = get_bool(tr, "tokenizer");
  cfg.trainable.perceiver = get_bool(tr, "perceiver");
  cfg.trainable.vqformer = get_bool(tr, "vqformer");
  cfg.trainable.encoder = get_bool(tr, "encoder");
  cfg.trainable.decoder = get_bool(tr, "decoder");

  try {
    cfg.validate();
  } catch (const ContractError& e) {
    throw FormatError(e.what());
  }
  return cfg;
}

model::PipelineConfig load_pipeline_config(
    const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("config: cannot open: " + path.string());
  std::string text((std::istreambuf_iterator<char>(is)),
                   std::istreambuf_iterator<char>());
  return parse_pipeline_config(text);
}

std::vector<DatasetRecord> load_dataset_manifest(
    const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("manifest: cannot open: " + path.string());
  json root;
  try {
    is >> root;
  } catch (const json::exception& e) {
    throw FormatError(std::string("manifest: invalid JSON: ") + e.what());
  }
  if (!root.is_array()) throw FormatError("manifest: expected a JSON list");
  std::vector<DatasetRecord> records;
  for (const auto& item : root) {
    if (!item.is_object() || !item.contains("frames") ||
        !item.contains("question") || !item.contains("answer"))
      throw FormatError(
          "manifest: each record needs frames, question and answer");
    DatasetRecord rec;
    std::filesystem::path frames = item.at("frames").get<std::string>();
    if (frames.is_relative()) frames = path.parent_path() / frames;
    rec.frames_path = frames.string();
    rec.question = item.at("question").get<std::string>();
    rec.answer = item.at("answer").get<std::string>();
    records.push_back(std::move(rec));
  }
  return records;
}

}  // namespace vaquita::config
