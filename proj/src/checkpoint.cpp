#include "vaquita/checkpoint.hpp"

#include <fstream>

#include <json.hpp>

#include "vaquita/vqta.hpp"

namespace vaquita::io {

namespace {

using nlohmann::json;

std::string param_file_name(std::size_t index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "p%04zu.vqta", index);
  return buf;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir,
                     model::ModelState& state) {
  std::filesystem::create_directories(dir);
  json params = json::object();
  auto named = state.parameters();
  for (std::size_t i = 0; i < named.size(); ++i) {
    const std::string file = param_file_name(i);
    VqtaTensor t;
    t.dtype = Dtype::f64;
    t.extents.assign(named[i].second->shape().begin(),
                     named[i].second->shape().end());
    t.values.assign(named[i].second->values().begin(),
                    named[i].second->values().end());
    write_vqta_file(dir / file, t);
    params[named[i].first] = file;
  }
  json manifest;
  manifest["format"] = "vaquita-checkpoint-v1";
  manifest["params"] = params;
  manifest["vocab"] = state.tokenizer.vocab();
  std::ofstream os(dir / "manifest.json");
  if (!os)
    throw FormatError("checkpoint: cannot write manifest in " + dir.string());
  os << manifest.dump(2) << "\n";
}

model::ModelState load_checkpoint(const std::filesystem::path& dir,
                                  const model::PipelineConfig& cfg) {
  std::ifstream is(dir / "manifest.json");
  if (!is)
    throw FormatError("checkpoint: cannot open manifest in " + dir.string());
  json manifest;
  try {
    is >> manifest;
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint: bad manifest: ") + e.what());
  }
  if (manifest.value("format", "") != "vaquita-checkpoint-v1")
    throw FormatError("checkpoint: unknown manifest format");

  model::ModelState state = model::ModelState::init(cfg);
  const auto& params = manifest.at("params");
  for (auto& [name, p] : state.parameters()) {
    if (!params.contains(name))
      throw FormatError("checkpoint: missing parameter " + name);
    const std::filesystem::path file =
        dir / params.at(name).get<std::string>();
    VqtaTensor t = read_vqta_file(file);
    Shape shape(t.extents.begin(), t.extents.end());
    if (shape != p->shape())
      throw ShapeError("checkpoint: shape mismatch for " + name);
    *p = Tensor::from_values(std::move(shape), std::move(t.values),
                             p->requires_grad());
  }
  std::vector<std::string> vocab;
  for (const auto& w : manifest.at("vocab")) vocab.push_back(w);
  state.tokenizer.set_vocab(std::move(vocab));
  return state;
}

}  // namespace vaquita::io
