#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "vaquita/checkpoint.hpp"
#include "vaquita/config.hpp"
#include "vaquita/errors.hpp"
#include "vaquita/gradcheck.hpp"
#include "vaquita/judge.hpp"
#include "vaquita/model.hpp"
#include "vaquita/sampler.hpp"
#include "vaquita/vqta.hpp"

namespace {

using nlohmann::json;
using namespace vaquita;

json plan_to_json(const sampler::SamplingPlan& plan) {
  json j;
  j["all"] = plan.all;
  j["similarity"] = plan.similarity;
  j["uniform"] = plan.uniform;
  return j;
}

// Seed precedence: VAQUITA_SEED environment variable, then --seed, then the
// config file.
void apply_seed_override(model::PipelineConfig& cfg,
                         const std::optional<std::uint64_t>& flag_seed) {
  if (flag_seed) cfg.seed = *flag_seed;
  if (const char* env = std::getenv("VAQUITA_SEED")) {
    try {
      cfg.seed = std::stoull(env);
    } catch (const std::exception&) {
      throw FormatError("VAQUITA_SEED is not a non-negative integer");
    }
  }
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open: " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(is, line)) lines.push_back(line);
  return lines;
}

int cmd_sample(const std::string& frames_path, const std::string& query_path,
               std::size_t T, const std::string& mode,
               const std::string& out_path) {
  Tensor frames = io::read_matrix(frames_path);
  const std::size_t L = frames.rows();

  sampler::SamplingPlan plan;
  if (mode == "test") {
    if (T > L)
      std::cerr << "warning: T=" << T << " exceeds frame count L=" << L
                << "; returning all frames\n";
    plan = sampler::select_frames_test(L, T);
  } else if (mode == "train") {
    if (query_path.empty())
      throw FormatError("sample: --query is required in train mode");
    Tensor query = io::read_matrix(query_path);
    if (query.rows() != 1)
      throw FormatError("sample: query must hold a single vector");
    if (query.cols() != frames.cols())
      throw FormatError("sample: frames and query dimensions disagree (" +
                        std::to_string(frames.cols()) + " vs " +
                        std::to_string(query.cols()) + ")");
    if (T > L)
      std::cerr << "warning: T=" << T << " exceeds frame count L=" << L
                << "; returning all frames\n";
    sampler::FrameEmbeddingSet set;
    set.count = L;
    set.dim = frames.cols();
    set.vectors.assign(frames.values().begin(), frames.values().end());
    sampler::QueryEmbedding q;
    q.dim = query.cols();
    q.vector.assign(query.values().begin(), query.values().end());
    plan = sampler::select_frames_train(q, set, T);
  } else {
    throw FormatError("sample: --mode must be train or test");
  }

  const std::string text = plan_to_json(plan).dump();
  if (out_path.empty()) {
    std::cout << text << "\n";
  } else {
    std::ofstream os(out_path);
    if (!os) throw FormatError("sample: cannot write: " + out_path);
    os << text << "\n";
  }
  return 0;
}

int cmd_forward(const std::string& config_path, const std::string& video_path,
                const std::string& question, bool critical,
                const std::string& checkpoint_path,
                const std::optional<std::uint64_t>& seed) {
  model::PipelineConfig cfg = config::load_pipeline_config(config_path);
  apply_seed_override(cfg, seed);
  model::ModelState state = checkpoint_path.empty()
                                ? model::ModelState::init(cfg)
                                : io::load_checkpoint(checkpoint_path, cfg);
  Tensor raw = io::read_matrix(video_path);
  const std::string q =
      critical ? model::prepend_prompt(question) : question;
  model::ForwardResult fr =
      model::forward(raw, q, "", cfg, state, model::Mode::kTest);

  json out;
  out["answer_logits"] = json::array();
  {
    const std::size_t v = fr.answer_logits.cols();
    for (std::size_t i = 0; i < fr.answer_logits.rows(); ++i) {
      std::vector<double> row(fr.answer_logits.values().begin() + i * v,
                              fr.answer_logits.values().begin() + (i + 1) * v);
      out["answer_logits"].push_back(row);
    }
  }
  out["argmax_ids"] = fr.argmax_ids;
  out["plan"] = plan_to_json(fr.plan);
  out["question"] = q;
  out["token_ids"] = fr.text_ids;
  std::cout << out.dump() << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& data_path,
              const std::string& out_dir, const std::string& resume_path,
              const std::optional<std::uint64_t>& seed) {
  model::PipelineConfig cfg = config::load_pipeline_config(config_path);
  apply_seed_override(cfg, seed);
  const auto records = config::load_dataset_manifest(data_path);

  std::vector<model::Sample> dataset;
  dataset.reserve(records.size());
  for (const auto& rec : records)
    dataset.push_back(
        {io::read_matrix(rec.frames_path), rec.question, rec.answer});

  model::ModelState state = resume_path.empty()
                                ? model::ModelState::init(cfg)
                                : io::load_checkpoint(resume_path, cfg);
  if (state.tokenizer.vocab().empty()) {
    std::vector<std::string> texts;
    for (const auto& s : dataset) {
      texts.push_back(s.question);
      texts.push_back(s.answer);
    }
    state.tokenizer.build_vocab(texts);
  }

  std::filesystem::create_directories(out_dir);
  io::save_checkpoint(std::filesystem::path(out_dir) / "checkpoint_init",
                      state);

  model::TrainResult tr = model::train_loop(dataset, cfg, state);

  std::ofstream csv(std::filesystem::path(out_dir) / "loss.csv");
  if (!csv) throw FormatError("train: cannot write loss.csv in " + out_dir);
  csv << "step,loss\n";
  for (std::size_t i = 0; i < tr.losses.size(); ++i) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%zu,%.17g\n", i + 1, tr.losses[i]);
    csv << buf;
  }

  io::save_checkpoint(std::filesystem::path(out_dir) / "checkpoint_final",
                      state);
  std::cout << "steps=" << tr.losses.size();
  if (!tr.losses.empty())
    std::cout << " first_loss=" << tr.losses.front()
              << " last_loss=" << tr.losses.back();
  std::cout << "\n";
  return 0;
}

int cmd_gradcheck(const std::string& module, double eps, int seeds,
                  bool corrupt) {
  gradcheck::Report report = gradcheck::run(module, eps, seeds, corrupt);
  for (const auto& g : report.groups) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.3e", g.max_rel_err);
    std::cout << g.group << " max_rel_err=" << buf << "\n";
  }
  const bool ok = report.pass(gradcheck::kThreshold);
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3e", report.worst());
  std::cout << (ok ? "PASS" : "FAIL") << " worst=" << buf
            << " threshold=" << gradcheck::kThreshold << "\n";
  if (!ok) {
    for (const auto& g : report.groups)
      if (g.max_rel_err >= gradcheck::kThreshold)
        std::cerr << "offending parameter group: " << g.group << "\n";
  }
  return ok ? 0 : 1;
}

int cmd_eval(const std::string& pred_path, const std::string& refs_path,
             const std::string& judge_name) {
  const auto preds = read_lines(pred_path);
  const auto refs = read_lines(refs_path);
  std::unique_ptr<judge::Judge> j;
  if (judge_name == "exact")
    j = judge::make_exact_judge();
  else if (judge_name == "mock")
    j = judge::make_mock_judge();
  else
    throw FormatError("eval: --judge must be exact or mock");
  const judge::EvalSummary summary = judge::evaluate(*j, preds, refs);
  json out;
  out["accuracy"] = summary.accuracy;
  out["score"] = summary.score;
  std::cout << out.dump() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vaquita: question-conditioned video-text alignment harness"};
  app.require_subcommand(1);

  // sample
  std::string s_frames, s_query, s_mode = "train", s_out;
  std::size_t s_T = 0;
  auto* sample = app.add_subcommand(
      "sample", "Select frame indices for a (video, question) pair");
  sample->add_option("--frames", s_frames, "VQTA file of frame embeddings")
      ->required();
  sample->add_option("--query", s_query, "VQTA file of the query embedding");
  sample->add_option("--T", s_T, "number of frames to select")->required();
  sample->add_option("--mode", s_mode, "train|test");
  sample->add_option("--out", s_out, "output path (default stdout)");

  // forward
  std::string f_config, f_video, f_question, f_checkpoint;
  bool f_critical = false;
  std::optional<std::uint64_t> f_seed;
  auto* fwd = app.add_subcommand("forward", "Run one inference pass");
  fwd->add_option("--config", f_config, "pipeline config JSON")->required();
  fwd->add_option("--video", f_video, "VQTA file of raw frame features")
      ->required();
  fwd->add_option("--question", f_question, "question text")->required();
  fwd->add_flag("--critical", f_critical,
                "prepend the critical prompt to the question");
  fwd->add_option("--checkpoint", f_checkpoint, "checkpoint directory");
  fwd->add_option("--seed", f_seed, "seed override (env VAQUITA_SEED wins)");

  // train
  std::string t_config, t_data, t_out, t_resume;
  std::optional<std::uint64_t> t_seed;
  auto* train = app.add_subcommand("train", "Train the alignment modules");
  train->add_option("--config", t_config, "pipeline config JSON")->required();
  train->add_option("--data", t_data, "dataset manifest JSON")->required();
  train->add_option("--out", t_out, "output directory")->required();
  train->add_option("--resume", t_resume, "checkpoint directory to resume");
  train->add_option("--seed", t_seed, "seed override (env VAQUITA_SEED wins)");

  // gradcheck
  std::string g_module = "all";
  double g_eps = 1e-5;
  int g_seeds = 5;
  bool g_corrupt = false;
  auto* gc = app.add_subcommand(
      "gradcheck", "Compare reverse-mode gradients to finite differences");
  gc->add_option("--module", g_module, "tensor|perceiver|vqformer|model|all");
  gc->add_option("--eps", g_eps, "finite-difference step");
  gc->add_option("--seeds", g_seeds, "number of seeds");
  gc->add_flag("--corrupt-adjoint", g_corrupt,
               "test hook: corrupt one gradient so the check must fail");

  // eval
  std::string e_pred, e_refs, e_judge = "exact";
  auto* eval = app.add_subcommand("eval", "Score predictions against references");
  eval->add_option("--pred", e_pred, "predictions, one per line")->required();
  eval->add_option("--refs", e_refs, "references, one per line")->required();
  eval->add_option("--judge", e_judge, "exact|mock");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*sample) return cmd_sample(s_frames, s_query, s_T, s_mode, s_out);
    if (*fwd)
      return cmd_forward(f_config, f_video, f_question, f_critical,
                         f_checkpoint, f_seed);
    if (*train) return cmd_train(t_config, t_data, t_out, t_resume, t_seed);
    if (*gc) return cmd_gradcheck(g_module, g_eps, g_seeds, g_corrupt);
    if (*eval) return cmd_eval(e_pred, e_refs, e_judge);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return vaquita::cli_exit_code(e);
  }
  return 2;
}
