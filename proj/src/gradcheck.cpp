#include "vaquita/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <random>

#include "vaquita/model.hpp"
#include "vaquita/perceiver.hpp"
#include "vaquita/tensor.hpp"
#include "vaquita/vqformer.hpp"

namespace vaquita::gradcheck {

namespace {

using NamedParams = std::vector<std::pair<std::string, Tensor*>>;

double rel_err(std::span<const double> analytic, std::span<const double> fd) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double denom =
        std::max({1.0, std::abs(analytic[i]), std::abs(fd[i])});
    worst = std::max(worst, std::abs(analytic[i] - fd[i]) / denom);
  }
  return worst;
}

// Runs one analytic backward over `loss_fn`, then checks every named
// parameter against central differences, folding errors into `errs`.
void check_params(const NamedParams& params,
                  const std::function<Tensor()>& loss_fn, double h,
                  bool corrupt, std::map<std::string, double>& errs) {
  Tape tape;
  Tensor loss;
  {
    Tape::Scope scope(tape);
    loss = loss_fn();
  }
  tape.backward(loss);

  std::map<std::string, std::vector<double>> analytic;
  for (const auto& [name, p] : params) {
    if (p->has_grad())
      analytic[name].assign(p->grad().begin(), p->grad().end());
    else
      analytic[name].assign(p->size(), 0.0);
  }
  if (corrupt && !params.empty()) analytic[params.front().first][0] += 1e-2;

  for (const auto& [name, p] : params) {
    Tensor original = *p;
    auto f = [&, p](const Tensor& x) {
      *p = x;
      NoGradGuard no_grad;
      return loss_fn().item();
    };
    Tensor fd = finite_diff_grad(f, original, h);
    *p = original;
    const double err = rel_err(analytic[name], fd.values());
    auto it = errs.find(name);
    if (it == errs.end())
      errs[name] = err;
    else
      it->second = std::max(it->second, err);
  }
}

// Composite touching every primitive op, with weights as the checked
// parameters.
void check_tensor_module(std::uint64_t seed, double h, bool corrupt,
                         std::map<std::string, double>& errs) {
  std::mt19937_64 rng(seed);
  Tensor table = Tensor::randn({5, 3}, rng, 0.8, true);
  Tensor a = Tensor::randn({2, 3}, rng, 0.8, true);
  Tensor bias3 = Tensor::randn({3}, rng, 0.5, true);
  Tensor gamma3 = Tensor::randn({3}, rng, 0.3, true);
  Tensor beta3 = Tensor::randn({3}, rng, 0.3, true);
  Tensor b2x3 = Tensor::randn({2, 3}, rng, 0.8, true);
  Tensor gate = Tensor::randn({1}, rng, 0.5, true);
  const std::vector<int> ids = {0, 2, 4, 2};

  NamedParams params = {{"table", &table}, {"a", &a},         {"bias3", &bias3},
                        {"gamma3", &gamma3}, {"beta3", &beta3}, {"b2x3", &b2x3},
                        {"gate", &gate}};

  auto loss_fn = [&] {
    Tensor e = embed_lookup(table, ids);                       // 4x3
    Tensor r = repeat_rows_each(a, 2);                         // 4x3
    Tensor s = add_row_vector(add(e, r), bias3);               // 4x3
    Tensor sq = causal_softmax_rows(matmul_tn(s, s));          // 3x3
    Tensor q0 = matmul(a, sq);                                 // 2x3
    Tensor q1 = layer_norm(q0, gamma3, beta3, 1e-3);           // 2x3
    Tensor q4 = mul_elem(gelu(q1), tanh_elem(q1));             // 2x3
    Tensor q6 = concat_cols(
        std::vector<Tensor>{concat_rows(q4, a), s});           // 4x6
    Tensor q7 = reshape(q6, {8, 3});                           // 8x3
    Tensor q8 = matmul_nt(q7, b2x3);                           // 8x2
    Tensor q11 = add(softmax_rows(q8), log_softmax_rows(q8));  // 8x2
    Tensor q13 = scale(slice_rows(q11, 1, 7), 1.7);            // 6x2
    Tensor q14 = scale_by(q13, tanh_elem(gate));
    return sum_all(q14);
  };
  check_params(params, loss_fn, h, corrupt, errs);
}

void check_perceiver_module(std::uint64_t seed, double h, bool corrupt,
                            std::map<std::string, double>& errs) {
  perceiver::PerceiverConfig cfg{
      .T = 2, .n = 2, .d = 3, .m = 2, .p = 1, .H = 1, .d_h = 2};
  auto state = perceiver::PerceiverState::init(cfg, seed, true);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
  Tensor f = Tensor::randn({cfg.T, cfg.n, cfg.d}, rng, 0.8);
  Tensor weights = Tensor::randn({cfg.m, cfg.d}, rng, 1.0);

  auto loss_fn = [&] {
    Tensor out = perceiver::video_perceiver_forward(f, state);
    return sum_all(mul_elem(out, weights));
  };
  check_params(state.parameters(), loss_fn, h, corrupt, errs);
}

void check_vqformer_module(std::uint64_t seed, double h, bool corrupt,
                           std::map<std::string, double>& errs) {
  vqformer::VQFormerConfig cfg{.d = 3, .d_text = 4, .H = 1, .d_h = 2,
                               .s_q = 1.5};
  auto state = vqformer::VQFormerState::init(cfg, seed, true);
  std::mt19937_64 rng(seed ^ 0x5851f42d4c957f2dull);
  Tensor m = Tensor::randn({2, cfg.d}, rng, 0.8);
  Tensor x = Tensor::randn({3, cfg.d_text}, rng, 0.8);
  Tensor weights = Tensor::randn({2, cfg.d_text}, rng, 1.0);

  auto loss_fn = [&] {
    Tensor out = vqformer::vqformer_forward(m, x, state);
    return sum_all(mul_elem(out, weights));
  };
  check_params(state.parameters(), loss_fn, h, corrupt, errs);
}

void check_model_module(std::uint64_t seed, double h, bool corrupt,
                        std::map<std::string, double>& errs) {
  model::PipelineConfig cfg = model::PipelineConfig::desk_tiny();
  cfg.seed = seed;
  model::ModelState state = model::ModelState::init(cfg);
  state.tokenizer.build_vocab(
      std::vector<std::string>{"what is shown", "a cat"});

  std::mt19937_64 rng(seed ^ 0xda3e39cb94b95bdbull);
  Tensor raw = Tensor::randn({5, cfg.encoder_raw_dim}, rng, 1.0);
  const std::string question = "what is shown";
  const std::string answer = "a cat";

  auto loss_fn = [&] {
    model::ForwardResult fr = model::forward(raw, question, answer, cfg,
                                             state, model::Mode::kTrain);
    std::vector<int> targets(fr.text_ids.begin() + fr.question_len,
                             fr.text_ids.end());
    return model::smoothed_nll_loss(fr.answer_logits, targets,
                                    cfg.label_smoothing);
  };
  check_params(state.trainable_parameters(), loss_fn, h, corrupt, errs);
}

}  // namespace

double Report::worst() const {
  double w = 0.0;
  for (const auto& g : groups) w = std::max(w, g.max_rel_err);
  return w;
}

Report run(const std::string& module, double h, int seeds, bool corrupt) {
  if (!(h > 0)) throw ContractError("gradcheck: h must be > 0");
  if (seeds < 1) throw ContractError("gradcheck: seeds must be >= 1");
  const bool all = module == "all";
  if (!all && module != "tensor" && module != "perceiver" &&
      module != "vqformer" && module != "model")
    throw ContractError("gradcheck: unknown module \"" + module + "\"");

  Report report;
  auto run_module = [&](const std::string& name, auto&& fn) {
    std::map<std::string, double> errs;
    for (int s = 0; s < seeds; ++s)
      fn(1000ull * static_cast<std::uint64_t>(s) + 17ull, h, corrupt, errs);
    for (const auto& [group, err] : errs)
      report.groups.push_back({name + "." + group, err});
  };
  if (all || module == "tensor") run_module("tensor", check_tensor_module);
  if (all || module == "perceiver")
    run_module("perceiver", check_perceiver_module);
  if (all || module == "vqformer")
    run_module("vqformer", check_vqformer_module);
  if (all || module == "model") run_module("model", check_model_module);
  return report;
}

}  // namespace vaquita::gradcheck
