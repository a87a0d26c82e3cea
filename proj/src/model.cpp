#include "vaquita/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace vaquita::model {

namespace {

constexpr double kInitStd = 0.02;
constexpr double kLnEps = 1e-5;

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::vector<std::string> split_whitespace(const std::string& text) {
  std::vector<std::string> words;
  std::istringstream is(text);
  std::string w;
  while (is >> w) words.push_back(w);
  return words;
}

Tensor sgd_step(const Tensor& p, double lr) {
  std::vector<double> v(p.values().begin(), p.values().end());
  const auto g = p.grad();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] -= lr * g[i];
  return Tensor::from_values(p.shape(), std::move(v), /*requires_grad=*/true);
}

}  // namespace

void PipelineConfig::validate() const {
  perceiver.validate();
  vq.validate();
  if (vq.d != perceiver.d)
    throw ContractError("config: vq.d must equal perceiver.d");
  if (vocab_size < 2)
    throw ContractError("config: vocab_size must be >= 2 (ids 0/1 reserved)");
  if (max_text_len < 1) throw ContractError("config: max_text_len must be >= 1");
  if (!(label_smoothing >= 0.0 && label_smoothing < 1.0))
    throw ContractError("config: label_smoothing must be in [0, 1)");
  if (!std::isfinite(learning_rate) || learning_rate < 0.0)
    throw ContractError("config: learning_rate must be finite and >= 0");
  if (batch_size < 1) throw ContractError("config: batch_size must be >= 1");
  if (epochs < 1) throw ContractError("config: epochs must be >= 1");
  if (encoder_raw_dim < 1 || sampler_dim < 1)
    throw ContractError("config: encoder dims must be >= 1");
}

PipelineConfig PipelineConfig::desk_tiny() {
  PipelineConfig cfg;
  cfg.perceiver = {.T = 2, .n = 2, .d = 3, .m = 2, .p = 1, .H = 1, .d_h = 2};
  cfg.vq = {.d = 3, .d_text = 4, .H = 1, .d_h = 2, .s_q = 8.0};
  cfg.vocab_size = 5;
  cfg.max_text_len = 16;
  cfg.label_smoothing = 0.1;
  cfg.learning_rate = 0.05;
  cfg.batch_size = 8;
  cfg.epochs = 1;
  cfg.seed = 7;
  cfg.encoder_raw_dim = 3;
  cfg.sampler_dim = 6;
  return cfg;
}

// ---------------------------------------------------------- EncoderStub --

EncoderStub EncoderStub::init(const PipelineConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  EncoderStub e;
  e.n = cfg.perceiver.n;
  e.d = cfg.perceiver.d;
  e.d_s = cfg.sampler_dim;
  e.w_patch = Tensor::randn({cfg.encoder_raw_dim, e.n * e.d}, rng, kInitStd,
                            /*requires_grad=*/false);
  e.w_sampler = Tensor::randn({cfg.encoder_raw_dim, e.d_s}, rng, kInitStd,
                              /*requires_grad=*/false);
  e.text_seed = rng();
  return e;
}

Tensor EncoderStub::frame_features(
    const Tensor& raw, std::span<const std::size_t> frame_ids) const {
  if (raw.rank() != 2 || raw.cols() != w_patch.rows())
    throw ShapeError("encoder: raw frames must be L x raw_dim");
  if (frame_ids.empty()) throw ContractError("encoder: no frames selected");
  const std::size_t k = frame_ids.size(), raw_dim = raw.cols();
  std::vector<double> sel(k * raw_dim);
  for (std::size_t i = 0; i < k; ++i) {
    if (frame_ids[i] >= raw.rows())
      throw ShapeError("encoder: frame index out of range");
    std::copy_n(raw.values().data() + frame_ids[i] * raw_dim, raw_dim,
                sel.data() + i * raw_dim);
  }
  Tensor selected = Tensor::from_values({k, raw_dim}, std::move(sel));
  return reshape(matmul(selected, w_patch), {k, n, d});
}

sampler::FrameEmbeddingSet EncoderStub::sampler_embeddings(
    const Tensor& raw) const {
  if (raw.rank() != 2 || raw.cols() != w_sampler.rows())
    throw ShapeError("encoder: raw frames must be L x raw_dim");
  NoGradGuard no_grad;
  Tensor emb = matmul(raw, w_sampler);
  sampler::FrameEmbeddingSet set;
  set.count = emb.rows();
  set.dim = emb.cols();
  set.vectors.assign(emb.values().begin(), emb.values().end());
  return set;
}

sampler::QueryEmbedding EncoderStub::query_embedding(
    const std::string& question) const {
  const auto words = split_whitespace(question);
  if (words.empty())
    throw ContractError("encoder: question has no tokens");
  sampler::QueryEmbedding q;
  q.dim = d_s;
  q.vector.assign(d_s, 0.0);
  for (const auto& w : words) {
    std::mt19937_64 rng(text_seed ^ fnv1a(w));
    std::normal_distribution<double> dist(0.0, 1.0);
    for (std::size_t i = 0; i < d_s; ++i) q.vector[i] += dist(rng);
  }
  return q;
}

// -------------------------------------------------------- TokenizerStub --

TokenizerStub TokenizerStub::init(const PipelineConfig& cfg,
                                  std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  TokenizerStub t;
  t.table = Tensor::randn({cfg.vocab_size, cfg.vq.d_text}, rng, kInitStd,
                          cfg.trainable.tokenizer);
  return t;
}

std::vector<int> TokenizerStub::encode(const std::string& text) const {
  std::vector<int> ids;
  for (const auto& w : split_whitespace(text)) {
    auto it = index_.find(w);
    ids.push_back(it == index_.end() ? kOovId : it->second);
  }
  return ids;
}

Tensor TokenizerStub::embed(std::span<const int> ids) const {
  return embed_lookup(table, ids);
}

void TokenizerStub::build_vocab(std::span<const std::string> texts) {
  std::vector<std::string> words;
  const std::size_t cap = table.rows() - 2;
  for (const auto& text : texts) {
    for (const auto& w : split_whitespace(text)) {
      if (words.size() >= cap) break;
      if (std::find(words.begin(), words.end(), w) == words.end())
        words.push_back(w);
    }
  }
  set_vocab(std::move(words));
}

void TokenizerStub::set_vocab(std::vector<std::string> words) {
  if (words.size() > table.rows() - 2)
    throw ContractError("tokenizer: vocabulary exceeds table size");
  words_ = std::move(words);
  index_.clear();
  for (std::size_t i = 0; i < words_.size(); ++i)
    index_[words_[i]] = static_cast<int>(i) + 2;
}

// ---------------------------------------------------------- DecoderStub --

DecoderStub DecoderStub::init(const PipelineConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::size_t dt = cfg.vq.d_text;
  const bool trainable = cfg.trainable.decoder;
  DecoderStub dec;
  dec.H = cfg.vq.H;
  dec.d_h = cfg.vq.d_h;
  for (std::size_t h = 0; h < dec.H; ++h) {
    dec.w_q.push_back(Tensor::randn({dt, dec.d_h}, rng, kInitStd, trainable));
    dec.w_k.push_back(Tensor::randn({dt, dec.d_h}, rng, kInitStd, trainable));
    dec.w_v.push_back(Tensor::randn({dt, dec.d_h}, rng, kInitStd, trainable));
  }
  dec.w_merge =
      Tensor::randn({dec.H * dec.d_h, dt}, rng, kInitStd, trainable);
  dec.ln_gamma = Tensor::full({dt}, 1.0, trainable);
  dec.ln_beta = Tensor::zeros({dt}, trainable);
  dec.w_out = Tensor::randn({dt, cfg.vocab_size}, rng, kInitStd, trainable);
  return dec;
}

Tensor DecoderStub::forward(const Tensor& seq) const {
  if (seq.rank() != 2 || seq.cols() != ln_gamma.size())
    throw ShapeError("decoder: sequence must be s x d_text");
  const double logit_scale = 1.0 / std::sqrt(static_cast<double>(d_h));
  Tensor norm = layer_norm(seq, ln_gamma, ln_beta, kLnEps);
  std::vector<Tensor> heads;
  heads.reserve(H);
  for (std::size_t h = 0; h < H; ++h) {
    Tensor q = matmul(norm, w_q[h]);
    Tensor k = matmul(norm, w_k[h]);
    Tensor v = matmul(norm, w_v[h]);
    Tensor attn = causal_softmax_rows(scale(matmul_nt(q, k), logit_scale));
    heads.push_back(matmul(attn, v));
  }
  Tensor x = add(seq, matmul(concat_cols(heads), w_merge));
  return matmul(x, w_out);
}

// ------------------------------------------------------------ ModelState --

ModelState ModelState::init(const PipelineConfig& cfg) {
  cfg.validate();
  std::mt19937_64 master(cfg.seed);
  const std::uint64_t enc_seed = master(), tok_seed = master(),
                      prc_seed = master(), vqf_seed = master(),
                      dec_seed = master();
  ModelState s;
  s.encoder = EncoderStub::init(cfg, enc_seed);
  s.tokenizer = TokenizerStub::init(cfg, tok_seed);
  s.perceiver = perceiver::PerceiverState::init(cfg.perceiver, prc_seed,
                                                cfg.trainable.perceiver);
  s.vqformer =
      vqformer::VQFormerState::init(cfg.vq, vqf_seed, cfg.trainable.vqformer);
  s.decoder = DecoderStub::init(cfg, dec_seed);
  return s;
}

std::vector<std::pair<std::string, Tensor*>> ModelState::parameters() {
  std::vector<std::pair<std::string, Tensor*>> out;
  out.emplace_back("encoder.w_patch", &encoder.w_patch);
  out.emplace_back("encoder.w_sampler", &encoder.w_sampler);
  out.emplace_back("tokenizer.table", &tokenizer.table);
  for (auto& [name, p] : perceiver.parameters())
    out.emplace_back("perceiver." + name, p);
  for (auto& [name, p] : vqformer.parameters())
    out.emplace_back("vqformer." + name, p);
  for (std::size_t h = 0; h < decoder.H; ++h) {
    const std::string hs = std::to_string(h);
    out.emplace_back("decoder.w_q.h" + hs, &decoder.w_q[h]);
    out.emplace_back("decoder.w_k.h" + hs, &decoder.w_k[h]);
    out.emplace_back("decoder.w_v.h" + hs, &decoder.w_v[h]);
  }
  out.emplace_back("decoder.w_merge", &decoder.w_merge);
  out.emplace_back("decoder.ln_gamma", &decoder.ln_gamma);
  out.emplace_back("decoder.ln_beta", &decoder.ln_beta);
  out.emplace_back("decoder.w_out", &decoder.w_out);
  return out;
}

std::vector<std::pair<std::string, Tensor*>> ModelState::trainable_parameters() {
  std::vector<std::pair<std::string, Tensor*>> out;
  for (auto& [name, p] : parameters())
    if (p->requires_grad()) out.emplace_back(name, p);
  return out;
}

// ------------------------------------------------------------------- ops --

Tensor assemble_input(const Tensor& video_tokens, const Tensor& text_tokens) {
  if (video_tokens.rank() != 2 || text_tokens.rank() != 2 ||
      video_tokens.cols() != text_tokens.cols())
    throw ShapeError("assemble_input: token widths disagree");
  return concat_rows(video_tokens, text_tokens);
}

Tensor smoothed_nll_loss(const Tensor& logits, std::span<const int> targets,
                         double eps) {
  if (logits.rank() != 2) throw ShapeError("smoothed_nll_loss: logits rank");
  const std::size_t s = logits.rows(), v = logits.cols();
  if (targets.size() != s)
    throw ContractError("smoothed_nll_loss: one target per row required");
  if (!(eps >= 0.0 && eps < 1.0))
    throw ContractError("smoothed_nll_loss: eps must be in [0, 1)");
  std::vector<double> q(s * v, eps / static_cast<double>(v));
  for (std::size_t i = 0; i < s; ++i) {
    if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= v)
      throw ContractError("smoothed_nll_loss: target out of range");
    q[i * v + static_cast<std::size_t>(targets[i])] += 1.0 - eps;
  }
  Tensor weights = Tensor::from_values({s, v}, std::move(q));
  Tensor logp = log_softmax_rows(logits);
  return scale(sum_all(mul_elem(weights, logp)),
               -1.0 / static_cast<double>(s));
}

std::string prepend_prompt(const std::string& question,
                           const std::string& prompt) {
  if (question.empty()) throw ContractError("prepend_prompt: empty question");
  if (prompt.empty()) return question;
  const char last = prompt.back();
  const bool terminal = last == '.' || last == '!' || last == '?';
  return prompt + (terminal ? " " : ". ") + question;
}

ForwardResult forward(const Tensor& raw_frames, const std::string& question,
                      const std::string& answer, const PipelineConfig& cfg,
                      const ModelState& state, Mode mode) {
  const std::vector<int> q_ids = state.tokenizer.encode(question);
  if (q_ids.empty()) throw ContractError("forward: question must be nonempty");
  const std::vector<int> a_ids = state.tokenizer.encode(answer);
  std::vector<int> text_ids = q_ids;
  text_ids.insert(text_ids.end(), a_ids.begin(), a_ids.end());
  if (text_ids.size() > cfg.max_text_len)
    throw ContractError("forward: text exceeds max_text_len (" +
                        std::to_string(text_ids.size()) + " > " +
                        std::to_string(cfg.max_text_len) + ")");

  if (raw_frames.rank() != 2 || raw_frames.cols() != cfg.encoder_raw_dim)
    throw ShapeError("forward: raw frames must be L x encoder_raw_dim");
  const std::size_t L = raw_frames.rows();

  ForwardResult result;
  result.text_ids = text_ids;
  result.question_len = q_ids.size();
  if (mode == Mode::kTrain) {
    result.plan = sampler::select_frames_train(
        state.encoder.query_embedding(question),
        state.encoder.sampler_embeddings(raw_frames), cfg.perceiver.T);
  } else {
    result.plan = sampler::select_frames_test(L, cfg.perceiver.T);
  }

  Tensor features = state.encoder.frame_features(raw_frames, result.plan.all);
  Tensor video_tokens = perceiver::video_perceiver_forward(features,
                                                           state.perceiver);
  Tensor question_embeds = state.tokenizer.embed(q_ids);
  Tensor aligned =
      vqformer::vqformer_forward(video_tokens, question_embeds, state.vqformer);
  result.video_tokens = aligned;

  Tensor text_embeds =
      a_ids.empty() ? question_embeds : state.tokenizer.embed(text_ids);
  Tensor logits_all =
      state.decoder.forward(assemble_input(aligned, text_embeds));

  const std::size_t m = aligned.rows(), l = text_ids.size();
  const std::size_t v = logits_all.cols();
  result.argmax_ids.resize(l);
  for (std::size_t j = 0; j < l; ++j) {
    const auto row = logits_all.values().subspan((m + j) * v, v);
    std::size_t best = 0;
    for (std::size_t t = 1; t < v; ++t)
      if (row[t] > row[best]) best = t;
    result.argmax_ids[j] = static_cast<int>(best);
  }

  if (a_ids.empty()) {
    result.answer_logits = slice_rows(logits_all, m + l - 1, m + l);
  } else {
    const std::size_t begin = m + q_ids.size() - 1;
    result.answer_logits = slice_rows(logits_all, begin, begin + a_ids.size());
  }
  return result;
}

TrainResult train_loop(const std::vector<Sample>& dataset,
                       const PipelineConfig& cfg, ModelState& state) {
  if (dataset.empty()) throw ContractError("train_loop: empty dataset");
  if (state.tokenizer.vocab().empty()) {
    std::vector<std::string> texts;
    for (const auto& s : dataset) {
      texts.push_back(s.question);
      texts.push_back(s.answer);
    }
    state.tokenizer.build_vocab(texts);
  }

  TrainResult result;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t start = 0; start < dataset.size();
         start += cfg.batch_size) {
      const std::size_t stop =
          std::min(dataset.size(), start + cfg.batch_size);
      Tape tape;
      Tensor batch_loss;
      {
        Tape::Scope scope(tape);
        for (std::size_t i = start; i < stop; ++i) {
          const Sample& sample = dataset[i];
          ForwardResult fr = forward(sample.raw_frames, sample.question,
                                     sample.answer, cfg, state, Mode::kTrain);
          if (fr.text_ids.size() == fr.question_len)
            throw ContractError("train_loop: sample has no answer tokens");
          std::vector<int> targets(fr.text_ids.begin() + fr.question_len,
                                   fr.text_ids.end());
          Tensor loss =
              smoothed_nll_loss(fr.answer_logits, targets, cfg.label_smoothing);
          batch_loss = batch_loss.defined() ? add(batch_loss, loss) : loss;
        }
        batch_loss = scale(batch_loss, 1.0 / static_cast<double>(stop - start));
      }
      tape.backward(batch_loss);
      for (auto& [name, p] : state.trainable_parameters())
        if (p->has_grad()) *p = sgd_step(*p, cfg.learning_rate);
      result.losses.push_back(batch_loss.item());
    }
  }
  return result;
}

}  // namespace vaquita::model
