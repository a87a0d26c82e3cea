#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "vaquita/perceiver.hpp"
#include "vaquita/sampler.hpp"
#include "vaquita/tensor.hpp"
#include "vaquita/vqformer.hpp"

namespace vaquita::model {

struct TrainableFlags {
  bool tokenizer = true;
  bool perceiver = true;
  bool vqformer = true;
  bool encoder = false;
  bool decoder = false;
};

struct PipelineConfig {
  perceiver::PerceiverConfig perceiver;
  vqformer::VQFormerConfig vq;
  std::size_t vocab_size = 32000;
  std::size_t max_text_len = 64;
  double label_smoothing = 0.1;
  double learning_rate = 2e-5;
  std::size_t batch_size = 32;
  std::size_t epochs = 3;
  std::uint64_t seed = 0;
  TrainableFlags trainable;
  std::size_t encoder_raw_dim = 32;  // raw per-frame feature width
  std::size_t sampler_dim = 768;     // d_s

  void validate() const;
  /// Small dimensions suitable for tests and gradient checks.
  static PipelineConfig desk_tiny();
};

/// Frozen stand-in for the pretrained visual/text encoder pair: one fixed
/// seeded projection to per-frame patch features, a second to the ranking
/// space, and a deterministic bag-of-words text embedding for queries.
struct EncoderStub {
  Tensor w_patch;    // raw_dim x (n*d)
  Tensor w_sampler;  // raw_dim x d_s
  std::uint64_t text_seed = 0;
  std::size_t n = 0, d = 0, d_s = 0;

  static EncoderStub init(const PipelineConfig& cfg, std::uint64_t seed);

  /// Selected raw rows projected to patch features, shape k x n x d.
  Tensor frame_features(const Tensor& raw,
                        std::span<const std::size_t> frame_ids) const;
  sampler::FrameEmbeddingSet sampler_embeddings(const Tensor& raw) const;
  sampler::QueryEmbedding query_embedding(const std::string& question) const;
};

/// Whitespace tokenizer over an explicit vocabulary with a trainable
/// embedding table. Id 0 is reserved for padding, id 1 for out-of-vocabulary
/// words; vocabulary words start at id 2.
struct TokenizerStub {
  static constexpr int kPadId = 0;
  static constexpr int kOovId = 1;

  Tensor table;  // V x d_text

  static TokenizerStub init(const PipelineConfig& cfg, std::uint64_t seed);

  std::vector<int> encode(const std::string& text) const;
  Tensor embed(std::span<const int> ids) const;
  /// First-appearance order, capped at V-2 words.
  void build_vocab(std::span<const std::string> texts);
  void set_vocab(std::vector<std::string> words);
  const std::vector<std::string>& vocab() const { return words_; }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> index_;
};

/// Frozen decoder: one causal self-attention block over d_text plus an
/// output projection to the vocabulary.
struct DecoderStub {
  std::vector<Tensor> w_q, w_k, w_v;  // per head, d_text x d_h
  Tensor w_merge;                     // (H*d_h) x d_text
  Tensor ln_gamma, ln_beta;           // over d_text
  Tensor w_out;                       // d_text x V
  std::size_t H = 0, d_h = 0;

  static DecoderStub init(const PipelineConfig& cfg, std::uint64_t seed);

  /// seq (s x d_text) -> next-token logits (s x V).
  Tensor forward(const Tensor& seq) const;
};

struct ModelState {
  EncoderStub encoder;
  TokenizerStub tokenizer;
  perceiver::PerceiverState perceiver;
  vqformer::VQFormerState vqformer;
  DecoderStub decoder;

  static ModelState init(const PipelineConfig& cfg);

  /// All parameters with component-prefixed names, stable order.
  std::vector<std::pair<std::string, Tensor*>> parameters();
  std::vector<std::pair<std::string, Tensor*>> trainable_parameters();
};

/// Video tokens first (rows 0..m-1), text tokens after.
Tensor assemble_input(const Tensor& video_tokens, const Tensor& text_tokens);

/// Mean over positions of (1-eps) * (-log p[target]) plus the uniform
/// penalty (eps/V) * sum_v (-log p[v]), with p = softmax over each row.
Tensor smoothed_nll_loss(const Tensor& logits, std::span<const int> targets,
                         double eps);

/// "Please be critical. <question>"; a prompt already ending in terminal
/// punctuation is joined with a single space. Not idempotent: calling twice
/// prepends twice.
std::string prepend_prompt(const std::string& question,
                           const std::string& prompt = "Please be critical");

enum class Mode { kTrain, kTest };

struct ForwardResult {
  /// Next-token logits at the answer positions: one row per answer token
  /// when an answer is supplied (teacher forcing), else the single row
  /// predicting the token after the question.
  Tensor answer_logits;
  /// Next-token argmax id at every text position.
  std::vector<int> argmax_ids;
  std::vector<int> text_ids;
  std::size_t question_len = 0;
  sampler::SamplingPlan plan;
  /// The question-conditioned video tokens fed to the decoder (m x d_text).
  Tensor video_tokens;
};

/// Full pipeline: frame selection, frozen encoder, perceiver, gated
/// cross-attention, token assembly, frozen decoder. Train mode ranks frames
/// against the question; test mode samples uniformly and ignores it.
ForwardResult forward(const Tensor& raw_frames, const std::string& question,
                      const std::string& answer, const PipelineConfig& cfg,
                      const ModelState& state, Mode mode);

struct Sample {
  Tensor raw_frames;  // L x raw_dim
  std::string question;
  std::string answer;
};

struct TrainResult {
  std::vector<double> losses;  // mean batch loss per step
};

/// Plain SGD over the trainable parameters; batches taken in dataset order,
/// gradients accumulated item by item on a single tape per step. Builds the
/// vocabulary from the dataset if the tokenizer has none.
TrainResult train_loop(const std::vector<Sample>& dataset,
                       const PipelineConfig& cfg, ModelState& state);

}  // namespace vaquita::model
