#pragma once

#include <cstdint>
#include <span>

#include "ilm/autodiff.hpp"
#include "ilm/corpus.hpp"
#include "ilm/optim.hpp"

namespace ilm {

enum class EmbeddingMode { avg_word_embedding, avg_last_hidden };

const char* embedding_mode_name(EmbeddingMode m);
EmbeddingMode embedding_mode_from_name(const std::string& name);

struct LMConfig {
  int vocab_size = 0;  // content tokens + BOS/EOS/PAD, ids per corpus layout
  int embed_dim = 64;
  int num_layers = 2;
  int num_heads = 2;
  int ffn_dim = 128;
  int max_seq_len = 12;
  double dropout_rate = 0.1;
  double learning_rate = 1e-3;
  int batch_size = 10;

  void validate() const;  // throws InvalidConfig
  int bos_id() const { return vocab_size - 3; }
  int eos_id() const { return vocab_size - 2; }
  int pad_id() const { return vocab_size - 1; }
};

// Sentences stacked into one ragged batch. Each sentence contributes input
// rows BOS + content and targets content + EOS, so every row is predicted.
struct Batch {
  std::vector<int> input_ids;
  std::vector<int> positions;
  std::vector<int> targets;
  std::vector<Segment> segments;
};

Batch make_batch(std::span<const Sentence> sentences, std::span<const int> indices,
                 const LMConfig& cfg);

// Pre-norm causal transformer: embeddings -> [LN, attention, LN, GELU FFN] x
// layers -> LN -> logit projection. Weights start at N(0, 0.02^2), norms at
// identity; fully determined by (config, seed).
class CausalLM {
 public:
  CausalLM(LMConfig cfg, std::uint64_t seed);

  const LMConfig& config() const { return cfg_; }
  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }

  // Appends the transformer forward pass for `batch` to the tape. `leaves`
  // must hold one Var per parameter, in parameter order. When training,
  // dropout masks are drawn from `rng`.
  Var logits_graph(Tape& tape, const std::vector<Var>& leaves, const Batch& batch, bool training,
                   Rng* rng) const;
  // Same forward pass, stopping at the final-norm hidden states.
  Var hidden_graph(Tape& tape, const std::vector<Var>& leaves, const Batch& batch) const;

  // Eval-mode logits (no dropout, no gradients).
  Matrix eval_logits(const Batch& batch) const;

  void freeze() { frozen_ = true; }
  bool frozen() const { return frozen_; }
  void set_convergence_warning(bool w) { convergence_warning_ = w; }
  bool convergence_warning() const { return convergence_warning_; }

 private:
  Var hidden_graph_impl(Tape& tape, const std::vector<Var>& leaves, const Batch& batch,
                        bool training, Rng* rng) const;

  LMConfig cfg_;
  std::vector<Parameter> params_;
  bool frozen_ = false;
  bool convergence_warning_ = false;
};

// Runs exactly `num_steps` Adam updates of next-token cross-entropy on
// minibatches drawn from the seeded generator; returns the per-step losses.
// The model keeps its final state (no best-checkpoint selection).
std::vector<double> train_lm(CausalLM& model, std::span<const Sentence> sentences, int num_steps,
                             std::uint64_t seed);

// exp(total NLL / total predicted positions), pooled over the whole corpus.
double perplexity(const CausalLM& model, std::span<const Sentence> sentences);

// Pooled perplexity identities, exposed for direct verification.
double perplexity_from_logprobs(const Matrix& logprobs, std::span<const int> targets);
double perplexity_from_logits(const Matrix& logits, std::span<const int> targets);

// Sentence embedding from a frozen model. avg_word_embedding averages the
// token-embedding rows of the content tokens; avg_last_hidden averages the
// final-norm hidden states at content positions of a BOS-prefixed pass.
Vector embed_sentence(const CausalLM& model, const Sentence& sentence, EmbeddingMode mode);

// One row per sentence.
Matrix embed_sentences(const CausalLM& model, std::span<const Sentence> sentences,
                       EmbeddingMode mode);

struct PretrainOptions {
  int window = 50;
  double tolerance = 1e-3;
  int step_cap = 5000;
};

struct PretrainResult {
  CausalLM model;
  int steps = 0;
  bool converged = false;
  std::vector<double> trace;
};

// Trains until the windowed mean loss stops improving by `tolerance`, or
// `step_cap` is reached; the returned model is frozen. A cap of 0 returns the
// fresh model with a convergence warning set.
PretrainResult pretrain_teacher(const LMConfig& cfg, std::span<const Sentence> sentences,
                                std::uint64_t seed, const PretrainOptions& opts = {});

}  // namespace ilm
