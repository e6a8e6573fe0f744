#include "ilm/lm.hpp"

#include <cmath>
#include <numeric>

#include "ilm/errors.hpp"

namespace ilm {

const char* embedding_mode_name(EmbeddingMode m) {
  return m == EmbeddingMode::avg_word_embedding ? "avg-word" : "avg-hidden";
}

EmbeddingMode embedding_mode_from_name(const std::string& name) {
  if (name == "avg-word") return EmbeddingMode::avg_word_embedding;
  if (name == "avg-hidden") return EmbeddingMode::avg_last_hidden;
  fail(Errc::parse_error, "unknown embedding mode '" + name + "' (avg-word or avg-hidden)");
}

void LMConfig::validate() const {
  if (vocab_size < 4) fail(Errc::invalid_config, "vocab_size must cover content tokens + specials");
  if (embed_dim <= 0 || num_layers <= 0 || num_heads <= 0 || ffn_dim <= 0)
    fail(Errc::invalid_config, "model dimensions must be positive");
  if (embed_dim % num_heads != 0) fail(Errc::invalid_config, "embed_dim not divisible by num_heads");
  if (max_seq_len < 2) fail(Errc::invalid_config, "max_seq_len too small");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0) fail(Errc::invalid_config, "dropout_rate outside [0,1)");
  if (learning_rate <= 0.0) fail(Errc::invalid_config, "learning_rate must be positive");
  if (batch_size <= 0) fail(Errc::invalid_config, "batch_size must be positive");
}

Batch make_batch(std::span<const Sentence> sentences, std::span<const int> indices,
                 const LMConfig& cfg) {
  Batch batch;
  for (int idx : indices) {
    const Sentence& s = sentences[static_cast<std::size_t>(idx)];
    const int len = static_cast<int>(s.ids.size());
    if (len + 2 > cfg.max_seq_len)
      fail(Errc::sequence_too_long, "encoded length " + std::to_string(len + 2) + " exceeds max_seq_len " +
                                        std::to_string(cfg.max_seq_len));
    const int rows = len + 1;  // BOS + content in, content + EOS out
    batch.segments.push_back(Segment{static_cast<int>(batch.input_ids.size()), rows});
    batch.input_ids.push_back(cfg.bos_id());
    for (int id : s.ids) batch.input_ids.push_back(id);
    for (int p = 0; p < rows; ++p) batch.positions.push_back(p);
    for (int id : s.ids) batch.targets.push_back(id);
    batch.targets.push_back(cfg.eos_id());
  }
  return batch;
}

namespace {

// Parameter layout; the fixed order doubles as the checkpoint order.
constexpr int kPerLayer = 12;

int layer_base(int layer) { return 2 + layer * kPerLayer; }

}  // namespace

CausalLM::CausalLM(LMConfig cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  auto normal_matrix = [&](Eigen::Index r, Eigen::Index c) {
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
      for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rng.normal(0.0, 0.02);
    return m;
  };
  const int d = cfg_.embed_dim;
  const int f = cfg_.ffn_dim;
  const int v = cfg_.vocab_size;

  params_.emplace_back("tok_emb", normal_matrix(v, d));
  params_.emplace_back("pos_emb", normal_matrix(cfg_.max_seq_len, d));
  for (int l = 0; l < cfg_.num_layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    params_.emplace_back(p + "ln1.gain", Matrix::Ones(1, d));
    params_.emplace_back(p + "ln1.shift", Matrix::Zero(1, d));
    params_.emplace_back(p + "attn.w_qkv", normal_matrix(d, 3 * d));
    params_.emplace_back(p + "attn.b_qkv", Matrix::Zero(1, 3 * d));
    params_.emplace_back(p + "attn.w_out", normal_matrix(d, d));
    params_.emplace_back(p + "attn.b_out", Matrix::Zero(1, d));
    params_.emplace_back(p + "ln2.gain", Matrix::Ones(1, d));
    params_.emplace_back(p + "ln2.shift", Matrix::Zero(1, d));
    params_.emplace_back(p + "ffn.w1", normal_matrix(d, f));
    params_.emplace_back(p + "ffn.b1", Matrix::Zero(1, f));
    params_.emplace_back(p + "ffn.w2", normal_matrix(f, d));
    params_.emplace_back(p + "ffn.b2", Matrix::Zero(1, d));
  }
  params_.emplace_back("final_norm.gain", Matrix::Ones(1, d));
  params_.emplace_back("final_norm.shift", Matrix::Zero(1, d));
  params_.emplace_back("out_proj.w", normal_matrix(d, v));
  params_.emplace_back("out_proj.b", Matrix::Zero(1, v));
}

Var CausalLM::hidden_graph(Tape& tape, const std::vector<Var>& leaves, const Batch& batch) const {
  return hidden_graph_impl(tape, leaves, batch, false, nullptr);
}

// The shared trunk up to the final norm.
Var CausalLM::hidden_graph_impl(Tape& tape, const std::vector<Var>& leaves, const Batch& batch,
                                bool training, Rng* rng) const {
  const int d = cfg_.embed_dim;
  const bool drop = training && cfg_.dropout_rate > 0.0;
  Var x = add(tape, embedding_lookup(tape, leaves[0], batch.input_ids),
              embedding_lookup(tape, leaves[1], batch.positions));
  if (drop) x = dropout(tape, x, cfg_.dropout_rate, *rng);
  for (int l = 0; l < cfg_.num_layers; ++l) {
    const int b = layer_base(l);
    Var h = layer_norm(tape, x, leaves[b + 0], leaves[b + 1]);
    Var qkv = affine(tape, h, leaves[b + 2], leaves[b + 3]);
    Var attn = causal_self_attention(tape, slice_cols(tape, qkv, 0, d), slice_cols(tape, qkv, d, d),
                                     slice_cols(tape, qkv, 2 * d, d), cfg_.num_heads, batch.segments);
    Var a = affine(tape, attn, leaves[b + 4], leaves[b + 5]);
    if (drop) a = dropout(tape, a, cfg_.dropout_rate, *rng);
    x = add(tape, x, a);
    Var h2 = layer_norm(tape, x, leaves[b + 6], leaves[b + 7]);
    Var ff = affine(tape, gelu(tape, affine(tape, h2, leaves[b + 8], leaves[b + 9])), leaves[b + 10],
                    leaves[b + 11]);
    if (drop) ff = dropout(tape, ff, cfg_.dropout_rate, *rng);
    x = add(tape, x, ff);
  }
  const int fb = layer_base(cfg_.num_layers);
  return layer_norm(tape, x, leaves[fb + 0], leaves[fb + 1]);
}

Var CausalLM::logits_graph(Tape& tape, const std::vector<Var>& leaves, const Batch& batch,
                           bool training, Rng* rng) const {
  const Var h = hidden_graph_impl(tape, leaves, batch, training, rng);
  const int fb = layer_base(cfg_.num_layers);
  return affine(tape, h, leaves[fb + 2], leaves[fb + 3]);
}

Matrix CausalLM::eval_logits(const Batch& batch) const {
  Tape tape;
  std::vector<Var> leaves;
  leaves.reserve(params_.size());
  for (const Parameter& p : params_) leaves.push_back(tape.input(p.value, false));
  return tape.value(logits_graph(tape, leaves, batch, false, nullptr));
}

namespace {

std::vector<int> draw_batch_indices(int n, int batch_size, Rng& rng) {
  if (n >= batch_size) return rng.sample_without_replacement(n, batch_size);
  std::vector<int> idx(static_cast<std::size_t>(batch_size));
  for (auto& i : idx) i = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
  return idx;
}

double train_one_step(CausalLM& model, std::span<const Sentence> sentences, Rng& rng,
                      const AdamConfig& adam) {
  const LMConfig& cfg = model.config();
  const auto indices = draw_batch_indices(static_cast<int>(sentences.size()), cfg.batch_size, rng);
  const Batch batch = make_batch(sentences, indices, cfg);
  auto params = param_ptrs(model.parameters());
  for (Parameter* p : params) p->zero_grad();
  const GraphFn graph = [&](Tape& t, const std::vector<Var>& leaves) {
    return cross_entropy_mean(t, model.logits_graph(t, leaves, batch, true, &rng), batch.targets);
  };
  const double loss = forward_backward(graph, params);
  adam_step(params, adam);
  return loss;
}

}  // namespace

std::vector<double> train_lm(CausalLM& model, std::span<const Sentence> sentences, int num_steps,
                             std::uint64_t seed) {
  if (model.frozen()) fail(Errc::invalid_config, "cannot train a frozen model");
  if (num_steps < 0) fail(Errc::invalid_config, "num_steps must be >= 0");
  if (num_steps > 0 && sentences.empty()) fail(Errc::empty_batch, "no sentences to train on");
  std::vector<double> trace;
  trace.reserve(static_cast<std::size_t>(num_steps));
  Rng rng(derive_seed(seed, 0, 0, "lm-train"));
  const AdamConfig adam{model.config().learning_rate};
  for (int step = 0; step < num_steps; ++step)
    trace.push_back(train_one_step(model, sentences, rng, adam));
  return trace;
}

double perplexity_from_logprobs(const Matrix& logprobs, std::span<const int> targets) {
  if (logprobs.rows() == 0) fail(Errc::empty_batch, "perplexity over zero positions");
  if (static_cast<Eigen::Index>(targets.size()) != logprobs.rows())
    fail(Errc::shape_mismatch, "one target per row required");
  double total_nll = 0.0;
  for (Eigen::Index r = 0; r < logprobs.rows(); ++r)
    total_nll -= logprobs(r, targets[static_cast<std::size_t>(r)]);
  return std::exp(total_nll / static_cast<double>(logprobs.rows()));
}

double perplexity_from_logits(const Matrix& logits, std::span<const int> targets) {
  Matrix lp(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double mx = logits.row(r).maxCoeff();
    const double lse = mx + std::log((logits.row(r).array() - mx).exp().sum());
    lp.row(r) = logits.row(r).array() - lse;
  }
  return perplexity_from_logprobs(lp, targets);
}

double perplexity(const CausalLM& model, std::span<const Sentence> sentences) {
  if (sentences.empty()) fail(Errc::empty_batch, "perplexity over an empty set");
  std::vector<int> all(sentences.size());
  std::iota(all.begin(), all.end(), 0);
  const Batch batch = make_batch(sentences, all, model.config());
  return perplexity_from_logits(model.eval_logits(batch), batch.targets);
}

Vector embed_sentence(const CausalLM& model, const Sentence& sentence, EmbeddingMode mode) {
  if (!model.frozen()) fail(Errc::invalid_config, "embeddings require a frozen model");
  if (sentence.ids.empty()) fail(Errc::empty_batch, "cannot embed an empty sentence");
  if (mode == EmbeddingMode::avg_word_embedding) {
    const Matrix& table = model.parameters()[0].value;
    Vector mean = Vector::Zero(model.config().embed_dim);
    for (int id : sentence.ids) mean += table.row(id).transpose();
    return mean / static_cast<double>(sentence.ids.size());
  }
  const Sentence* one = &sentence;
  const std::vector<int> idx{0};
  const Batch batch = make_batch(std::span<const Sentence>(one, 1), idx, model.config());
  Tape tape;
  std::vector<Var> leaves;
  leaves.reserve(model.parameters().size());
  for (const Parameter& p : model.parameters()) leaves.push_back(tape.input(p.value, false));
  const Matrix& hidden = tape.value(model.hidden_graph(tape, leaves, batch));
  // Rows 1..len are the content positions; row 0 is BOS.
  const auto len = static_cast<Eigen::Index>(sentence.ids.size());
  return hidden.middleRows(1, len).colwise().mean().transpose();
}

Matrix embed_sentences(const CausalLM& model, std::span<const Sentence> sentences,
                       EmbeddingMode mode) {
  Matrix out(static_cast<Eigen::Index>(sentences.size()), model.config().embed_dim);
  for (std::size_t i = 0; i < sentences.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = embed_sentence(model, sentences[i], mode).transpose();
  return out;
}

PretrainResult pretrain_teacher(const LMConfig& cfg, std::span<const Sentence> sentences,
                                std::uint64_t seed, const PretrainOptions& opts) {
  if (sentences.empty()) fail(Errc::empty_batch, "pretraining needs a nonempty set");
  PretrainResult result{CausalLM(cfg, derive_seed(seed, 0, 0, "teacher-init"))};
  if (opts.step_cap <= 0) {
    result.model.set_convergence_warning(true);
    result.model.freeze();
    return result;
  }
  Rng rng(derive_seed(seed, 0, 0, "teacher-train"));
  const AdamConfig adam{cfg.learning_rate};
  auto window_mean = [&](int back_from) {
    const auto& tr = result.trace;
    double s = 0.0;
    for (int i = back_from - opts.window; i < back_from; ++i) s += tr[static_cast<std::size_t>(i)];
    return s / opts.window;
  };
  for (int step = 0; step < opts.step_cap; ++step) {
    result.trace.push_back(train_one_step(result.model, sentences, rng, adam));
    const int n = static_cast<int>(result.trace.size());
    if (n >= 2 * opts.window && n % opts.window == 0) {
      const double prev = window_mean(n - opts.window);
      const double cur = window_mean(n);
      if (prev - cur < opts.tolerance) {
        result.converged = true;
        break;
      }
    }
  }
  result.steps = static_cast<int>(result.trace.size());
  result.model.set_convergence_warning(!result.converged);
  result.model.freeze();
  return result;
}

}  // namespace ilm
