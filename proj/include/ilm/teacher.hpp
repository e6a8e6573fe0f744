#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ilm/autodiff.hpp"
#include "ilm/optim.hpp"
#include "ilm/rng.hpp"

namespace ilm {

// Affine scorer over sentence embeddings: score(e) = weight . e + bias. The
// softmax of the pool scores is the selection distribution.
struct TeacherPolicy {
  Parameter weight;  // embed_dim x 1
  Parameter bias;    // 1 x 1

  explicit TeacherPolicy(int embed_dim)
      : weight("policy.weight", Matrix::Zero(embed_dim, 1)), bias("policy.bias", Matrix::Zero(1, 1)) {}

  int embed_dim() const { return static_cast<int>(weight.value.rows()); }
};

struct PolicyOutput {
  Vector scores;
  Vector log_probs;  // log-softmax of scores
  double entropy = 0.0;
};

// A budget-K selection; log_prob is the sum of the elements' log-softmax
// values (the without-replacement surrogate used for the policy gradient).
struct Lesson {
  std::vector<int> indices;
  double log_prob = 0.0;
};

enum class RewardTransform { neg_perplexity, neg_log_perplexity };
enum class BaselineMode { student_mean, ema };

const char* reward_transform_name(RewardTransform t);
RewardTransform reward_transform_from_name(const std::string& name);
const char* baseline_mode_name(BaselineMode m);
BaselineMode baseline_mode_from_name(const std::string& name);

struct ReinforceConfig {
  double entropy_coef = 0.01;
  double learning_rate = 1e-2;
  RewardTransform reward_transform = RewardTransform::neg_perplexity;
  BaselineMode baseline = BaselineMode::student_mean;
  double ema_decay = 0.9;
  int students_per_teacher = 12;
  int budget = 10;

  void validate() const;
};

double apply_reward_transform(RewardTransform t, double perplexity);

// Scores the whole pool; numerically stable log-softmax plus entropy.
PolicyOutput score_pool(const TeacherPolicy& policy, const Matrix& pool_embeddings);

// Gumbel Top-K: adds i.i.d. Gumbel(0,1) noise to every log-probability and
// keeps the K largest, which samples K indices without replacement with
// Plackett-Luce order statistics.
Lesson sample_lesson(const PolicyOutput& output, int budget, Rng& rng);

// Sum of the elements' log-softmax values.
double subset_logprob(const PolicyOutput& output, std::span<const int> indices);

struct UpdateReport {
  double loss = 0.0;
  double mean_advantage = 0.0;
  double entropy = 0.0;
  double grad_norm = 0.0;
};

// One REINFORCE step with entropy regularization:
//   loss = -(1/N) sum_n (r_n - b) * log_prob(lesson_n) - beta * H(policy).
// The lesson log-probability is recomputed through the differentiable graph
// (scores -> log-softmax -> gather -> sum) so gradients flow to the policy.
// With BaselineMode::ema, `ema_state` carries the running baseline across
// episodes (uninitialized = NaN on first call).
UpdateReport reinforce_update(TeacherPolicy& policy, const Matrix& pool_embeddings,
                              std::span<const Lesson> lessons, std::span<const double> rewards,
                              const PolicyOutput& output, const ReinforceConfig& cfg,
                              double* ema_state = nullptr);

// Brute-force enumeration of exact without-replacement subset probabilities
// under the Plackett-Luce model: P(subset) = sum over orderings of
// prod_k p_{i_k} / (1 - mass already drawn). Exponential in K; the test
// oracle for the Gumbel Top-K sampler and for measuring the gap between the
// surrogate log-probability and the true subset law.
struct SubsetProb {
  std::vector<int> indices;  // sorted
  double prob = 0.0;
};
std::vector<SubsetProb> plackett_luce_subset_probs(const Vector& probs, int k);

// Total-variation distance between empirical Gumbel Top-K frequencies and the
// enumeration, over `draws` samples.
double gumbel_topk_tv_distance(const PolicyOutput& output, int k, int draws, Rng& rng);

}  // namespace ilm
