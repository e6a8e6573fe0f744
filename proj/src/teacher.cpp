#include "ilm/teacher.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "ilm/errors.hpp"

namespace ilm {

const char* reward_transform_name(RewardTransform t) {
  return t == RewardTransform::neg_perplexity ? "neg-perplexity" : "neg-log-perplexity";
}

RewardTransform reward_transform_from_name(const std::string& name) {
  if (name == "neg-perplexity") return RewardTransform::neg_perplexity;
  if (name == "neg-log-perplexity") return RewardTransform::neg_log_perplexity;
  fail(Errc::parse_error, "unknown reward transform '" + name + "'");
}

const char* baseline_mode_name(BaselineMode m) {
  return m == BaselineMode::student_mean ? "student-mean" : "ema";
}

BaselineMode baseline_mode_from_name(const std::string& name) {
  if (name == "student-mean") return BaselineMode::student_mean;
  if (name == "ema") return BaselineMode::ema;
  fail(Errc::parse_error, "unknown baseline mode '" + name + "'");
}

void ReinforceConfig::validate() const {
  if (entropy_coef < 0.0) fail(Errc::invalid_config, "entropy_coef must be >= 0");
  if (learning_rate <= 0.0) fail(Errc::invalid_config, "policy learning_rate must be positive");
  if (students_per_teacher < 1) fail(Errc::invalid_config, "students_per_teacher must be >= 1");
  if (budget < 1) fail(Errc::invalid_config, "budget must be >= 1");
  if (ema_decay < 0.0 || ema_decay >= 1.0) fail(Errc::invalid_config, "ema_decay outside [0,1)");
}

double apply_reward_transform(RewardTransform t, double perplexity) {
  return t == RewardTransform::neg_perplexity ? -perplexity : -std::log(perplexity);
}

PolicyOutput score_pool(const TeacherPolicy& policy, const Matrix& pool_embeddings) {
  if (pool_embeddings.cols() != policy.weight.value.rows())
    fail(Errc::dimension_mismatch, "pool embedding dim " + std::to_string(pool_embeddings.cols()) +
                                       " vs policy dim " + std::to_string(policy.weight.value.rows()));
  if (pool_embeddings.rows() == 0) fail(Errc::empty_batch, "empty pool");
  PolicyOutput out;
  out.scores = (pool_embeddings * policy.weight.value).col(0).array() + policy.bias.value(0, 0);
  const double mx = out.scores.maxCoeff();
  const double lse = mx + std::log((out.scores.array() - mx).exp().sum());
  out.log_probs = out.scores.array() - lse;
  out.entropy = -(out.log_probs.array().exp() * out.log_probs.array()).sum();
  return out;
}

Lesson sample_lesson(const PolicyOutput& output, int budget, Rng& rng) {
  const int n = static_cast<int>(output.log_probs.size());
  if (budget > n)
    fail(Errc::budget_exceeds_pool,
         "budget " + std::to_string(budget) + " exceeds pool of " + std::to_string(n));
  std::vector<std::pair<double, int>> keyed(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) keyed[static_cast<std::size_t>(i)] = {output.log_probs(i) + rng.gumbel(), i};
  std::partial_sort(keyed.begin(), keyed.begin() + budget, keyed.end(),
                    [](const auto& a, const auto& b) { return a.first > b.first; });
  Lesson lesson;
  lesson.indices.reserve(static_cast<std::size_t>(budget));
  for (int k = 0; k < budget; ++k) lesson.indices.push_back(keyed[static_cast<std::size_t>(k)].second);
  std::sort(lesson.indices.begin(), lesson.indices.end());
  lesson.log_prob = subset_logprob(output, lesson.indices);
  return lesson;
}

double subset_logprob(const PolicyOutput& output, std::span<const int> indices) {
  std::set<int> seen;
  double sum = 0.0;
  for (int i : indices) {
    if (i < 0 || i >= output.log_probs.size())
      fail(Errc::index_out_of_range, "subset index " + std::to_string(i));
    if (!seen.insert(i).second) fail(Errc::duplicate_index, "subset index " + std::to_string(i));
    sum += output.log_probs(i);
  }
  return sum;
}

UpdateReport reinforce_update(TeacherPolicy& policy, const Matrix& pool_embeddings,
                              std::span<const Lesson> lessons, std::span<const double> rewards,
                              const PolicyOutput& output, const ReinforceConfig& cfg,
                              double* ema_state) {
  cfg.validate();
  if (lessons.empty()) fail(Errc::empty_batch, "reinforce_update with no lessons");
  if (lessons.size() != rewards.size())
    fail(Errc::shape_mismatch, "lesson/reward count mismatch");

  const double n = static_cast<double>(lessons.size());
  double reward_mean = 0.0;
  for (double r : rewards) reward_mean += r;
  reward_mean /= n;

  double baseline = reward_mean;
  if (cfg.baseline == BaselineMode::ema && ema_state != nullptr) {
    baseline = std::isnan(*ema_state) ? reward_mean : *ema_state;
    *ema_state = std::isnan(*ema_state)
                     ? reward_mean
                     : cfg.ema_decay * (*ema_state) + (1.0 - cfg.ema_decay) * reward_mean;
  }

  std::vector<double> advantages(lessons.size());
  double mean_adv = 0.0;
  for (std::size_t i = 0; i < lessons.size(); ++i) {
    advantages[i] = rewards[i] - baseline;
    mean_adv += advantages[i];
  }
  mean_adv /= n;

  std::vector<Parameter*> params{&policy.weight, &policy.bias};
  for (Parameter* p : params) p->zero_grad();

  const GraphFn graph = [&](Tape& t, const std::vector<Var>& leaves) {
    const Var emb = t.input(pool_embeddings, false);
    const Var scores = affine(t, emb, leaves[0], leaves[1]);       // pool x 1
    const Var lp = log_softmax_rows(t, transpose(t, scores));      // 1 x pool
    Var loss{-1};
    for (std::size_t i = 0; i < lessons.size(); ++i) {
      const Var term =
          scale(t, sum_all(t, gather_cols(t, lp, lessons[i].indices)), -advantages[i] / n);
      loss = loss.valid() ? add(t, loss, term) : term;
    }
    // Entropy bonus: H = -sum p*log p, subtracted from the loss.
    const Var ent = scale(t, sum_all(t, hadamard(t, exp_elem(t, lp), lp)), 1.0);
    const Var ent_term = scale(t, ent, cfg.entropy_coef);  // = -beta * H
    return loss.valid() ? add(t, loss, ent_term) : ent_term;
  };

  UpdateReport report;
  report.loss = forward_backward(graph, params);
  report.mean_advantage = mean_adv;
  report.entropy = output.entropy;
  report.grad_norm = std::sqrt(policy.weight.grad.squaredNorm() + policy.bias.grad.squaredNorm());
  adam_step(params, AdamConfig{cfg.learning_rate});
  return report;
}

namespace {

void enumerate_orderings(const Vector& probs, std::vector<int>& chosen, double prefix_prob,
                         double remaining_mass, int k, std::map<std::vector<int>, double>& acc) {
  if (static_cast<int>(chosen.size()) == k) {
    std::vector<int> key = chosen;
    std::sort(key.begin(), key.end());
    acc[key] += prefix_prob;
    return;
  }
  for (int i = 0; i < probs.size(); ++i) {
    if (std::find(chosen.begin(), chosen.end(), i) != chosen.end()) continue;
    if (probs(i) <= 0.0) continue;
    chosen.push_back(i);
    enumerate_orderings(probs, chosen, prefix_prob * probs(i) / remaining_mass,
                        remaining_mass - probs(i), k, acc);
    chosen.pop_back();
  }
}

}  // namespace

std::vector<SubsetProb> plackett_luce_subset_probs(const Vector& probs, int k) {
  if (k < 1 || k > probs.size()) fail(Errc::budget_exceeds_pool, "k outside [1, n]");
  std::map<std::vector<int>, double> acc;
  std::vector<int> chosen;
  enumerate_orderings(probs, chosen, 1.0, 1.0, k, acc);
  std::vector<SubsetProb> out;
  out.reserve(acc.size());
  for (auto& [indices, prob] : acc) out.push_back(SubsetProb{indices, prob});
  return out;
}

double gumbel_topk_tv_distance(const PolicyOutput& output, int k, int draws, Rng& rng) {
  const Vector probs = output.log_probs.array().exp();
  const auto exact = plackett_luce_subset_probs(probs, k);
  std::map<std::vector<int>, double> freq;
  for (int d = 0; d < draws; ++d) {
    Lesson lesson = sample_lesson(output, k, rng);
    freq[lesson.indices] += 1.0 / draws;
  }
  double tv = 0.0;
  std::set<std::vector<int>> covered;
  for (const auto& e : exact) {
    const auto it = freq.find(e.indices);
    const double f = (it == freq.end()) ? 0.0 : it->second;
    tv += std::abs(e.prob - f);
    covered.insert(e.indices);
  }
  for (const auto& [indices, f] : freq)
    if (!covered.contains(indices)) tv += f;
  return 0.5 * tv;
}

}  // namespace ilm
