#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>

#include "ilm/corpus.hpp"
#include "ilm/lm.hpp"
#include "ilm/metrics.hpp"
#include "ilm/teacher.hpp"

namespace ilm {

struct LoopConfig {
  TaskSpec task = TaskSpec::task1_default();
  LMConfig lm;                 // vocab_size resolved from the bundle
  ReinforceConfig reinforce;
  PretrainOptions pretrain;
  int student_steps = -1;      // -1: task default (400 domains / 300 structures)
  int episodes = -1;           // -1: task default (40 domains / 100 structures)
  EmbeddingMode embedding_mode = EmbeddingMode::avg_last_hidden;
  std::uint64_t master_seed = 1;
  int jobs = 0;                // student-worker cap; 0 = hardware concurrency
  bool wall_clock_in_csv = false;  // off: seconds column is 0 so reruns are byte-identical

  // Fills vocab_size and the per-task defaults from the bundle's spec.
  LoopConfig resolved(const DatasetBundle& bundle) const;
  void validate_for(const DatasetBundle& bundle) const;
};

struct StudentOutcome {
  Lesson lesson;
  double perplexity = 0.0;
  double reward = 0.0;
  double frac_from_exam = 0.0;
  double unigram = 0.0;
  double bigram = 0.0;
  double trigram = 0.0;
};

struct EpisodeRecord {
  int episode = 0;
  std::vector<StudentOutcome> students;
  double mean_perplexity = 0.0;
  double std_perplexity = 0.0;
  double mean_reward = 0.0;
  double mean_frac_from_exam = 0.0;
  double mean_unigram = 0.0;
  double mean_bigram = 0.0;
  double mean_trigram = 0.0;
  double entropy = 0.0;  // policy entropy when the lessons were sampled
  double teacher_loss = 0.0;
  double grad_norm = 0.0;
  double seconds = 0.0;  // wall clock; not part of the deterministic trace
};

// One full loop iteration: score the pool, sample N lessons, train N fresh
// students, examine them, and apply one policy update. Deterministic in
// (cfg, bundle, episode_index) regardless of the parallel schedule.
// `forced_lessons` is a test hook that bypasses sampling.
EpisodeRecord run_episode(const LoopConfig& cfg, const CausalLM& teacher, TeacherPolicy& policy,
                          const DatasetBundle& bundle, const Matrix& pool_embeddings,
                          int episode_index, double* ema_state,
                          const std::vector<std::vector<int>>* forced_lessons = nullptr);

struct RunSinks {
  // Called after each episode; returning false aborts the run (the trace so
  // far is preserved).
  std::function<bool(const EpisodeRecord&)> on_episode;
};

struct RunResult {
  std::vector<EpisodeRecord> trace;
  TeacherPolicy policy;
  CausalLM teacher;
  bool completed = false;
  int pretrain_steps = 0;
  bool teacher_converged = false;
};

// Pretrains the teacher LM on bundle.pretrain, caches pool embeddings, and
// runs cfg.episodes episodes.
RunResult run_training(const LoopConfig& cfg, const DatasetBundle& bundle,
                       const RunSinks& sinks = {});

enum class BaselineKind { oracle, random_pick, worst_case };
const char* baseline_kind_name(BaselineKind k);

struct BaselineReport {
  BaselineKind kind = BaselineKind::random_pick;
  std::uint64_t seed = 0;
  int runs = 0;
  double mean_perplexity = 0.0, std_perplexity = 0.0;
  double mean_frac_from_exam = 0.0, std_frac_from_exam = 0.0;
  double mean_unigram = 0.0, std_unigram = 0.0;
  double mean_bigram = 0.0, std_bigram = 0.0;
  double mean_trigram = 0.0, std_trigram = 0.0;
};

// Uniformly samples K eligible pool sentences per run (oracle: exam category;
// worst case: its complement; random: any), trains a fresh student, and
// examines it. Mirrors the reporting shape of the training episodes.
BaselineReport run_baseline(BaselineKind kind, const LoopConfig& cfg, const DatasetBundle& bundle,
                            int runs_per_seed = 5);

// Metrics CSV: per-student rows (student = 0..N-1) plus one aggregate row per
// episode (student = -1), fixed column order.
std::string metrics_csv_header();
void append_metrics_rows(std::ostream& out, const EpisodeRecord& rec, bool wall_clock_in_csv);

// Runs fn(0..n-1) on up to `jobs` workers; exceptions are rethrown on the
// caller thread. Results must be written to per-index slots.
void parallel_for(int n, int jobs, const std::function<void(int)>& fn);

}  // namespace ilm
