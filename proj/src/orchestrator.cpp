#include "ilm/orchestrator.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <ostream>
#include <thread>

#include "ilm/errors.hpp"

namespace ilm {

const char* baseline_kind_name(BaselineKind k) {
  switch (k) {
    case BaselineKind::oracle: return "oracle";
    case BaselineKind::random_pick: return "random";
    case BaselineKind::worst_case: return "worst_case";
  }
  return "?";
}

LoopConfig LoopConfig::resolved(const DatasetBundle& bundle) const {
  LoopConfig out = *this;
  out.task = bundle.spec;
  out.lm.vocab_size = bundle.spec.vocab().size();
  const bool domains = bundle.spec.task == TaskKind::different_domains;
  if (out.student_steps < 0) out.student_steps = domains ? 400 : 300;
  if (out.episodes < 0) out.episodes = domains ? 40 : 100;
  if (out.jobs <= 0)
    out.jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  return out;
}

void LoopConfig::validate_for(const DatasetBundle& bundle) const {
  const LoopConfig r = resolved(bundle);
  r.lm.validate();
  r.reinforce.validate();
  if (r.episodes < 1) fail(Errc::invalid_config, "episodes must be >= 1");
  if (r.student_steps < 0) fail(Errc::invalid_config, "student_steps must be >= 0");
  if (r.reinforce.budget > static_cast<int>(bundle.pool.size()))
    fail(Errc::budget_exceeds_pool, "budget " + std::to_string(r.reinforce.budget) +
                                        " exceeds pool of " + std::to_string(bundle.pool.size()));
}

void parallel_for(int n, int jobs, const std::function<void(int)>& fn) {
  if (n <= 0) return;
  const int workers = std::min(std::max(jobs, 1), n);
  if (workers == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto body = [&] {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) pool.emplace_back(body);
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

namespace {

std::vector<Sentence> lesson_sentences(const DatasetBundle& bundle, std::span<const int> indices) {
  std::vector<Sentence> out;
  out.reserve(indices.size());
  for (int i : indices) out.push_back(bundle.pool[static_cast<std::size_t>(i)]);
  return out;
}

// Trains one fresh student on the given pool indices and sits the exam.
StudentOutcome evaluate_lesson(const LoopConfig& cfg, const DatasetBundle& bundle, Lesson lesson,
                               std::uint64_t init_seed, std::uint64_t train_seed) {
  StudentOutcome out;
  out.lesson = std::move(lesson);
  const auto sentences = lesson_sentences(bundle, out.lesson.indices);
  CausalLM student(cfg.lm, init_seed);
  train_lm(student, sentences, cfg.student_steps, train_seed);
  out.perplexity = perplexity(student, bundle.exam);
  out.reward = apply_reward_transform(cfg.reinforce.reward_transform, out.perplexity);
  out.frac_from_exam = fraction_from_exam(out.lesson.indices, bundle);
  out.unigram = ngram_overlap(sentences, bundle.exam, 1);
  out.bigram = ngram_overlap(sentences, bundle.exam, 2);
  out.trigram = ngram_overlap(sentences, bundle.exam, 3);
  return out;
}

void fill_aggregates(EpisodeRecord& rec) {
  const double n = static_cast<double>(rec.students.size());
  double sum_ppl = 0.0, sum_ppl2 = 0.0;
  for (const auto& s : rec.students) {
    sum_ppl += s.perplexity;
    sum_ppl2 += s.perplexity * s.perplexity;
    rec.mean_reward += s.reward;
    rec.mean_frac_from_exam += s.frac_from_exam;
    rec.mean_unigram += s.unigram;
    rec.mean_bigram += s.bigram;
    rec.mean_trigram += s.trigram;
  }
  rec.mean_perplexity = sum_ppl / n;
  rec.std_perplexity = std::sqrt(std::max(0.0, sum_ppl2 / n - rec.mean_perplexity * rec.mean_perplexity));
  rec.mean_reward /= n;
  rec.mean_frac_from_exam /= n;
  rec.mean_unigram /= n;
  rec.mean_bigram /= n;
  rec.mean_trigram /= n;
}

}  // namespace

EpisodeRecord run_episode(const LoopConfig& cfg, const CausalLM& teacher, TeacherPolicy& policy,
                          const DatasetBundle& bundle, const Matrix& pool_embeddings,
                          int episode_index, double* ema_state,
                          const std::vector<std::vector<int>>* forced_lessons) {
  (void)teacher;  // embeddings are precomputed; the frozen model itself is not needed here
  const auto t0 = std::chrono::steady_clock::now();
  const int n_students = cfg.reinforce.students_per_teacher;
  const PolicyOutput output = score_pool(policy, pool_embeddings);

  EpisodeRecord rec;
  rec.episode = episode_index;
  rec.entropy = output.entropy;
  rec.students.resize(static_cast<std::size_t>(n_students));

  const auto ep = static_cast<std::uint64_t>(episode_index);
  parallel_for(n_students, cfg.jobs, [&](int n) {
    const auto sn = static_cast<std::uint64_t>(n);
    Lesson lesson;
    if (forced_lessons != nullptr) {
      lesson.indices = (*forced_lessons)[static_cast<std::size_t>(n)];
      lesson.log_prob = subset_logprob(output, lesson.indices);
    } else {
      Rng gumbel_rng(derive_seed(cfg.master_seed, ep, sn, "gumbel"));
      lesson = sample_lesson(output, cfg.reinforce.budget, gumbel_rng);
    }
    rec.students[static_cast<std::size_t>(n)] =
        evaluate_lesson(cfg, bundle, std::move(lesson),
                        derive_seed(cfg.master_seed, ep, sn, "student-init"),
                        derive_seed(cfg.master_seed, ep, sn, "student-train"));
  });

  std::vector<Lesson> lessons;
  std::vector<double> rewards;
  lessons.reserve(rec.students.size());
  rewards.reserve(rec.students.size());
  for (const auto& s : rec.students) {
    lessons.push_back(s.lesson);
    rewards.push_back(s.reward);
  }
  const UpdateReport update =
      reinforce_update(policy, pool_embeddings, lessons, rewards, output, cfg.reinforce, ema_state);
  rec.teacher_loss = update.loss;
  rec.grad_norm = update.grad_norm;
  fill_aggregates(rec);
  rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

RunResult run_training(const LoopConfig& raw_cfg, const DatasetBundle& bundle, const RunSinks& sinks) {
  raw_cfg.validate_for(bundle);
  const LoopConfig cfg = raw_cfg.resolved(bundle);

  PretrainResult pre = pretrain_teacher(cfg.lm, bundle.pretrain,
                                        derive_seed(cfg.master_seed, 0, 0, "teacher-pretrain"),
                                        cfg.pretrain);
  const Matrix pool_emb = embed_sentences(pre.model, bundle.pool, cfg.embedding_mode);

  TeacherPolicy policy(cfg.lm.embed_dim);
  double ema_state = std::nan("");

  std::vector<EpisodeRecord> trace;
  trace.reserve(static_cast<std::size_t>(cfg.episodes));
  bool completed = true;
  for (int ep = 0; ep < cfg.episodes; ++ep) {
    trace.push_back(run_episode(cfg, pre.model, policy, bundle, pool_emb, ep, &ema_state));
    if (sinks.on_episode && !sinks.on_episode(trace.back())) {
      completed = false;
      break;
    }
  }
  return RunResult{std::move(trace), std::move(policy), std::move(pre.model), completed, pre.steps,
                   pre.converged};
}

BaselineReport run_baseline(BaselineKind kind, const LoopConfig& raw_cfg, const DatasetBundle& bundle,
                            int runs_per_seed) {
  raw_cfg.validate_for(bundle);
  const LoopConfig cfg = raw_cfg.resolved(bundle);
  if (runs_per_seed < 1) fail(Errc::invalid_config, "runs_per_seed must be >= 1");

  std::vector<int> eligible;
  for (std::size_t i = 0; i < bundle.pool.size(); ++i) {
    const bool is_exam_cat = bundle.pool[i].category == bundle.spec.exam_category;
    if (kind == BaselineKind::random_pick || (kind == BaselineKind::oracle && is_exam_cat) ||
        (kind == BaselineKind::worst_case && !is_exam_cat))
      eligible.push_back(static_cast<int>(i));
  }
  if (static_cast<int>(eligible.size()) < cfg.reinforce.budget)
    fail(Errc::insufficient_category,
         std::string(baseline_kind_name(kind)) + ": only " + std::to_string(eligible.size()) +
             " eligible sentences for budget " + std::to_string(cfg.reinforce.budget));

  const auto kind_tag = static_cast<std::uint64_t>(kind);
  std::vector<StudentOutcome> outcomes(static_cast<std::size_t>(runs_per_seed));
  parallel_for(runs_per_seed, cfg.jobs, [&](int rep) {
    const auto r = static_cast<std::uint64_t>(rep);
    Rng select_rng(derive_seed(cfg.master_seed, kind_tag, r, "baseline-select"));
    const auto picks =
        select_rng.sample_without_replacement(static_cast<int>(eligible.size()), cfg.reinforce.budget);
    Lesson lesson;
    for (int p : picks) lesson.indices.push_back(eligible[static_cast<std::size_t>(p)]);
    std::sort(lesson.indices.begin(), lesson.indices.end());
    outcomes[static_cast<std::size_t>(rep)] =
        evaluate_lesson(cfg, bundle, std::move(lesson),
                        derive_seed(cfg.master_seed, kind_tag, r, "baseline-init"),
                        derive_seed(cfg.master_seed, kind_tag, r, "baseline-train"));
  });

  auto mean_std = [&](auto getter) {
    double m = 0.0, m2 = 0.0;
    for (const auto& o : outcomes) {
      const double v = getter(o);
      m += v;
      m2 += v * v;
    }
    m /= runs_per_seed;
    return std::pair{m, std::sqrt(std::max(0.0, m2 / runs_per_seed - m * m))};
  };

  BaselineReport report;
  report.kind = kind;
  report.seed = cfg.master_seed;
  report.runs = runs_per_seed;
  std::tie(report.mean_perplexity, report.std_perplexity) =
      mean_std([](const StudentOutcome& o) { return o.perplexity; });
  std::tie(report.mean_frac_from_exam, report.std_frac_from_exam) =
      mean_std([](const StudentOutcome& o) { return o.frac_from_exam; });
  std::tie(report.mean_unigram, report.std_unigram) =
      mean_std([](const StudentOutcome& o) { return o.unigram; });
  std::tie(report.mean_bigram, report.std_bigram) =
      mean_std([](const StudentOutcome& o) { return o.bigram; });
  std::tie(report.mean_trigram, report.std_trigram) =
      mean_std([](const StudentOutcome& o) { return o.trigram; });
  return report;
}

std::string metrics_csv_header() {
  return "episode,student,reward,perplexity,frac_from_exam,unigram,bigram,trigram,entropy,"
         "teacher_loss,grad_norm,seconds";
}

namespace {

void write_row(std::ostream& out, int episode, int student, double reward, double ppl, double frac,
               double uni, double bi, double tri, double entropy, double teacher_loss,
               double grad_norm, double seconds) {
  out << episode << ',' << student << ',' << format_double(reward) << ',' << format_double(ppl)
      << ',' << format_double(frac) << ',' << format_double(uni) << ',' << format_double(bi) << ','
      << format_double(tri) << ',' << format_double(entropy) << ',' << format_double(teacher_loss)
      << ',' << format_double(grad_norm) << ',' << format_double(seconds) << '\n';
}

}  // namespace

void append_metrics_rows(std::ostream& out, const EpisodeRecord& rec, bool wall_clock_in_csv) {
  const double secs = wall_clock_in_csv ? rec.seconds : 0.0;
  for (std::size_t n = 0; n < rec.students.size(); ++n) {
    const StudentOutcome& s = rec.students[n];
    write_row(out, rec.episode, static_cast<int>(n), s.reward, s.perplexity, s.frac_from_exam,
              s.unigram, s.bigram, s.trigram, rec.entropy, rec.teacher_loss, rec.grad_norm, secs);
  }
  write_row(out, rec.episode, -1, rec.mean_reward, rec.mean_perplexity, rec.mean_frac_from_exam,
            rec.mean_unigram, rec.mean_bigram, rec.mean_trigram, rec.entropy, rec.teacher_loss,
            rec.grad_norm, secs);
}

}  // namespace ilm
