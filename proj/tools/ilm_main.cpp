// Command-line surface: dataset generation, teacher pretraining, baseline
// tables, teacher training runs, figure-data emission, and property checks.
//
// Exit codes: 0 success, 2 usage, 3 invariant violation, 4 IO.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "ilm/checkpoint.hpp"
#include "ilm/errors.hpp"
#include "ilm/orchestrator.hpp"
#include "ilm/plot.hpp"
#include "ilm/run_config.hpp"
#include "nlohmann/json.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitInvariant = 3;
constexpr int kExitIo = 4;

int exit_code_for(const ilm::Error& e) {
  switch (e.code()) {
    case ilm::Errc::usage_error: return kExitUsage;
    case ilm::Errc::io_error:
    case ilm::Errc::parse_error: return kExitIo;
    default: return kExitInvariant;
  }
}

struct TrainFlags {
  std::string bundle_dir;
  std::string out_dir;
  std::string config_path;
  int students = -1;
  int episodes = -1;
  int steps = -1;
  std::string embedding;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int jobs = -1;
  bool wall_clock_csv = false;
};

ilm::LoopConfig resolve_config(const TrainFlags& f) {
  ilm::LoopConfig cfg;
  if (!f.config_path.empty()) cfg = ilm::load_loop_config(f.config_path);
  if (f.students > 0) cfg.reinforce.students_per_teacher = f.students;
  if (f.episodes > 0) cfg.episodes = f.episodes;
  if (f.steps >= 0) cfg.student_steps = f.steps;
  if (!f.embedding.empty()) cfg.embedding_mode = ilm::embedding_mode_from_name(f.embedding);
  if (f.seed_set) cfg.master_seed = f.seed;
  if (f.jobs > 0) cfg.jobs = f.jobs;
  if (f.wall_clock_csv) cfg.wall_clock_in_csv = true;
  return cfg;
}

void print_bundle_summary(const ilm::DatasetBundle& bundle) {
  auto count = [](const std::vector<ilm::Sentence>& set, ilm::Category c) {
    return std::count_if(set.begin(), set.end(),
                         [&](const ilm::Sentence& s) { return s.category == c; });
  };
  const auto cats = bundle.spec.task == ilm::TaskKind::different_domains
                        ? std::pair{ilm::Category::vocab_a, ilm::Category::vocab_b}
                        : std::pair{ilm::Category::single, ilm::Category::double_rep};
  std::cout << "task: " << ilm::task_name(bundle.spec.task) << "\n";
  std::cout << "seed: " << bundle.seed << "\n";
  std::cout << "hash: " << ilm::bundle_hash(bundle) << "\n";
  for (const auto& [name, set] :
       {std::pair{"pretrain", &bundle.pretrain}, {"pool", &bundle.pool}, {"exam", &bundle.exam}}) {
    std::cout << name << ": " << set->size() << " sentences (" << ilm::category_name(cats.first)
              << " " << count(*set, cats.first) << ", " << ilm::category_name(cats.second) << " "
              << count(*set, cats.second) << ")\n";
  }
}

int cmd_gen_data(const std::string& task, std::uint64_t seed, const std::string& out_dir,
                 int pretrain_size, int pool_size, int exam_size, double pool_mix) {
  ilm::TaskSpec spec;
  if (task == "task1" || task == "different_domains") spec = ilm::TaskSpec::task1_default();
  else if (task == "task2" || task == "different_structures") spec = ilm::TaskSpec::task2_default();
  else ilm::fail(ilm::Errc::usage_error, "unknown task '" + task + "' (task1 or task2)");
  if (pretrain_size >= 0) spec.set_sizes.pretrain = pretrain_size;
  if (pool_size >= 0) spec.set_sizes.pool = pool_size;
  if (exam_size >= 0) spec.set_sizes.exam = exam_size;
  if (pool_mix >= 0.0) spec.pool_mix = pool_mix;

  const ilm::DatasetBundle bundle = ilm::generate_dataset(spec, seed);
  ilm::save_bundle(bundle, out_dir);
  print_bundle_summary(bundle);
  return kExitOk;
}

int cmd_pretrain_teacher(const TrainFlags& flags) {
  const ilm::DatasetBundle bundle = ilm::load_bundle(flags.bundle_dir);
  ilm::LoopConfig cfg = resolve_config(flags).resolved(bundle);
  fs::create_directories(flags.out_dir);

  const auto result = ilm::pretrain_teacher(
      cfg.lm, bundle.pretrain, ilm::derive_seed(cfg.master_seed, 0, 0, "teacher-pretrain"),
      cfg.pretrain);
  std::vector<const ilm::Parameter*> params;
  for (const auto& p : result.model.parameters()) params.push_back(&p);
  ilm::save_parameters(fs::path(flags.out_dir) / "teacher.json", params);

  ordered_json report;
  report["steps"] = result.steps;
  report["converged"] = result.converged;
  report["final_loss"] = result.trace.empty() ? 0.0 : result.trace.back();
  report["pretrain_perplexity"] = ilm::perplexity(result.model, bundle.pretrain);
  for (const auto mode :
       {ilm::EmbeddingMode::avg_word_embedding, ilm::EmbeddingMode::avg_last_hidden}) {
    const ilm::Matrix emb = ilm::embed_sentences(result.model, bundle.pool, mode);
    std::vector<ilm::Category> cats;
    for (const auto& s : bundle.pool) cats.push_back(s.category);
    const auto sep = ilm::embedding_separation(emb, cats);
    report[std::string("separation_") + ilm::embedding_mode_name(mode)] = {
        {"between_centroid_dist", sep.between_centroid_dist},
        {"mean_within_dist", sep.mean_within_dist},
        {"ratio", sep.ratio},
        {"degenerate_within", sep.degenerate_within}};
  }
  std::ofstream out(fs::path(flags.out_dir) / "teacher_report.json");
  out << report.dump(2) << '\n';
  std::cout << report.dump(2) << '\n';
  return kExitOk;
}

int cmd_train(const TrainFlags& flags) {
  const ilm::DatasetBundle bundle = ilm::load_bundle(flags.bundle_dir);
  const ilm::LoopConfig cfg = resolve_config(flags);
  cfg.validate_for(bundle);  // reject bad budget/config before any work
  const ilm::LoopConfig resolved = cfg.resolved(bundle);

  fs::create_directories(flags.out_dir);
  const fs::path csv_path = fs::path(flags.out_dir) / "metrics.csv";
  const fs::path manifest_path = fs::path(flags.out_dir) / "manifest.json";
  {
    std::ofstream config_out(fs::path(flags.out_dir) / "config.resolved.json");
    config_out << ilm::loop_config_to_json(resolved) << '\n';
  }
  ilm::write_manifest(manifest_path, resolved, bundle, false, 0, 0.0);

  std::ofstream csv(csv_path, std::ios::trunc);
  if (!csv) ilm::fail(ilm::Errc::io_error, "cannot write " + csv_path.string());
  csv << ilm::metrics_csv_header() << '\n';
  csv.flush();

  int episodes_done = 0;
  double total_seconds = 0.0;
  ilm::RunSinks sinks;
  sinks.on_episode = [&](const ilm::EpisodeRecord& rec) {
    ilm::append_metrics_rows(csv, rec, resolved.wall_clock_in_csv);
    csv.flush();
    ++episodes_done;
    total_seconds += rec.seconds;
    std::cerr << "episode " << rec.episode + 1 << "/" << resolved.episodes << " | ppl "
              << rec.mean_perplexity << " | frac " << rec.mean_frac_from_exam << " | entropy "
              << rec.entropy << " | " << rec.seconds << "s\n";
    return true;
  };

  const ilm::RunResult result = ilm::run_training(resolved, bundle, sinks);

  std::vector<const ilm::Parameter*> policy_params{&result.policy.weight, &result.policy.bias};
  ilm::save_parameters(fs::path(flags.out_dir) / "policy.json", policy_params);
  std::vector<const ilm::Parameter*> teacher_params;
  for (const auto& p : result.teacher.parameters()) teacher_params.push_back(&p);
  ilm::save_parameters(fs::path(flags.out_dir) / "teacher.json", teacher_params);

  ilm::write_manifest(manifest_path, resolved, bundle, result.completed, episodes_done,
                      total_seconds);
  return result.completed ? kExitOk : kExitInvariant;
}

int cmd_baselines(const TrainFlags& flags, const std::vector<std::uint64_t>& seeds, int runs) {
  if (seeds.empty()) ilm::fail(ilm::Errc::usage_error, "at least one --seeds value required");
  const ilm::DatasetBundle bundle = ilm::load_bundle(flags.bundle_dir);
  const ilm::LoopConfig base_cfg = resolve_config(flags);
  base_cfg.validate_for(bundle);
  fs::create_directories(flags.out_dir);

  const std::vector<ilm::BaselineKind> kinds{ilm::BaselineKind::oracle,
                                             ilm::BaselineKind::random_pick,
                                             ilm::BaselineKind::worst_case};
  ordered_json all = ordered_json::array();
  std::map<ilm::BaselineKind, std::vector<ilm::BaselineReport>> by_kind;
  for (const auto kind : kinds) {
    for (const auto seed : seeds) {
      ilm::LoopConfig cfg = base_cfg;
      cfg.master_seed = seed;
      const auto rep = ilm::run_baseline(kind, cfg, bundle, runs);
      by_kind[kind].push_back(rep);
      all.push_back({{"baseline", ilm::baseline_kind_name(kind)},
                     {"seed", seed},
                     {"runs", rep.runs},
                     {"perplexity", {{"mean", rep.mean_perplexity}, {"std", rep.std_perplexity}}},
                     {"frac_from_exam",
                      {{"mean", rep.mean_frac_from_exam}, {"std", rep.std_frac_from_exam}}},
                     {"unigram_overlap", {{"mean", rep.mean_unigram}, {"std", rep.std_unigram}}},
                     {"bigram_overlap", {{"mean", rep.mean_bigram}, {"std", rep.std_bigram}}},
                     {"trigram_overlap", {{"mean", rep.mean_trigram}, {"std", rep.std_trigram}}}});
    }
  }

  std::ofstream json_out(fs::path(flags.out_dir) / "baselines.json");
  json_out << all.dump(2) << '\n';

  auto row = [](const ilm::BaselineReport& r) {
    std::ostringstream ss;
    ss << "  seed " << r.seed << "  ppl " << r.mean_perplexity << " +- " << r.std_perplexity
       << "  frac " << r.mean_frac_from_exam << " +- " << r.std_frac_from_exam << "  1g "
       << r.mean_unigram << "  2g " << r.mean_bigram << "  3g " << r.mean_trigram;
    return ss.str();
  };
  for (const auto kind : kinds) {
    std::cout << ilm::baseline_kind_name(kind) << " (" << runs << " runs/seed)\n";
    const auto& reports = by_kind[kind];
    for (const auto& r : reports) std::cout << row(r) << "\n";
    const auto best = std::min_element(reports.begin(), reports.end(),
                                       [](const auto& a, const auto& b) {
                                         return a.mean_perplexity < b.mean_perplexity;
                                       });
    const auto worst = std::max_element(reports.begin(), reports.end(),
                                        [](const auto& a, const auto& b) {
                                          return a.mean_perplexity < b.mean_perplexity;
                                        });
    std::cout << "  best seed " << best->seed << " (ppl " << best->mean_perplexity
              << "), worst seed " << worst->seed << " (ppl " << worst->mean_perplexity << ")\n";
  }

  bool ordered = true;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    const auto& o = by_kind[ilm::BaselineKind::oracle][i];
    const auto& r = by_kind[ilm::BaselineKind::random_pick][i];
    const auto& w = by_kind[ilm::BaselineKind::worst_case][i];
    if (!(o.mean_perplexity < r.mean_perplexity && r.mean_perplexity < w.mean_perplexity))
      ordered = false;
  }
  std::cout << "ordering oracle < random < worst_case: " << (ordered ? "holds" : "VIOLATED")
            << " for all seeds\n";
  return kExitOk;
}

int cmd_plot(const std::vector<std::string>& csvs, const std::string& metric,
             const std::string& out, bool log_y) {
  std::vector<fs::path> paths(csvs.begin(), csvs.end());
  const auto stats = ilm::aggregate_metric(paths, metric);
  ilm::write_series_svg(out, stats, metric, log_y);
  fs::path agg = out;
  agg.replace_extension(".agg.csv");
  ilm::write_series_csv(agg, stats);
  std::cout << "wrote " << out << " and " << agg.string() << " (" << stats.mean.size()
            << " episodes)\n";
  return kExitOk;
}

// Property suites: sampler law vs the enumeration oracle, gradient checks for
// every catalog op, perplexity identities.
int cmd_verify() {
  bool ok = true;
  auto report = [&](const std::string& name, bool pass, const std::string& detail) {
    std::cout << (pass ? "[PASS] " : "[FAIL] ") << name;
    if (!detail.empty()) std::cout << " (" << detail << ")";
    std::cout << "\n";
    if (!pass) ok = false;
  };

  {
    ilm::Rng rng(20240901);
    double worst_tv = 0.0;
    for (int trial = 0; trial < 5; ++trial) {
      const int n = 3 + static_cast<int>(rng.below(3));
      const int k = 1 + static_cast<int>(rng.below(3));
      ilm::TeacherPolicy policy(2);
      ilm::Matrix emb(n, 2);
      for (int i = 0; i < n; ++i) {
        emb(i, 0) = rng.normal();
        emb(i, 1) = rng.normal();
      }
      policy.weight.value << 1.0, -0.5;
      const auto out = ilm::score_pool(policy, emb);
      worst_tv = std::max(worst_tv, ilm::gumbel_topk_tv_distance(out, std::min(k, n), 100000, rng));
    }
    report("gumbel-topk matches enumeration", worst_tv <= 0.01,
           "worst TV " + ilm::format_double(worst_tv));
  }

  {
    ilm::Rng rng(7);
    auto randm = [&](int r, int c) {
      ilm::Matrix m(r, c);
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) m(i, j) = rng.normal();
      return m;
    };
    struct Case {
      const char* name;
      ilm::GraphFn graph;
      std::vector<ilm::Parameter> params;
    };
    std::vector<Case> cases;
    cases.push_back({"affine", [](ilm::Tape& t, const std::vector<ilm::Var>& p) {
                       return ilm::mean_all(t, ilm::affine(t, p[0], p[1], p[2]));
                     },
                     {}});
    cases.back().params.emplace_back("x", randm(3, 4));
    cases.back().params.emplace_back("w", randm(4, 5));
    cases.back().params.emplace_back("b", randm(1, 5));
    cases.push_back({"layer_norm", [](ilm::Tape& t, const std::vector<ilm::Var>& p) {
                       return ilm::mean_all(t, ilm::layer_norm(t, p[0], p[1], p[2]));
                     },
                     {}});
    cases.back().params.emplace_back("x", randm(3, 6));
    cases.back().params.emplace_back("g", randm(1, 6));
    cases.back().params.emplace_back("s", randm(1, 6));
    cases.push_back({"gelu", [](ilm::Tape& t, const std::vector<ilm::Var>& p) {
                       return ilm::mean_all(t, ilm::gelu(t, p[0]));
                     },
                     {}});
    cases.back().params.emplace_back("x", randm(4, 4));
    cases.push_back({"softmax", [](ilm::Tape& t, const std::vector<ilm::Var>& p) {
                       return ilm::mean_all(t, ilm::hadamard(t, ilm::softmax_rows(t, p[0]), p[1]));
                     },
                     {}});
    cases.back().params.emplace_back("x", randm(3, 5));
    cases.back().params.emplace_back("w", randm(3, 5));
    cases.push_back({"attention", [](ilm::Tape& t, const std::vector<ilm::Var>& p) {
                       return ilm::mean_all(
                           t, ilm::causal_self_attention(t, p[0], p[1], p[2], 2,
                                                         {{0, 3}, {3, 2}}));
                     },
                     {}});
    cases.back().params.emplace_back("q", randm(5, 4));
    cases.back().params.emplace_back("k", randm(5, 4));
    cases.back().params.emplace_back("v", randm(5, 4));
    cases.push_back({"cross_entropy", [](ilm::Tape& t, const std::vector<ilm::Var>& p) {
                       return ilm::cross_entropy_mean(t, p[0], {1, 0, 2});
                     },
                     {}});
    cases.back().params.emplace_back("logits", randm(3, 4));
    cases.push_back({"embedding", [](ilm::Tape& t, const std::vector<ilm::Var>& p) {
                       return ilm::mean_all(t, ilm::embedding_lookup(t, p[0], {0, 2, 2, 1}));
                     },
                     {}});
    cases.back().params.emplace_back("table", randm(4, 3));
    cases.push_back({"mean_reduction", [](ilm::Tape& t, const std::vector<ilm::Var>& p) {
                       return ilm::mean_all(t, ilm::hadamard(t, p[0], p[0]));
                     },
                     {}});
    cases.back().params.emplace_back("w", randm(3, 3));

    for (auto& c : cases) {
      auto ptrs = ilm::param_ptrs(c.params);
      const auto rep = ilm::finite_diff_check(c.graph, ptrs);
      double worst = 0.0;
      for (const auto& e : rep.entries) worst = std::max(worst, e.max_rel_error);
      report(std::string("gradient ") + c.name, rep.passed,
             "max rel err " + ilm::format_double(worst));
    }
  }

  {
    ilm::Matrix uniform_logits = ilm::Matrix::Zero(7, 11);
    std::vector<int> targets(7, 3);
    const double ppl = ilm::perplexity_from_logits(uniform_logits, targets);
    report("uniform-model perplexity = vocab size", std::abs(ppl - 11.0) <= 1e-9,
           ilm::format_double(ppl));
    ilm::Matrix perfect = ilm::Matrix::Zero(5, 4);
    std::vector<int> t2(5, 2);
    const double ppl2 = ilm::perplexity_from_logprobs(perfect, t2);
    report("perfect-prediction perplexity = 1", ppl2 == 1.0, ilm::format_double(ppl2));
  }

  if (!ok) return kExitInvariant;
  std::cout << "all property suites passed\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"teacher-student curriculum-selection simulator for artificial languages"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate a dataset bundle");
  std::string gen_task = "task1";
  std::uint64_t gen_seed = 1;
  std::string gen_out;
  int gen_pretrain = -1, gen_pool = -1, gen_exam = -1;
  double gen_mix = -1.0;
  gen->add_option("--task", gen_task, "task1 (domains) or task2 (structures)")->capture_default_str();
  gen->add_option("--seed", gen_seed, "dataset seed")->capture_default_str();
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--pretrain-size", gen_pretrain, "pretrain set size (default 100, experiment default)");
  gen->add_option("--pool-size", gen_pool, "pool size (default 100, experiment default)");
  gen->add_option("--exam-size", gen_exam, "exam size (default 10, experiment default)");
  gen->add_option("--pool-mix", gen_mix,
                  "exam-category fraction of pool (default 0.5 task1 / 0.2 task2, experiment default)");

  auto add_train_flags = [](CLI::App* cmd, TrainFlags& f, bool with_out) {
    cmd->add_option("--bundle", f.bundle_dir, "dataset bundle directory")->required();
    if (with_out) cmd->add_option("--out", f.out_dir, "output directory")->required();
    cmd->add_option("--config", f.config_path, "JSON config file (flags override it)");
    cmd->add_option("--students", f.students,
                    "students per teacher (default 12, experiment default)");
    cmd->add_option("--episodes", f.episodes,
                    "episodes (default 40 task1 / 100 task2, experiment default)");
    cmd->add_option("--steps", f.steps,
                    "student training steps (default 400 task1 / 300 task2, experiment default)");
    cmd->add_option("--embedding", f.embedding,
                    "avg-word or avg-hidden (default avg-hidden, experiment default)");
    cmd->add_option("--seed", f.seed, "master seed (default 1, implementation choice)")
        ->each([&f](const std::string&) { f.seed_set = true; });
    cmd->add_option("--jobs", f.jobs, "max concurrent student workers (implementation choice)");
  };

  // pretrain-teacher
  TrainFlags pre_flags;
  auto* pre = app.add_subcommand("pretrain-teacher", "pretrain and freeze the teacher LM");
  add_train_flags(pre, pre_flags, true);

  // baselines
  TrainFlags base_flags;
  std::vector<std::uint64_t> base_seeds;
  int base_runs = 5;
  auto* base = app.add_subcommand("baselines", "oracle / random / worst-case selection baselines");
  add_train_flags(base, base_flags, true);
  base->add_option("--seeds", base_seeds, "master seeds, one report row each")->delimiter(',');
  base->add_option("--runs", base_runs, "runs per seed (default 5, experiment default)");

  // train
  TrainFlags train_flags;
  auto* train = app.add_subcommand("train", "run the full teacher-student training loop");
  add_train_flags(train, train_flags, true);
  train->add_flag("--wall-clock-csv", train_flags.wall_clock_csv,
                  "record real seconds in metrics.csv (breaks byte-identical reruns)");

  // plot
  std::vector<std::string> plot_csvs;
  std::string plot_metric = "frac_from_exam", plot_out;
  bool plot_log_y = false;
  auto* plot = app.add_subcommand("plot", "SVG curve of a metric across runs (mean +- std)");
  plot->add_option("--csv", plot_csvs, "metrics.csv files (one per seed)")->required();
  plot->add_option("--metric", plot_metric, "metric column to plot")->capture_default_str();
  plot->add_option("--out", plot_out, "output SVG path")->required();
  plot->add_flag("--log-y", plot_log_y, "log-scale the y axis");

  // verify
  app.add_subcommand("verify", "run the property suites (sampler law, gradients, perplexity)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (gen->parsed())
      return cmd_gen_data(gen_task, gen_seed, gen_out, gen_pretrain, gen_pool, gen_exam, gen_mix);
    if (pre->parsed()) return cmd_pretrain_teacher(pre_flags);
    if (base->parsed()) return cmd_baselines(base_flags, base_seeds, base_runs);
    if (train->parsed()) return cmd_train(train_flags);
    if (plot->parsed()) return cmd_plot(plot_csvs, plot_metric, plot_out, plot_log_y);
    return cmd_verify();
  } catch (const ilm::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvariant;
  }
}
