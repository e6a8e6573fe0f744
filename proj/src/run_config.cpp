#include "ilm/run_config.hpp"

#include <fstream>
#include <set>

#include "ilm/errors.hpp"
#include "nlohmann/json.hpp"

namespace ilm {

using json = nlohmann::ordered_json;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& origin) {
  if (!j.is_object()) fail(Errc::parse_error, origin + ": expected an object");
  for (const auto& [key, _] : j.items())
    if (!known.contains(key)) fail(Errc::parse_error, origin + ": unknown key '" + key + "'");
}

template <typename T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

json task_to_json(const TaskSpec& t) {
  json j;
  j["kind"] = task_name(t.task);
  j["vocab_a"] = t.vocab_a;
  j["vocab_b"] = t.vocab_b;
  j["sentence_len"] = {{"min", t.sentence_len_min}, {"max", t.sentence_len_max}};
  j["pool_mix"] = t.pool_mix;
  j["set_sizes"] = {{"pretrain", t.set_sizes.pretrain}, {"pool", t.set_sizes.pool}, {"exam", t.set_sizes.exam}};
  j["exam_category"] = category_name(t.exam_category);
  return j;
}

void task_from_json(const json& j, TaskSpec& t, const std::string& origin) {
  reject_unknown(j, {"kind", "vocab_a", "vocab_b", "sentence_len", "pool_mix", "set_sizes",
                     "exam_category"},
                 origin + ".task");
  if (j.contains("kind")) {
    t = task_from_name(j.at("kind").get<std::string>()) == TaskKind::different_domains
            ? TaskSpec::task1_default()
            : TaskSpec::task2_default();
  }
  maybe(j, "vocab_a", t.vocab_a);
  maybe(j, "vocab_b", t.vocab_b);
  if (j.contains("sentence_len")) {
    reject_unknown(j.at("sentence_len"), {"min", "max"}, origin + ".task.sentence_len");
    maybe(j.at("sentence_len"), "min", t.sentence_len_min);
    maybe(j.at("sentence_len"), "max", t.sentence_len_max);
  }
  maybe(j, "pool_mix", t.pool_mix);
  if (j.contains("set_sizes")) {
    reject_unknown(j.at("set_sizes"), {"pretrain", "pool", "exam"}, origin + ".task.set_sizes");
    maybe(j.at("set_sizes"), "pretrain", t.set_sizes.pretrain);
    maybe(j.at("set_sizes"), "pool", t.set_sizes.pool);
    maybe(j.at("set_sizes"), "exam", t.set_sizes.exam);
  }
  if (j.contains("exam_category"))
    t.exam_category = category_from_name(j.at("exam_category").get<std::string>());
}

}  // namespace

void apply_config_json(LoopConfig& cfg, const std::string& json_text, const std::string& origin) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    fail(Errc::parse_error, origin + ": " + e.what());
  }
  reject_unknown(j, {"task", "lm", "reinforce", "pretrain", "student_steps", "episodes",
                     "embedding_mode", "master_seed", "jobs", "wall_clock_in_csv"},
                 origin);
  try {
    if (j.contains("task")) task_from_json(j.at("task"), cfg.task, origin);
    if (j.contains("lm")) {
      const json& l = j.at("lm");
      reject_unknown(l, {"embed_dim", "num_layers", "num_heads", "ffn_dim", "max_seq_len",
                         "dropout_rate", "learning_rate", "batch_size"},
                     origin + ".lm");
      maybe(l, "embed_dim", cfg.lm.embed_dim);
      maybe(l, "num_layers", cfg.lm.num_layers);
      maybe(l, "num_heads", cfg.lm.num_heads);
      maybe(l, "ffn_dim", cfg.lm.ffn_dim);
      maybe(l, "max_seq_len", cfg.lm.max_seq_len);
      maybe(l, "dropout_rate", cfg.lm.dropout_rate);
      maybe(l, "learning_rate", cfg.lm.learning_rate);
      maybe(l, "batch_size", cfg.lm.batch_size);
    }
    if (j.contains("reinforce")) {
      const json& r = j.at("reinforce");
      reject_unknown(r, {"entropy_coef", "learning_rate", "reward_transform", "baseline",
                         "ema_decay", "students_per_teacher", "budget"},
                     origin + ".reinforce");
      maybe(r, "entropy_coef", cfg.reinforce.entropy_coef);
      maybe(r, "learning_rate", cfg.reinforce.learning_rate);
      if (r.contains("reward_transform"))
        cfg.reinforce.reward_transform =
            reward_transform_from_name(r.at("reward_transform").get<std::string>());
      if (r.contains("baseline"))
        cfg.reinforce.baseline = baseline_mode_from_name(r.at("baseline").get<std::string>());
      maybe(r, "ema_decay", cfg.reinforce.ema_decay);
      maybe(r, "students_per_teacher", cfg.reinforce.students_per_teacher);
      maybe(r, "budget", cfg.reinforce.budget);
    }
    if (j.contains("pretrain")) {
      const json& p = j.at("pretrain");
      reject_unknown(p, {"window", "tolerance", "step_cap"}, origin + ".pretrain");
      maybe(p, "window", cfg.pretrain.window);
      maybe(p, "tolerance", cfg.pretrain.tolerance);
      maybe(p, "step_cap", cfg.pretrain.step_cap);
    }
    maybe(j, "student_steps", cfg.student_steps);
    maybe(j, "episodes", cfg.episodes);
    if (j.contains("embedding_mode"))
      cfg.embedding_mode = embedding_mode_from_name(j.at("embedding_mode").get<std::string>());
    maybe(j, "master_seed", cfg.master_seed);
    maybe(j, "jobs", cfg.jobs);
    maybe(j, "wall_clock_in_csv", cfg.wall_clock_in_csv);
  } catch (const json::exception& e) {
    fail(Errc::parse_error, origin + ": " + e.what());
  }
}

LoopConfig load_loop_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::io_error, "cannot open " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  LoopConfig cfg;
  apply_config_json(cfg, text, path.string());
  return cfg;
}

std::string loop_config_to_json(const LoopConfig& cfg) {
  json j;
  j["task"] = task_to_json(cfg.task);
  j["lm"] = {{"embed_dim", cfg.lm.embed_dim},
             {"num_layers", cfg.lm.num_layers},
             {"num_heads", cfg.lm.num_heads},
             {"ffn_dim", cfg.lm.ffn_dim},
             {"max_seq_len", cfg.lm.max_seq_len},
             {"dropout_rate", cfg.lm.dropout_rate},
             {"learning_rate", cfg.lm.learning_rate},
             {"batch_size", cfg.lm.batch_size}};
  j["reinforce"] = {{"entropy_coef", cfg.reinforce.entropy_coef},
                    {"learning_rate", cfg.reinforce.learning_rate},
                    {"reward_transform", reward_transform_name(cfg.reinforce.reward_transform)},
                    {"baseline", baseline_mode_name(cfg.reinforce.baseline)},
                    {"ema_decay", cfg.reinforce.ema_decay},
                    {"students_per_teacher", cfg.reinforce.students_per_teacher},
                    {"budget", cfg.reinforce.budget}};
  j["pretrain"] = {{"window", cfg.pretrain.window},
                   {"tolerance", cfg.pretrain.tolerance},
                   {"step_cap", cfg.pretrain.step_cap}};
  j["student_steps"] = cfg.student_steps;
  j["episodes"] = cfg.episodes;
  j["embedding_mode"] = embedding_mode_name(cfg.embedding_mode);
  j["master_seed"] = cfg.master_seed;
  j["jobs"] = cfg.jobs;
  j["wall_clock_in_csv"] = cfg.wall_clock_in_csv;
  return j.dump(2);
}

void write_manifest(const std::filesystem::path& path, const LoopConfig& resolved,
                    const DatasetBundle& bundle, bool complete, int episodes_done,
                    double total_seconds) {
  json j;
  j["version"] = kVersionString;
  j["config"] = json::parse(loop_config_to_json(resolved));
  j["dataset_hash"] = bundle_hash(bundle);
  j["dataset_seed"] = bundle.seed;
  j["complete"] = complete;
  j["episodes_done"] = episodes_done;
  j["total_seconds"] = total_seconds;
  std::ofstream out(path);
  if (!out) fail(Errc::io_error, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace ilm
