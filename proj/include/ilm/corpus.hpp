#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace ilm {

enum class TaskKind { different_domains, different_structures };

enum class Category { vocab_a, vocab_b, single, double_rep };

const char* category_name(Category c);
Category category_from_name(const std::string& name);
const char* task_name(TaskKind t);
TaskKind task_from_name(const std::string& name);

// Content tokens first (dense ids 0..n-1), then BOS, EOS, PAD. The id
// assignment is a pure function of the token list, so it is stable across
// save/load.
struct Vocab {
  std::vector<std::string> tokens;

  int size() const { return static_cast<int>(tokens.size()) + 3; }
  int num_content() const { return static_cast<int>(tokens.size()); }
  int bos_id() const { return num_content(); }
  int eos_id() const { return num_content() + 1; }
  int pad_id() const { return num_content() + 2; }
  // -1 when the symbol is unknown.
  int id_of(const std::string& symbol) const;
  const std::string& symbol_of(int id) const;
};

struct SetSizes {
  int pretrain = 100;
  int pool = 100;
  int exam = 10;
};

struct TaskSpec {
  TaskKind task = TaskKind::different_domains;
  std::vector<std::string> vocab_a;
  std::vector<std::string> vocab_b;  // empty for different_structures
  int sentence_len_min = 10;
  int sentence_len_max = 10;
  double pool_mix = 0.5;  // fraction of exam-category sentences in pool and pretrain
  SetSizes set_sizes;
  Category exam_category = Category::vocab_a;

  void validate() const;  // throws InvalidSpec
  Vocab vocab() const;
  Category complement_category() const;

  static TaskSpec task1_default();
  static TaskSpec task2_default();
};

struct Sentence {
  std::vector<int> ids;  // content-token ids only
  Category category;

  bool operator==(const Sentence& other) const = default;
};

struct DatasetBundle {
  TaskSpec spec;
  std::uint64_t seed = 0;
  std::vector<Sentence> pretrain;
  std::vector<Sentence> pool;
  std::vector<Sentence> exam;

  void check_invariants() const;  // throws InvariantViolation
};

bool operator==(const TaskSpec& a, const TaskSpec& b);
bool operator==(const DatasetBundle& a, const DatasetBundle& b);

// Classifies a content-token sequence under the spec's task. Throws
// Uncategorizable for sequences that fit no category (possible for loaded
// files, never for generated data).
Category category_of(std::span<const int> ids, const TaskSpec& spec);

// Deterministic in (spec, seed). Sets are pairwise disjoint, sentences unique,
// pool/pretrain category counts follow pool_mix, exam is all exam-category.
DatasetBundle generate_dataset(const TaskSpec& spec, std::uint64_t seed);

// Directory layout: spec.json, pretrain.txt, pool.txt, exam.txt (UTF-8, one
// sentence per line, single-space separated, newline-terminated).
void save_bundle(const DatasetBundle& bundle, const std::filesystem::path& dir);
DatasetBundle load_bundle(const std::filesystem::path& dir);

// FNV-1a over the canonical text serialization; recorded in run manifests.
std::uint64_t bundle_hash(const DatasetBundle& bundle);

}  // namespace ilm
