#include "doctest.h"
#include "ilm/corpus.hpp"
#include "ilm/errors.hpp"

#include <filesystem>
#include <fstream>
#include <set>

using namespace ilm;
namespace fs = std::filesystem;

TEST_SUITE_BEGIN("corpus");

namespace {

fs::path temp_dir(const char* tag) {
  const fs::path p = fs::temp_directory_path() / (std::string("ilm_corpus_") + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<int> ids_of(const TaskSpec& spec, const std::string& sentence) {
  const Vocab v = spec.vocab();
  std::vector<int> out;
  std::string tok;
  for (char c : sentence) {
    if (c == ' ') continue;
    out.push_back(v.id_of(std::string(1, c)));
  }
  return out;
}

}  // namespace

TEST_CASE("task1 bundle has the documented shape") {
  const TaskSpec spec = TaskSpec::task1_default();
  const DatasetBundle b = generate_dataset(spec, 6639);
  CHECK(b.pretrain.size() == 100);
  CHECK(b.pool.size() == 100);
  CHECK(b.exam.size() == 10);
  int pool_a = 0;
  for (const auto& s : b.pool) {
    CHECK(s.ids.size() == 10);
    if (s.category == Category::vocab_a) ++pool_a;
  }
  CHECK(pool_a == 50);
  for (const auto& s : b.exam) CHECK(s.category == Category::vocab_a);
}

TEST_CASE("task2 pool mix gives exactly 20/80") {
  const TaskSpec spec = TaskSpec::task2_default();
  const DatasetBundle b = generate_dataset(spec, 1);
  int singles = 0;
  for (const auto& s : b.pool) {
    CHECK(s.ids.size() % 2 == 0);
    CHECK(s.ids.size() >= 2);
    CHECK(s.ids.size() <= 10);
    if (s.category == Category::single) ++singles;
  }
  CHECK(singles == 20);
  CHECK(b.pool.size() - singles == 80);
}

TEST_CASE("empty sizes give a valid empty bundle") {
  TaskSpec spec = TaskSpec::task1_default();
  spec.set_sizes = {0, 0, 0};
  const DatasetBundle b = generate_dataset(spec, 5);
  CHECK(b.pretrain.empty());
  CHECK(b.pool.empty());
  CHECK(b.exam.empty());
}

TEST_CASE("generation is deterministic in (spec, seed)") {
  const TaskSpec spec = TaskSpec::task2_default();
  CHECK(generate_dataset(spec, 99) == generate_dataset(spec, 99));
  CHECK_FALSE(generate_dataset(spec, 99) == generate_dataset(spec, 100));
}

TEST_CASE("sets are pairwise disjoint and unique across many seeds") {
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL, 4ULL, 5ULL}) {
    for (const TaskSpec& spec : {TaskSpec::task1_default(), TaskSpec::task2_default()}) {
      const DatasetBundle b = generate_dataset(spec, seed);
      std::set<std::vector<int>> all;
      for (const auto* set : {&b.pretrain, &b.pool, &b.exam})
        for (const auto& s : *set) CHECK(all.insert(s.ids).second);
      // category_of is total on generated data
      for (const auto* set : {&b.pretrain, &b.pool, &b.exam})
        for (const auto& s : *set) CHECK(category_of(s.ids, spec) == s.category);
    }
  }
}

TEST_CASE("category_of matches the worked examples") {
  const TaskSpec spec = TaskSpec::task2_default();
  CHECK(category_of(ids_of(spec, "a b a c a d a b a c"), spec) == Category::single);
  CHECK(category_of(ids_of(spec, "a a b b c c"), spec) == Category::double_rep);
  // has an adjacent repeat but is not a pair decomposition
  CHECK_THROWS_AS((void)category_of(ids_of(spec, "a a b c"), spec), Error);
  // pair decomposition with equal consecutive pairs is not a double repetition
  CHECK_THROWS_AS((void)category_of(ids_of(spec, "a a a a"), spec), Error);
  // the length-2 double is the n=1 pair decomposition
  CHECK(category_of(ids_of(spec, "a a"), spec) == Category::double_rep);
  CHECK(category_of(ids_of(spec, "a b"), spec) == Category::single);
}

TEST_CASE("task1 category_of rejects mixed-vocabulary sentences") {
  const TaskSpec spec = TaskSpec::task1_default();
  CHECK(category_of(ids_of(spec, "a b c"), spec) == Category::vocab_a);
  CHECK(category_of(ids_of(spec, "k l m"), spec) == Category::vocab_b);
  CHECK_THROWS_AS((void)category_of(ids_of(spec, "a k"), spec), Error);
}

TEST_CASE("invalid specs are rejected") {
  TaskSpec overlap = TaskSpec::task1_default();
  overlap.vocab_b[0] = "a";
  CHECK_THROWS_AS((void)generate_dataset(overlap, 1), Error);

  TaskSpec odd = TaskSpec::task2_default();
  odd.sentence_len_min = 3;
  CHECK_THROWS_AS((void)generate_dataset(odd, 1), Error);

  TaskSpec bad_mix = TaskSpec::task1_default();
  bad_mix.pool_mix = 1.5;
  CHECK_THROWS_AS((void)generate_dataset(bad_mix, 1), Error);
}

TEST_CASE("uniqueness demands beyond the sentence space are rejected") {
  TaskSpec spec = TaskSpec::task2_default();
  // double-repetition space for lengths {2}: 10 sentences in total
  spec.sentence_len_min = spec.sentence_len_max = 2;
  spec.pool_mix = 0.0;  // pool/pretrain all doubles
  spec.set_sizes = {0, 11, 0};
  spec.exam_category = Category::single;
  CHECK_THROWS_AS((void)generate_dataset(spec, 1), Error);
  spec.set_sizes = {0, 10, 0};
  const DatasetBundle ok = generate_dataset(spec, 1);
  CHECK(ok.pool.size() == 10);
}

TEST_CASE("save/load round-trips the bundle exactly") {
  const fs::path dir = temp_dir("roundtrip");
  for (const TaskSpec& spec : {TaskSpec::task1_default(), TaskSpec::task2_default()}) {
    const DatasetBundle b = generate_dataset(spec, 4520);
    save_bundle(b, dir);
    const DatasetBundle loaded = load_bundle(dir);
    CHECK(loaded == b);
    CHECK(bundle_hash(loaded) == bundle_hash(b));
  }
  fs::remove_all(dir);
}

TEST_CASE("saved files are one sentence per line with space-separated tokens") {
  const fs::path dir = temp_dir("format");
  const DatasetBundle b = generate_dataset(TaskSpec::task1_default(), 8);
  save_bundle(b, dir);
  std::ifstream in(dir / "exam.txt");
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) {
    ++lines;
    CHECK(line.size() == 19);  // 10 single-char tokens, 9 spaces
    CHECK(line.find("  ") == std::string::npos);
  }
  CHECK(lines == 10);
  fs::remove_all(dir);
}

TEST_CASE("duplicate pool line fails invariants on load") {
  const fs::path dir = temp_dir("dup");
  const DatasetBundle b = generate_dataset(TaskSpec::task1_default(), 9);
  save_bundle(b, dir);
  std::ofstream out(dir / "pool.txt", std::ios::app);
  out << "a b c d e f g h i j\na b c d e f g h i j\n";
  out.close();
  try {
    (void)load_bundle(dir);
    FAIL("expected InvariantViolation");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::invariant_violation);
  }
  fs::remove_all(dir);
}

TEST_CASE("unknown token symbol names the symbol and line") {
  const fs::path dir = temp_dir("badtok");
  const DatasetBundle b = generate_dataset(TaskSpec::task1_default(), 10);
  save_bundle(b, dir);
  std::ofstream out(dir / "pool.txt", std::ios::app);
  out << "a b z d e f g h i j\n";
  out.close();
  try {
    (void)load_bundle(dir);
    FAIL("expected ParseError");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::parse_error);
    CHECK(std::string(e.what()).find("'z'") != std::string::npos);
    CHECK(std::string(e.what()).find("101") != std::string::npos);
  }
  fs::remove_all(dir);
}

TEST_CASE("unknown spec.json key is rejected") {
  const fs::path dir = temp_dir("badkey");
  const DatasetBundle b = generate_dataset(TaskSpec::task1_default(), 11);
  save_bundle(b, dir);
  std::ifstream in(dir / "spec.json");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();
  text.insert(text.find('{') + 1, "\"mystery\": 1,");
  std::ofstream out(dir / "spec.json", std::ios::trunc);
  out << text;
  out.close();
  CHECK_THROWS_AS((void)load_bundle(dir), Error);
  fs::remove_all(dir);
}

TEST_CASE("token ids are stable: content first, specials last") {
  const TaskSpec spec = TaskSpec::task1_default();
  const Vocab v = spec.vocab();
  CHECK(v.num_content() == 20);
  CHECK(v.id_of("a") == 0);
  CHECK(v.id_of("t") == 19);
  CHECK(v.bos_id() == 20);
  CHECK(v.eos_id() == 21);
  CHECK(v.pad_id() == 22);
  CHECK(v.size() == 23);
  CHECK(v.symbol_of(0) == "a");
}

TEST_SUITE_END();
