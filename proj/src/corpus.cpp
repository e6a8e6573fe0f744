#include "ilm/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "ilm/errors.hpp"
#include "ilm/rng.hpp"
#include "nlohmann/json.hpp"

namespace ilm {

using json = nlohmann::ordered_json;

const char* category_name(Category c) {
  switch (c) {
    case Category::vocab_a: return "vocab_a";
    case Category::vocab_b: return "vocab_b";
    case Category::single: return "single";
    case Category::double_rep: return "double";
  }
  return "?";
}

Category category_from_name(const std::string& name) {
  if (name == "vocab_a") return Category::vocab_a;
  if (name == "vocab_b") return Category::vocab_b;
  if (name == "single") return Category::single;
  if (name == "double") return Category::double_rep;
  fail(Errc::parse_error, "unknown category '" + name + "'");
}

const char* task_name(TaskKind t) {
  return t == TaskKind::different_domains ? "different_domains" : "different_structures";
}

TaskKind task_from_name(const std::string& name) {
  if (name == "different_domains") return TaskKind::different_domains;
  if (name == "different_structures") return TaskKind::different_structures;
  fail(Errc::parse_error, "unknown task '" + name + "'");
}

int Vocab::id_of(const std::string& symbol) const {
  for (int i = 0; i < num_content(); ++i)
    if (tokens[static_cast<std::size_t>(i)] == symbol) return i;
  if (symbol == "<bos>") return bos_id();
  if (symbol == "<eos>") return eos_id();
  if (symbol == "<pad>") return pad_id();
  return -1;
}

const std::string& Vocab::symbol_of(int id) const {
  static const std::string kBos = "<bos>", kEos = "<eos>", kPad = "<pad>";
  if (id >= 0 && id < num_content()) return tokens[static_cast<std::size_t>(id)];
  if (id == bos_id()) return kBos;
  if (id == eos_id()) return kEos;
  if (id == pad_id()) return kPad;
  fail(Errc::index_out_of_range, "token id " + std::to_string(id));
}

namespace {

std::vector<std::string> letters(char from, char to) {
  std::vector<std::string> out;
  for (char c = from; c <= to; ++c) out.emplace_back(1, c);
  return out;
}

bool is_single(std::span<const int> ids) {
  for (std::size_t i = 1; i < ids.size(); ++i)
    if (ids[i] == ids[i - 1]) return false;
  return true;
}

bool is_double(std::span<const int> ids) {
  if (ids.empty() || ids.size() % 2 != 0) return false;
  for (std::size_t i = 0; i + 1 < ids.size(); i += 2) {
    if (ids[i] != ids[i + 1]) return false;
    if (i + 2 < ids.size() && ids[i] == ids[i + 2]) return false;
  }
  return true;
}

// Saturating count of distinct sentences in a category; used to reject
// impossible uniqueness demands before sampling.
constexpr std::uint64_t kHuge = ~0ULL;

std::uint64_t sat_mul(std::uint64_t a, std::uint64_t b) {
  if (a != 0 && b > kHuge / a) return kHuge;
  return a * b;
}

std::uint64_t sat_add(std::uint64_t a, std::uint64_t b) {
  return (a > kHuge - b) ? kHuge : a + b;
}

std::uint64_t category_space(const TaskSpec& spec, Category cat) {
  const auto n_a = static_cast<std::uint64_t>(spec.vocab_a.size());
  const auto n_b = static_cast<std::uint64_t>(spec.vocab_b.size());
  if (spec.task == TaskKind::different_domains) {
    const std::uint64_t v = (cat == Category::vocab_a) ? n_a : n_b;
    std::uint64_t total = 1;
    for (int i = 0; i < spec.sentence_len_max; ++i) total = sat_mul(total, v);
    return total;
  }
  // Structures: first token free, each later token (or pair token) avoids the
  // previous one.
  std::uint64_t total = 0;
  for (int len = spec.sentence_len_min; len <= spec.sentence_len_max; len += 2) {
    const int slots = (cat == Category::single) ? len : len / 2;
    std::uint64_t c = n_a;
    for (int i = 1; i < slots; ++i) c = sat_mul(c, n_a - 1);
    total = sat_add(total, c);
  }
  return total;
}

std::vector<int> sample_sentence(const TaskSpec& spec, Category cat, Rng& rng) {
  const int n_a = static_cast<int>(spec.vocab_a.size());
  const int n_b = static_cast<int>(spec.vocab_b.size());
  std::vector<int> ids;
  if (spec.task == TaskKind::different_domains) {
    const int base = (cat == Category::vocab_a) ? 0 : n_a;
    const int v = (cat == Category::vocab_a) ? n_a : n_b;
    ids.reserve(static_cast<std::size_t>(spec.sentence_len_max));
    for (int i = 0; i < spec.sentence_len_max; ++i)
      ids.push_back(base + static_cast<int>(rng.below(static_cast<std::uint64_t>(v))));
    return ids;
  }
  const int n_lengths = (spec.sentence_len_max - spec.sentence_len_min) / 2 + 1;
  const int len = spec.sentence_len_min + 2 * static_cast<int>(rng.below(static_cast<std::uint64_t>(n_lengths)));
  // Uniform token with the previous one excluded: draw from n-1 and skip past.
  auto next_avoiding = [&](int prev) {
    int t = static_cast<int>(rng.below(static_cast<std::uint64_t>(n_a - 1)));
    if (t >= prev) ++t;
    return t;
  };
  if (cat == Category::single) {
    int prev = static_cast<int>(rng.below(static_cast<std::uint64_t>(n_a)));
    ids.push_back(prev);
    for (int i = 1; i < len; ++i) {
      prev = next_avoiding(prev);
      ids.push_back(prev);
    }
  } else {
    int prev = static_cast<int>(rng.below(static_cast<std::uint64_t>(n_a)));
    ids.push_back(prev);
    ids.push_back(prev);
    for (int i = 1; i < len / 2; ++i) {
      prev = next_avoiding(prev);
      ids.push_back(prev);
      ids.push_back(prev);
    }
  }
  return ids;
}

constexpr int kMaxAttempts = 1000000;

}  // namespace

void TaskSpec::validate() const {
  if (vocab_a.empty()) fail(Errc::invalid_spec, "vocab_a is empty");
  std::set<std::string> seen(vocab_a.begin(), vocab_a.end());
  if (seen.size() != vocab_a.size()) fail(Errc::invalid_spec, "vocab_a has duplicate symbols");
  if (task == TaskKind::different_domains) {
    if (vocab_b.empty()) fail(Errc::invalid_spec, "different_domains requires vocab_b");
    for (const auto& s : vocab_b)
      if (!seen.insert(s).second) fail(Errc::invalid_spec, "vocab_a and vocab_b overlap on '" + s + "'");
    if (sentence_len_min != sentence_len_max)
      fail(Errc::invalid_spec, "different_domains uses a fixed sentence length");
    if (exam_category != Category::vocab_a && exam_category != Category::vocab_b)
      fail(Errc::invalid_spec, "exam category must be vocab_a or vocab_b");
  } else {
    if (!vocab_b.empty()) fail(Errc::invalid_spec, "different_structures uses a single vocabulary");
    if (vocab_a.size() < 2) fail(Errc::invalid_spec, "structures need at least 2 tokens");
    if (sentence_len_min < 2 || sentence_len_min % 2 != 0 || sentence_len_max % 2 != 0 ||
        sentence_len_max < sentence_len_min)
      fail(Errc::invalid_spec, "structure lengths must be even and min <= max, min >= 2");
    if (exam_category != Category::single && exam_category != Category::double_rep)
      fail(Errc::invalid_spec, "exam category must be single or double");
  }
  if (sentence_len_min < 1) fail(Errc::invalid_spec, "sentence length must be positive");
  if (pool_mix < 0.0 || pool_mix > 1.0) fail(Errc::invalid_spec, "pool_mix outside [0,1]");
  if (set_sizes.pretrain < 0 || set_sizes.pool < 0 || set_sizes.exam < 0)
    fail(Errc::invalid_spec, "set sizes must be non-negative");
}

Vocab TaskSpec::vocab() const {
  Vocab v;
  v.tokens = vocab_a;
  v.tokens.insert(v.tokens.end(), vocab_b.begin(), vocab_b.end());
  return v;
}

Category TaskSpec::complement_category() const {
  switch (exam_category) {
    case Category::vocab_a: return Category::vocab_b;
    case Category::vocab_b: return Category::vocab_a;
    case Category::single: return Category::double_rep;
    case Category::double_rep: return Category::single;
  }
  fail(Errc::invalid_spec, "bad exam category");
}

TaskSpec TaskSpec::task1_default() {
  TaskSpec s;
  s.task = TaskKind::different_domains;
  s.vocab_a = letters('a', 'j');
  s.vocab_b = letters('k', 't');
  s.sentence_len_min = s.sentence_len_max = 10;
  s.pool_mix = 0.5;
  s.exam_category = Category::vocab_a;
  return s;
}

TaskSpec TaskSpec::task2_default() {
  TaskSpec s;
  s.task = TaskKind::different_structures;
  s.vocab_a = letters('a', 'j');
  s.sentence_len_min = 2;
  s.sentence_len_max = 10;
  s.pool_mix = 0.2;
  s.exam_category = Category::single;
  return s;
}

Category category_of(std::span<const int> ids, const TaskSpec& spec) {
  if (ids.empty()) fail(Errc::uncategorizable, "empty sentence");
  const int n_a = static_cast<int>(spec.vocab_a.size());
  const int n_total = n_a + static_cast<int>(spec.vocab_b.size());
  for (int id : ids)
    if (id < 0 || id >= n_total)
      fail(Errc::uncategorizable, "token id " + std::to_string(id) + " outside content vocabulary");
  if (spec.task == TaskKind::different_domains) {
    const bool all_a = std::all_of(ids.begin(), ids.end(), [&](int id) { return id < n_a; });
    const bool all_b = std::all_of(ids.begin(), ids.end(), [&](int id) { return id >= n_a; });
    if (all_a) return Category::vocab_a;
    if (all_b) return Category::vocab_b;
    fail(Errc::uncategorizable, "sentence mixes vocabularies");
  }
  if (is_single(ids)) return Category::single;
  if (is_double(ids)) return Category::double_rep;
  fail(Errc::uncategorizable, "sentence is neither a single nor a double repetition");
}

DatasetBundle generate_dataset(const TaskSpec& spec, std::uint64_t seed) {
  spec.validate();

  const Category exam_cat = spec.exam_category;
  const Category other_cat = spec.complement_category();
  const int n_pool_exam = static_cast<int>(std::llround(spec.pool_mix * spec.set_sizes.pool));
  const int n_pre_exam = static_cast<int>(std::llround(spec.pool_mix * spec.set_sizes.pretrain));

  std::uint64_t need_exam_cat = static_cast<std::uint64_t>(spec.set_sizes.exam) + n_pool_exam + n_pre_exam;
  std::uint64_t need_other = static_cast<std::uint64_t>(spec.set_sizes.pool - n_pool_exam) +
                             static_cast<std::uint64_t>(spec.set_sizes.pretrain - n_pre_exam);
  if (need_exam_cat > category_space(spec, exam_cat))
    fail(Errc::space_exhausted, std::string("category ") + category_name(exam_cat) +
                                    " has fewer distinct sentences than requested");
  if (need_other > category_space(spec, other_cat))
    fail(Errc::space_exhausted, std::string("category ") + category_name(other_cat) +
                                    " has fewer distinct sentences than requested");

  Rng rng(derive_seed(seed, 0, 0, "dataset"));
  std::set<std::vector<int>> seen;

  auto draw = [&](Category cat) {
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
      std::vector<int> ids = sample_sentence(spec, cat, rng);
      if (seen.insert(ids).second) return Sentence{std::move(ids), cat};
    }
    fail(Errc::space_exhausted, std::string("could not draw a fresh ") + category_name(cat) +
                                    " sentence after " + std::to_string(kMaxAttempts) + " attempts");
  };

  auto make_set = [&](int n_exam_cat, int n_total) {
    std::vector<Sentence> out;
    out.reserve(static_cast<std::size_t>(n_total));
    for (int i = 0; i < n_exam_cat; ++i) out.push_back(draw(exam_cat));
    for (int i = n_exam_cat; i < n_total; ++i) out.push_back(draw(other_cat));
    rng.shuffle(out);
    return out;
  };

  DatasetBundle bundle;
  bundle.spec = spec;
  bundle.seed = seed;
  bundle.pretrain = make_set(n_pre_exam, spec.set_sizes.pretrain);
  bundle.pool = make_set(n_pool_exam, spec.set_sizes.pool);
  bundle.exam = make_set(spec.set_sizes.exam, spec.set_sizes.exam);
  bundle.check_invariants();
  return bundle;
}

void DatasetBundle::check_invariants() const {
  spec.validate();
  std::set<std::vector<int>> all;
  auto check_set = [&](const std::vector<Sentence>& set, const char* name) {
    std::set<std::vector<int>> local;
    for (const auto& s : set) {
      if (!local.insert(s.ids).second)
        fail(Errc::invariant_violation, std::string("duplicate sentence in ") + name);
      if (!all.insert(s.ids).second)
        fail(Errc::invariant_violation, std::string(name) + " overlaps another set");
      if (category_of(s.ids, spec) != s.category)
        fail(Errc::invariant_violation, std::string("stored category mismatch in ") + name);
    }
  };
  check_set(pretrain, "pretrain");
  check_set(pool, "pool");
  check_set(exam, "exam");
  for (const auto& s : exam)
    if (s.category != spec.exam_category)
      fail(Errc::invariant_violation, "exam sentence of non-exam category");
}

bool operator==(const TaskSpec& a, const TaskSpec& b) {
  return a.task == b.task && a.vocab_a == b.vocab_a && a.vocab_b == b.vocab_b &&
         a.sentence_len_min == b.sentence_len_min && a.sentence_len_max == b.sentence_len_max &&
         a.pool_mix == b.pool_mix && a.set_sizes.pretrain == b.set_sizes.pretrain &&
         a.set_sizes.pool == b.set_sizes.pool && a.set_sizes.exam == b.set_sizes.exam &&
         a.exam_category == b.exam_category;
}

bool operator==(const DatasetBundle& a, const DatasetBundle& b) {
  return a.spec == b.spec && a.seed == b.seed && a.pretrain == b.pretrain && a.pool == b.pool &&
         a.exam == b.exam;
}

namespace {

json spec_to_json(const TaskSpec& s, std::uint64_t seed) {
  json j;
  j["task"] = task_name(s.task);
  j["vocab_a"] = s.vocab_a;
  j["vocab_b"] = s.vocab_b;
  j["sentence_len"] = {{"min", s.sentence_len_min}, {"max", s.sentence_len_max}};
  j["pool_mix"] = s.pool_mix;
  j["set_sizes"] = {{"pretrain", s.set_sizes.pretrain}, {"pool", s.set_sizes.pool}, {"exam", s.set_sizes.exam}};
  j["exam_category"] = category_name(s.exam_category);
  j["seed"] = seed;
  return j;
}

void write_set(const std::filesystem::path& path, const std::vector<Sentence>& set, const Vocab& vocab) {
  std::ofstream out(path);
  if (!out) fail(Errc::io_error, "cannot open " + path.string() + " for writing");
  for (const auto& s : set) {
    for (std::size_t i = 0; i < s.ids.size(); ++i) {
      if (i) out << ' ';
      out << vocab.symbol_of(s.ids[i]);
    }
    out << '\n';
  }
  if (!out) fail(Errc::io_error, "write failed for " + path.string());
}

std::vector<Sentence> read_set(const std::filesystem::path& path, const TaskSpec& spec, const Vocab& vocab) {
  std::ifstream in(path);
  if (!in) fail(Errc::io_error, "cannot open " + path.string());
  std::vector<Sentence> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::vector<int> ids;
    std::string sym;
    while (ss >> sym) {
      const int id = vocab.id_of(sym);
      if (id < 0 || id >= vocab.num_content())
        fail(Errc::parse_error, "unknown token '" + sym + "' at " + path.filename().string() + ":" +
                                    std::to_string(line_no));
      ids.push_back(id);
    }
    if (ids.empty())
      fail(Errc::parse_error, "blank sentence at " + path.filename().string() + ":" + std::to_string(line_no));
    Category cat;
    try {
      cat = category_of(ids, spec);
    } catch (const Error&) {
      fail(Errc::invariant_violation, "uncategorizable sentence at " + path.filename().string() + ":" +
                                          std::to_string(line_no));
    }
    out.push_back(Sentence{std::move(ids), cat});
  }
  return out;
}

}  // namespace

void save_bundle(const DatasetBundle& bundle, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(Errc::io_error, "cannot create directory " + dir.string());
  const Vocab vocab = bundle.spec.vocab();
  std::ofstream spec_out(dir / "spec.json");
  if (!spec_out) fail(Errc::io_error, "cannot write spec.json");
  spec_out << spec_to_json(bundle.spec, bundle.seed).dump(2) << '\n';
  write_set(dir / "pretrain.txt", bundle.pretrain, vocab);
  write_set(dir / "pool.txt", bundle.pool, vocab);
  write_set(dir / "exam.txt", bundle.exam, vocab);
}

DatasetBundle load_bundle(const std::filesystem::path& dir) {
  std::ifstream spec_in(dir / "spec.json");
  if (!spec_in) fail(Errc::io_error, "cannot open " + (dir / "spec.json").string());
  json j;
  try {
    spec_in >> j;
  } catch (const json::exception& e) {
    fail(Errc::parse_error, std::string("spec.json: ") + e.what());
  }
  static const std::set<std::string> known = {"task",      "vocab_a",   "vocab_b",
                                              "sentence_len", "pool_mix", "set_sizes",
                                              "exam_category", "seed"};
  for (const auto& [key, _] : j.items())
    if (!known.contains(key)) fail(Errc::parse_error, "spec.json: unknown key '" + key + "'");

  TaskSpec spec;
  try {
    spec.task = task_from_name(j.at("task").get<std::string>());
    spec.vocab_a = j.at("vocab_a").get<std::vector<std::string>>();
    spec.vocab_b = j.at("vocab_b").get<std::vector<std::string>>();
    spec.sentence_len_min = j.at("sentence_len").at("min").get<int>();
    spec.sentence_len_max = j.at("sentence_len").at("max").get<int>();
    spec.pool_mix = j.at("pool_mix").get<double>();
    spec.set_sizes.pretrain = j.at("set_sizes").at("pretrain").get<int>();
    spec.set_sizes.pool = j.at("set_sizes").at("pool").get<int>();
    spec.set_sizes.exam = j.at("set_sizes").at("exam").get<int>();
    spec.exam_category = category_from_name(j.at("exam_category").get<std::string>());
  } catch (const json::exception& e) {
    fail(Errc::parse_error, std::string("spec.json: ") + e.what());
  }
  spec.validate();

  DatasetBundle bundle;
  bundle.spec = spec;
  bundle.seed = j.at("seed").get<std::uint64_t>();
  const Vocab vocab = spec.vocab();
  bundle.pretrain = read_set(dir / "pretrain.txt", spec, vocab);
  bundle.pool = read_set(dir / "pool.txt", spec, vocab);
  bundle.exam = read_set(dir / "exam.txt", spec, vocab);
  bundle.check_invariants();
  return bundle;
}

std::uint64_t bundle_hash(const DatasetBundle& bundle) {
  const Vocab vocab = bundle.spec.vocab();
  std::string canon = spec_to_json(bundle.spec, bundle.seed).dump();
  for (const auto* set : {&bundle.pretrain, &bundle.pool, &bundle.exam}) {
    for (const auto& s : *set) {
      for (int id : s.ids) {
        canon += vocab.symbol_of(id);
        canon += ' ';
      }
      canon += '\n';
    }
  }
  return fnv1a64(canon);
}

}  // namespace ilm
