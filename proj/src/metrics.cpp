#include "ilm/metrics.hpp"

#include <charconv>
#include <cmath>
#include <limits>
#include <map>
#include <set>

#include "ilm/errors.hpp"

namespace ilm {

double fraction_from_exam(std::span<const int> lesson_indices, const DatasetBundle& bundle) {
  if (lesson_indices.empty()) fail(Errc::empty_batch, "empty lesson");
  int hits = 0;
  for (int i : lesson_indices) {
    if (i < 0 || static_cast<std::size_t>(i) >= bundle.pool.size())
      fail(Errc::index_out_of_range, "lesson index " + std::to_string(i));
    if (bundle.pool[static_cast<std::size_t>(i)].category == bundle.spec.exam_category) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(lesson_indices.size());
}

double ngram_overlap(std::span<const Sentence> lesson, std::span<const Sentence> exam, int n) {
  if (n < 1) fail(Errc::invalid_config, "n must be >= 1");
  if (lesson.empty()) fail(Errc::empty_batch, "empty lesson");
  std::set<std::vector<int>> exam_grams;
  for (const Sentence& s : exam)
    for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= s.ids.size(); ++i)
      exam_grams.insert(std::vector<int>(s.ids.begin() + static_cast<long>(i),
                                         s.ids.begin() + static_cast<long>(i) + n));
  double total = 0.0;
  for (const Sentence& s : lesson) {
    const std::size_t count =
        s.ids.size() >= static_cast<std::size_t>(n) ? s.ids.size() - static_cast<std::size_t>(n) + 1 : 0;
    if (count == 0) continue;  // too short: contributes 0
    int hits = 0;
    for (std::size_t i = 0; i < count; ++i) {
      std::vector<int> gram(s.ids.begin() + static_cast<long>(i),
                            s.ids.begin() + static_cast<long>(i) + n);
      if (exam_grams.contains(gram)) ++hits;
    }
    total += static_cast<double>(hits) / static_cast<double>(count);
  }
  return total / static_cast<double>(lesson.size());
}

SeparationReport embedding_separation(const Matrix& embeddings,
                                      std::span<const Category> categories) {
  if (static_cast<Eigen::Index>(categories.size()) != embeddings.rows())
    fail(Errc::shape_mismatch, "one category per embedding row required");
  std::map<Category, std::vector<Eigen::Index>> groups;
  for (Eigen::Index r = 0; r < embeddings.rows(); ++r)
    groups[categories[static_cast<std::size_t>(r)]].push_back(r);
  if (groups.size() < 2) fail(Errc::degenerate_input, "need at least two categories");
  for (const auto& [cat, rows] : groups)
    if (rows.size() < 2)
      fail(Errc::degenerate_input, std::string("category ") + category_name(cat) +
                                       " has fewer than 2 sentences");

  std::vector<Vector> centroids;
  double within = 0.0;
  for (const auto& [cat, rows] : groups) {
    Vector c = Vector::Zero(embeddings.cols());
    for (Eigen::Index r : rows) c += embeddings.row(r).transpose();
    c /= static_cast<double>(rows.size());
    for (Eigen::Index r : rows) within += (embeddings.row(r).transpose() - c).norm();
    centroids.push_back(std::move(c));
  }
  within /= static_cast<double>(embeddings.rows());

  double between = 0.0;
  int pairs = 0;
  for (std::size_t i = 0; i < centroids.size(); ++i)
    for (std::size_t j = i + 1; j < centroids.size(); ++j) {
      between += (centroids[i] - centroids[j]).norm();
      ++pairs;
    }
  between /= static_cast<double>(pairs);

  SeparationReport report;
  report.between_centroid_dist = between;
  report.mean_within_dist = within;
  if (within == 0.0) {
    report.degenerate_within = true;
    report.ratio = std::numeric_limits<double>::infinity();
  } else {
    report.ratio = between / within;
  }
  return report;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace ilm
