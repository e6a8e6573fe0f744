#pragma once

#include <span>
#include <string>
#include <vector>

#include "ilm/autodiff.hpp"
#include "ilm/corpus.hpp"

namespace ilm {

// Fraction of lesson sentences whose category equals the exam category.
double fraction_from_exam(std::span<const int> lesson_indices, const DatasetBundle& bundle);

// Mean over lesson sentences of the fraction of that sentence's n-gram
// positions whose n-gram occurs anywhere in the exam set. Sentences shorter
// than n contribute 0.
double ngram_overlap(std::span<const Sentence> lesson, std::span<const Sentence> exam, int n);

struct SeparationReport {
  double between_centroid_dist = 0.0;
  double mean_within_dist = 0.0;
  double ratio = 0.0;
  bool degenerate_within = false;  // all points on their centroids
};

// Distance between the two category centroids over the mean distance of each
// point to its own centroid. With more than two categories the between term
// is the mean pairwise centroid distance.
SeparationReport embedding_separation(const Matrix& embeddings,
                                      std::span<const Category> categories);

// Shortest-round-trip decimal formatting; the one formatter used for every
// CSV/JSON number the run emits, so reruns are byte-identical.
std::string format_double(double v);

}  // namespace ilm
