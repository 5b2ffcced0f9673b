#pragma once

#include <array>
#include <vector>

#include "docdef/encoder.hpp"

namespace docdef {

// Fraction of matching entries; rejects empty or mismatched lists.
double accuracy(const std::vector<int>& predictions, const std::vector<int>& labels);

// Mean cosine similarity over all unordered distinct pairs (self-pairs
// excluded). Lower values indicate a more diverse set. Rejects sets with
// fewer than two vectors or containing a zero vector.
double mean_cos(const std::vector<ImageTensor>& vectors);

// Per-pair l2 distance between embeddings of originals and perturbed.
std::vector<double> embedding_shift(const Encoder& encoder,
                                    const std::vector<ImageTensor>& originals,
                                    const std::vector<ImageTensor>& perturbed);

struct Pca2d {
  std::vector<std::array<double, 2>> points;
  bool rank_deficient = false;  // fewer than two nonzero principal directions
};

// Projection onto the top two principal components of the mean-centered set,
// via power iteration with deflation (tolerance 1e-9, at most 1000
// iterations). Component sign is fixed by making the largest-magnitude
// loading positive. Rank-deficient inputs get zero coordinates on the
// missing components and set the flag.
Pca2d pca_2d(const std::vector<Embedding>& embeddings);

}  // namespace docdef
