#pragma once

#include <string>
#include <vector>

#include "docdef/encoder.hpp"

namespace docdef {

// K fixed class embeddings standing in for per-class prompt embeddings.
struct ClassAnchorSet {
  std::vector<Embedding> anchors;
  std::vector<std::string> class_names;

  int class_count() const { return static_cast<int>(anchors.size()); }
  int dim() const { return anchors.empty() ? 0 : static_cast<int>(anchors.front().size()); }

  // K >= 2, consistent dimensions, every anchor nonzero.
  void validate() const;
};

struct ClassDistribution {
  std::vector<double> probs;  // nonnegative, sums to 1
};

// <e, a> / (|e| |a|); rejects zero-norm inputs.
double cosine_score(const Embedding& e, const Embedding& anchor);

// Cosine score against every anchor, in class order.
std::vector<double> cosine_scores(const Embedding& e, const ClassAnchorSet& anchors);

// Softmax over cosine scores / temperature.
ClassDistribution class_probabilities(const Embedding& e, const ClassAnchorSet& anchors,
                                      double temperature = 1.0);

// Argmax of cosine scores; ties break to the lowest index.
int predict(const Embedding& e, const ClassAnchorSet& anchors);

// -log P(y = label | e), log-sum-exp stabilized.
double cross_entropy_loss(const Embedding& e, const ClassAnchorSet& anchors, int label,
                          double temperature = 1.0);

// max_{j != label} s_j - s_label; positive iff misclassified under argmax.
double cw_margin_loss(const Embedding& e, const ClassAnchorSet& anchors, int label);

// Same text format family as encoders: K and d header, then one class name
// plus row of values per anchor.
void save_anchors(const ClassAnchorSet& anchors, const std::string& path);
ClassAnchorSet load_anchors(const std::string& path);

}  // namespace docdef
