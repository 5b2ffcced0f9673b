#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "docdef/zeroshot.hpp"

namespace docdef {

enum class Split { AnchorFit, Test };
const char* to_string(Split split);

struct Dataset {
  std::vector<ImageTensor> images;
  std::vector<int> labels;
  int class_count = 0;
  Shape shape;
  Split split = Split::Test;
  std::uint64_t seed = 0;

  int size() const { return static_cast<int>(images.size()); }
  void validate() const;
};

struct BlobSplits {
  Dataset anchor_fit;
  Dataset test;
};

// Synthetic blob classification task. K class templates are drawn once,
// uniform in [0.2, 0.8] per pixel; every example is
// clip(template[label] + N(0, noise_sigma)). Each example has its own
// derived stream, so the dataset is identical for any evaluation order.
BlobSplits generate_blobs(int class_count, Shape shape, double noise_sigma,
                          int anchor_per_class, int test_per_class, std::uint64_t seed);

// CSV with an optional "# shape C H W" sidecar line before the
// "label,p0,p1,..." header. Pixels must lie in [0, 1]; violations are
// reported with row and column. Values are written with %.17g so a round
// trip reproduces the doubles exactly.
Dataset load_csv_dataset(const std::string& path, std::optional<Shape> shape = std::nullopt);
void save_csv_dataset(const Dataset& dataset, const std::string& path);

// Anchor i is the mean embedding of the class-i examples. Classes without
// examples are rejected, naming the class.
ClassAnchorSet build_anchors(const Encoder& encoder, const Dataset& anchor_fit);

}  // namespace docdef
