#pragma once

#include <utility>
#include <variant>

#include "docdef/encoder.hpp"
#include "docdef/zeroshot.hpp"

namespace docdef {

// Losses defined on the embedding an encoder produces. The attack losses
// carry their anchor set by value; anchor sets are small.

// L2 distance between the embedding and a fixed anchor embedding. The
// gradient at zero distance is defined as the zero vector.
struct L2ToAnchorLoss {
  Embedding anchor;
};

struct CrossEntropyLossOnAnchors {
  ClassAnchorSet anchors;
  int label = 0;
  double temperature = 1.0;
};

struct CwMarginLossOnAnchors {
  ClassAnchorSet anchors;
  int label = 0;
};

using EmbeddingLoss =
    std::variant<L2ToAnchorLoss, CrossEntropyLossOnAnchors, CwMarginLossOnAnchors>;

// Loss value plus its gradient w.r.t. the embedding.
struct LossEval {
  double value = 0.0;
  std::vector<double> grad_embedding;
};

LossEval eval_loss_on_embedding(const EmbeddingLoss& loss, const Embedding& e);

// Loss value at encode(input).
double loss_value(const Encoder& encoder, const ImageTensor& input, const EmbeddingLoss& loss);

// Loss value and its input gradient by exact reverse-mode differentiation of
// the composed encoder + loss. The gradient has the shape of the input.
std::pair<double, ImageTensor> loss_value_and_input_gradient(const Encoder& encoder,
                                                             const ImageTensor& input,
                                                             const EmbeddingLoss& loss);

// Central-difference estimate (L(x + h e_i) - L(x - h e_i)) / (2h) per
// coordinate. Test oracle; independent of the reverse-mode path.
ImageTensor finite_difference_gradient(const Encoder& encoder, const ImageTensor& input,
                                       const EmbeddingLoss& loss, double h = 1e-5);

}  // namespace docdef
