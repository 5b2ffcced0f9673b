#include "docdef/gradient.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace docdef {

namespace {

// d s_i / d e = (u_i - s_i * e_hat) / |e|, with u_i the unit anchor.
void add_score_gradient(std::vector<double>& grad, const Embedding& e, const Embedding& anchor,
                        double score, double coeff) {
  const double ne = l2_norm(e);
  const double na = l2_norm(anchor);
  for (std::size_t j = 0; j < e.size(); ++j) {
    const double u = anchor[j] / na;
    const double e_hat = e[j] / ne;
    grad[j] += coeff * (u - score * e_hat) / ne;
  }
}

LossEval eval_l2_to_anchor(const L2ToAnchorLoss& loss, const Embedding& e) {
  if (e.size() != loss.anchor.size()) {
    throw std::invalid_argument("l2-to-anchor loss: anchor dimension mismatch");
  }
  std::vector<double> diff(e.size());
  for (std::size_t i = 0; i < e.size(); ++i) diff[i] = e[i] - loss.anchor[i];
  const double n = l2_norm(diff);
  LossEval out;
  out.value = n;
  out.grad_embedding.assign(e.size(), 0.0);
  if (n > 0.0) {
    for (std::size_t i = 0; i < e.size(); ++i) out.grad_embedding[i] = diff[i] / n;
  }
  return out;
}

LossEval eval_cross_entropy(const CrossEntropyLossOnAnchors& loss, const Embedding& e) {
  const std::vector<double> scores = cosine_scores(e, loss.anchors);
  const int k = static_cast<int>(scores.size());
  if (loss.label < 0 || loss.label >= k) {
    throw std::invalid_argument("cross-entropy loss: label out of range");
  }
  if (!(loss.temperature > 0.0)) {
    throw std::invalid_argument("cross-entropy loss: temperature must be positive");
  }
  double m = -std::numeric_limits<double>::infinity();
  for (double s : scores) m = std::max(m, s / loss.temperature);
  std::vector<double> p(scores.size());
  double z = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    p[i] = std::exp(scores[i] / loss.temperature - m);
    z += p[i];
  }
  for (double& v : p) v /= z;

  LossEval out;
  out.value = -std::log(p[static_cast<std::size_t>(loss.label)]);
  out.grad_embedding.assign(e.size(), 0.0);
  for (int i = 0; i < k; ++i) {
    const double ds = (p[static_cast<std::size_t>(i)] - (i == loss.label ? 1.0 : 0.0)) /
                      loss.temperature;
    add_score_gradient(out.grad_embedding, e, loss.anchors.anchors[static_cast<std::size_t>(i)],
                       scores[static_cast<std::size_t>(i)], ds);
  }
  return out;
}

LossEval eval_cw_margin(const CwMarginLossOnAnchors& loss, const Embedding& e) {
  const std::vector<double> scores = cosine_scores(e, loss.anchors);
  const int k = static_cast<int>(scores.size());
  if (loss.label < 0 || loss.label >= k) {
    throw std::invalid_argument("cw margin loss: label out of range");
  }
  int best = -1;
  for (int j = 0; j < k; ++j) {
    if (j == loss.label) continue;
    if (best < 0 || scores[static_cast<std::size_t>(j)] > scores[static_cast<std::size_t>(best)]) {
      best = j;
    }
  }
  LossEval out;
  out.value = scores[static_cast<std::size_t>(best)] - scores[static_cast<std::size_t>(loss.label)];
  out.grad_embedding.assign(e.size(), 0.0);
  add_score_gradient(out.grad_embedding, e, loss.anchors.anchors[static_cast<std::size_t>(best)],
                     scores[static_cast<std::size_t>(best)], 1.0);
  add_score_gradient(out.grad_embedding, e,
                     loss.anchors.anchors[static_cast<std::size_t>(loss.label)],
                     scores[static_cast<std::size_t>(loss.label)], -1.0);
  return out;
}

}  // namespace

LossEval eval_loss_on_embedding(const EmbeddingLoss& loss, const Embedding& e) {
  return std::visit(
      [&](const auto& l) -> LossEval {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, L2ToAnchorLoss>) return eval_l2_to_anchor(l, e);
        else if constexpr (std::is_same_v<T, CrossEntropyLossOnAnchors>) return eval_cross_entropy(l, e);
        else return eval_cw_margin(l, e);
      },
      loss);
}

double loss_value(const Encoder& encoder, const ImageTensor& input, const EmbeddingLoss& loss) {
  return eval_loss_on_embedding(loss, encoder.encode(input)).value;
}

std::pair<double, ImageTensor> loss_value_and_input_gradient(const Encoder& encoder,
                                                             const ImageTensor& input,
                                                             const EmbeddingLoss& loss) {
  require_consistent(input, "loss_value_and_input_gradient");
  ForwardTrace trace;
  const Embedding e = encoder.encode_traced(input.data, trace);
  const LossEval eval = eval_loss_on_embedding(loss, e);
  ImageTensor grad(encoder.input_gradient(input.data, trace, eval.grad_embedding), input.shape);
  return {eval.value, std::move(grad)};
}

ImageTensor finite_difference_gradient(const Encoder& encoder, const ImageTensor& input,
                                       const EmbeddingLoss& loss, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_difference_gradient: h must be positive");
  require_consistent(input, "finite_difference_gradient");
  ImageTensor probe = input;
  ImageTensor grad = ImageTensor::zeros(input.shape);
  for (std::size_t i = 0; i < probe.data.size(); ++i) {
    const double saved = probe.data[i];
    probe.data[i] = saved + h;
    const double up = loss_value(encoder, probe, loss);
    probe.data[i] = saved - h;
    const double down = loss_value(encoder, probe, loss);
    probe.data[i] = saved;
    grad.data[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

}  // namespace docdef
