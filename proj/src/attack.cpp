#include "docdef/attack.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <stdexcept>

#include "docdef/rng.hpp"

namespace docdef {

const char* to_string(AttackLoss loss) {
  return loss == AttackLoss::CrossEntropy ? "cross_entropy" : "cw_margin";
}

AttackLoss attack_loss_from_string(const std::string& name) {
  if (name == "cross_entropy" || name == "ce") return AttackLoss::CrossEntropy;
  if (name == "cw_margin" || name == "cw") return AttackLoss::CwMargin;
  throw std::invalid_argument("unknown attack loss '" + name + "'");
}

void AttackConfig::validate() const {
  if (!(eps >= 0.0 && eps <= 1.0)) throw std::invalid_argument("attack eps must be in [0, 1]");
  if (steps < 0) throw std::invalid_argument("attack steps must be nonnegative");
  if (!(step_size > 0.0)) throw std::invalid_argument("attack step_size must be positive");
  if (step_size > eps && eps > 0.0) {
    std::cerr << "warning: attack step_size " << step_size << " exceeds eps " << eps << "\n";
  }
}

ImageTensor project_linf(ImageTensor delta, double eps) {
  if (!(eps >= 0.0)) throw std::invalid_argument("project_linf: eps must be nonnegative");
  for (double& v : delta.data) v = std::clamp(v, -eps, eps);
  return delta;
}

ImageTensor clip_to_image(ImageTensor x) {
  for (double& v : x.data) v = std::clamp(v, 0.0, 1.0);
  return x;
}

static ImageTensor run_pgd(const Encoder& encoder, const ClassAnchorSet& anchors,
                           const ImageTensor& image, int label, const AttackConfig& config,
                           AttackLoss loss_kind) {
  config.validate();
  require_consistent(image, "pgd_attack");
  anchors.validate();
  if (label < 0 || label >= anchors.class_count()) {
    throw std::invalid_argument("pgd_attack: label out of range");
  }

  EmbeddingLoss loss;
  if (loss_kind == AttackLoss::CrossEntropy) {
    loss = CrossEntropyLossOnAnchors{anchors, label, 1.0};
  } else {
    loss = CwMarginLossOnAnchors{anchors, label};
  }

  ImageTensor delta = ImageTensor::zeros(image.shape);
  if (config.random_init && config.eps > 0.0) {
    Rng rng(derive_seed(config.seed, stream_tag::kAttackInit));
    for (double& v : delta.data) v = rng.uniform(-config.eps, config.eps);
  }

  for (int t = 0; t < config.steps; ++t) {
    const ImageTensor x_eval = clip_to_image(add(image, delta));
    auto [value, grad] = loss_value_and_input_gradient(encoder, x_eval, loss);
    (void)value;
    for (std::size_t i = 0; i < delta.data.size(); ++i) {
      const double g = grad.data[i];
      const double s = (g > 0.0) ? 1.0 : (g < 0.0 ? -1.0 : 0.0);
      delta.data[i] += config.step_size * s;
    }
    delta = project_linf(std::move(delta), config.eps);
  }
  return clip_to_image(add(image, delta));
}

ImageTensor pgd_attack(const Encoder& encoder, const ClassAnchorSet& anchors,
                       const ImageTensor& image, int label, const AttackConfig& config) {
  return run_pgd(encoder, anchors, image, label, config, config.loss);
}

ImageTensor cw_attack(const Encoder& encoder, const ClassAnchorSet& anchors,
                      const ImageTensor& image, int label, const AttackConfig& config) {
  return run_pgd(encoder, anchors, image, label, config, AttackLoss::CwMargin);
}

}  // namespace docdef
