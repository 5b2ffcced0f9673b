#pragma once

#include <cstdint>

#include "docdef/gradient.hpp"

namespace docdef {

enum class AttackLoss { CrossEntropy, CwMargin };

const char* to_string(AttackLoss loss);
AttackLoss attack_loss_from_string(const std::string& name);

struct AttackConfig {
  double eps = 4.0 / 255.0;        // l-inf budget, pixel units
  int steps = 10;                  // PGD-10 by default
  double step_size = 1.0 / 255.0;  // pixel units
  AttackLoss loss = AttackLoss::CrossEntropy;
  bool random_init = true;
  std::uint64_t seed = 0;

  // Throws on invalid ranges; warns (stderr, once per call) when
  // step_size > eps.
  void validate() const;
};

// Coordinatewise clamp to [-eps, eps].
ImageTensor project_linf(ImageTensor delta, double eps);

// Coordinatewise clamp to the valid pixel range [0, 1].
ImageTensor clip_to_image(ImageTensor x);

// l-inf bounded PGD ascending the configured loss. Returns
// clip_to_image(x + delta) with |delta|_inf <= eps. Deterministic per
// (seed, config, input).
ImageTensor pgd_attack(const Encoder& encoder, const ClassAnchorSet& anchors,
                       const ImageTensor& image, int label, const AttackConfig& config);

// PGD on the CW margin loss; config.loss is ignored.
ImageTensor cw_attack(const Encoder& encoder, const ClassAnchorSet& anchors,
                      const ImageTensor& image, int label, const AttackConfig& config);

}  // namespace docdef
