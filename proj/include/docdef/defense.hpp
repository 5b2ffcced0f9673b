#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "docdef/attack.hpp"
#include "docdef/rng.hpp"

namespace docdef {

enum class ProbeNoise { UniformBall, SignGaussian };
const char* to_string(ProbeNoise noise);
ProbeNoise probe_noise_from_string(const std::string& name);

// Gate argument convention. Standard is w = sigmoid(gamma * (tau - tau_hat)),
// so a low sensitivity score (clean-looking input) gets the full optimized
// counterattack. Inverted is w = sigmoid(gamma * (tau_hat - tau)), giving the
// optimized counterattack to suspicious inputs instead. Both are exposed
// because the two readings disagree about intent; reports record which one
// ran.
enum class GatePolarity { Standard, Inverted };
const char* to_string(GatePolarity polarity);
GatePolarity gate_polarity_from_string(const std::string& name);

struct CounterattackConfig {
  double eps = 4.0 / 255.0;        // counterattack budget eps_ca; 0 disables the defense
  int steps = 4;                   // T
  double step_size = 3.0 / 255.0;  // alpha
  double lambda = 1.0;             // orthogonal injection strength
  double mu = 0.9;                 // momentum factor, in [0, 1)
  int num_probes = 8;              // M, sensitivity probe count
  double tau = 0.0;                // gate threshold (harness calibrates)
  double gamma = 50.0;             // gate sharpness
  ProbeNoise probe_noise = ProbeNoise::UniformBall;
  GatePolarity gate_polarity = GatePolarity::Standard;
  bool use_gate = true;            // false forces w = 1
  std::uint64_t seed = 0;

  void validate() const;
};

// Momentum accumulator, zero-initialized.
struct MomentumState {
  std::vector<double> m;

  static MomentumState zeros(int n) { return MomentumState{std::vector<double>(n, 0.0)}; }
};

// Directional sensitivity score and the blend weight derived from it.
struct DssResult {
  double tau_hat = 0.0;  // 1 - mean probe cosine, in [0, 2]
  double weight = 1.0;   // blend weight w, in (0, 1)
};

struct CounterattackOutcome {
  ImageTensor delta_ca;    // final counterattack perturbation
  ImageTensor delta_init;  // the initial uniform draw, reused in the blend
  std::optional<DssResult> dss;
  std::vector<std::vector<double>> step_directions;  // applied update per step
  std::vector<double> step_delta_maxabs;             // |delta|_inf after each step
};

struct NormalizedGradient {
  ImageTensor direction;  // unit l2 norm, or zero when degenerate
  bool degenerate = false;
};

// Gradient of |I(x + delta) - I(x)|_2 w.r.t. the perturbed input, scaled to
// unit l2 norm. Gradient norms below 1e-12 are flagged degenerate and return
// the zero vector.
NormalizedGradient normalized_gradient(const Encoder& encoder, const ImageTensor& x_input,
                                       const ImageTensor& delta);

// Component of r orthogonal to the unit vector g, normalized. When the
// residual norm falls below 1e-12 the draw is retried from rng up to 8
// times before giving up and returning the zero vector.
std::vector<double> orthogonal_component(const std::vector<double>& g,
                                         const std::vector<double>& r, Rng& rng);

// g + lambda * r_perp.
std::vector<double> composite_direction(const std::vector<double>& g,
                                        const std::vector<double>& r_perp, double lambda);

// m <- mu * m + (1 - mu) * d.
MomentumState momentum_update(const MomentumState& state, const std::vector<double>& d,
                              double mu);

// delta <- project_linf(delta + alpha * sign(m)), with sign(0) = 0.
ImageTensor doc_step(const ImageTensor& delta, const MomentumState& momentum, double alpha,
                     double eps);

// tau_hat = 1 - mean cosine between the embedding of x and of its M probed
// variants. Probes are clipped to [0, 1] before encoding. The overload
// without an Rng derives the probe stream from (config.seed,
// stream_tag::kSensitivityProbe).
double directional_sensitivity(const Encoder& encoder, const ImageTensor& x_input,
                               const CounterattackConfig& config);
double directional_sensitivity(const Encoder& encoder, const ImageTensor& x_input,
                               const CounterattackConfig& config, Rng& rng);

// Logistic gate w = sigmoid(gamma * (tau - tau_hat)), strictly in (0, 1).
double gate_weight(double tau_hat, double tau, double gamma);

// Baseline counterattack: uniform init, then T sign-gradient ascent steps on
// the embedding distance to the undisturbed input. No orthogonal term, no
// momentum, no gating.
CounterattackOutcome ttc_counterattack(const Encoder& encoder, const ImageTensor& x_input,
                                       const CounterattackConfig& config);

// Full counterattack: sensitivity score and gate weight, then T steps of
// orthogonal-augmented momentum ascent, then the final blend
// delta <- w * delta + (1 - w) * delta_init.
CounterattackOutcome doc_counterattack(const Encoder& encoder, const ImageTensor& x_input,
                                       const CounterattackConfig& config);

// clip_to_image(x + delta_ca).
ImageTensor apply_defense(const ImageTensor& x_input, const CounterattackOutcome& outcome);

}  // namespace docdef
