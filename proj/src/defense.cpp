#include "docdef/defense.hpp"

#include <cmath>
#include <stdexcept>

namespace docdef {

const char* to_string(ProbeNoise noise) {
  return noise == ProbeNoise::UniformBall ? "uniform_ball" : "sign_gaussian";
}

ProbeNoise probe_noise_from_string(const std::string& name) {
  if (name == "uniform_ball" || name == "uniform") return ProbeNoise::UniformBall;
  if (name == "sign_gaussian" || name == "sign") return ProbeNoise::SignGaussian;
  throw std::invalid_argument("unknown probe noise '" + name + "'");
}

const char* to_string(GatePolarity polarity) {
  return polarity == GatePolarity::Standard ? "standard" : "inverted";
}

GatePolarity gate_polarity_from_string(const std::string& name) {
  if (name == "standard") return GatePolarity::Standard;
  if (name == "inverted") return GatePolarity::Inverted;
  throw std::invalid_argument("unknown gate polarity '" + name + "'");
}

void CounterattackConfig::validate() const {
  if (!(eps >= 0.0)) throw std::invalid_argument("counterattack eps must be nonnegative");
  if (steps < 0) throw std::invalid_argument("counterattack steps must be nonnegative");
  if (!(step_size > 0.0)) throw std::invalid_argument("counterattack step_size must be positive");
  if (!(lambda >= 0.0)) throw std::invalid_argument("lambda must be nonnegative");
  if (!(mu >= 0.0 && mu < 1.0)) throw std::invalid_argument("mu must lie in [0, 1)");
  if (num_probes < 1) throw std::invalid_argument("num_probes must be at least 1");
  if (!(gamma > 0.0)) throw std::invalid_argument("gamma must be positive");
}

namespace {

constexpr double kDegenerateNorm = 1e-12;

inline double sgn(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

void require_valid_image(const ImageTensor& x, const char* what) {
  require_consistent(x, what);
  if (!x.valid_image()) {
    throw std::invalid_argument(std::string(what) + ": input is not a valid image in [0, 1]");
  }
}

ImageTensor draw_uniform_delta(Shape shape, double eps, Rng& rng) {
  ImageTensor delta = ImageTensor::zeros(shape);
  for (double& v : delta.data) v = rng.uniform(-eps, eps);
  return delta;
}

ImageTensor signed_step(const ImageTensor& delta, std::span<const double> direction,
                        double alpha, double eps) {
  ImageTensor next = delta;
  for (std::size_t i = 0; i < next.data.size(); ++i) {
    next.data[i] += alpha * sgn(direction[i]);
  }
  return project_linf(std::move(next), eps);
}

}  // namespace

NormalizedGradient normalized_gradient(const Encoder& encoder, const ImageTensor& x_input,
                                       const ImageTensor& delta) {
  require_consistent(x_input, "normalized_gradient");
  if (delta.data.size() != x_input.data.size()) {
    throw std::invalid_argument("normalized_gradient: delta shape mismatch");
  }
  const EmbeddingLoss loss = L2ToAnchorLoss{encoder.encode(x_input)};
  auto [value, grad] = loss_value_and_input_gradient(encoder, add(x_input, delta), loss);
  (void)value;
  const double n = l2_norm(grad.data);
  NormalizedGradient out{ImageTensor::zeros(x_input.shape), true};
  if (n >= kDegenerateNorm) {
    out.degenerate = false;
    out.direction = std::move(grad);
    for (double& v : out.direction.data) v /= n;
  }
  return out;
}

std::vector<double> orthogonal_component(const std::vector<double>& g,
                                         const std::vector<double>& r, Rng& rng) {
  if (g.size() != r.size()) {
    throw std::invalid_argument("orthogonal_component: dimension mismatch");
  }
  std::vector<double> candidate = r;
  for (int attempt = 0; attempt <= 8; ++attempt) {
    const double proj = dot(candidate, g);
    std::vector<double> residual(candidate.size());
    for (std::size_t i = 0; i < candidate.size(); ++i) residual[i] = candidate[i] - proj * g[i];
    const double n = l2_norm(residual);
    if (n >= kDegenerateNorm) {
      for (double& v : residual) v /= n;
      return residual;
    }
    for (double& v : candidate) v = rng.normal();
  }
  return std::vector<double>(g.size(), 0.0);
}

std::vector<double> composite_direction(const std::vector<double>& g,
                                        const std::vector<double>& r_perp, double lambda) {
  if (g.size() != r_perp.size()) {
    throw std::invalid_argument("composite_direction: dimension mismatch");
  }
  std::vector<double> d(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) d[i] = g[i] + lambda * r_perp[i];
  return d;
}

MomentumState momentum_update(const MomentumState& state, const std::vector<double>& d,
                              double mu) {
  if (state.m.size() != d.size()) {
    throw std::invalid_argument("momentum_update: dimension mismatch");
  }
  MomentumState next;
  next.m.resize(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) next.m[i] = mu * state.m[i] + (1.0 - mu) * d[i];
  return next;
}

ImageTensor doc_step(const ImageTensor& delta, const MomentumState& momentum, double alpha,
                     double eps) {
  if (momentum.m.size() != delta.data.size()) {
    throw std::invalid_argument("doc_step: momentum shape mismatch");
  }
  return signed_step(delta, momentum.m, alpha, eps);
}

double directional_sensitivity(const Encoder& encoder, const ImageTensor& x_input,
                               const CounterattackConfig& config) {
  Rng rng(derive_seed(config.seed, stream_tag::kSensitivityProbe));
  return directional_sensitivity(encoder, x_input, config, rng);
}

double directional_sensitivity(const Encoder& encoder, const ImageTensor& x_input,
                               const CounterattackConfig& config, Rng& rng) {
  config.validate();
  require_valid_image(x_input, "directional_sensitivity");
  const Embedding base = encoder.encode(x_input);
  double cos_sum = 0.0;
  ImageTensor probe = x_input;
  for (int m = 0; m < config.num_probes; ++m) {
    for (std::size_t i = 0; i < probe.data.size(); ++i) {
      const double eta = config.probe_noise == ProbeNoise::UniformBall
                             ? rng.uniform(-config.eps, config.eps)
                             : config.eps * sgn(rng.normal());
      probe.data[i] = x_input.data[i] + eta;
    }
    probe = clip_to_image(std::move(probe));
    cos_sum += cosine_score(encoder.encode(probe), base);
  }
  return 1.0 - cos_sum / static_cast<double>(config.num_probes);
}

double gate_weight(double tau_hat, double tau, double gamma) {
  if (!(gamma > 0.0)) throw std::invalid_argument("gate_weight: gamma must be positive");
  return 1.0 / (1.0 + std::exp(-gamma * (tau - tau_hat)));
}

CounterattackOutcome ttc_counterattack(const Encoder& encoder, const ImageTensor& x_input,
                                       const CounterattackConfig& config) {
  config.validate();
  require_valid_image(x_input, "ttc_counterattack");

  Rng rng_init(derive_seed(config.seed, stream_tag::kCounterattackInit));
  CounterattackOutcome out;
  out.delta_init = draw_uniform_delta(x_input.shape, config.eps, rng_init);
  out.delta_ca = out.delta_init;

  const EmbeddingLoss loss = L2ToAnchorLoss{encoder.encode(x_input)};
  for (int t = 0; t < config.steps; ++t) {
    auto [value, grad] = loss_value_and_input_gradient(encoder, add(x_input, out.delta_ca), loss);
    (void)value;
    out.delta_ca = signed_step(out.delta_ca, grad.data, config.step_size, config.eps);
    std::vector<double> applied(grad.data.size());
    for (std::size_t i = 0; i < applied.size(); ++i) {
      applied[i] = config.step_size * sgn(grad.data[i]);
    }
    out.step_directions.push_back(std::move(applied));
    out.step_delta_maxabs.push_back(linf_norm(out.delta_ca.data));
  }
  return out;
}

CounterattackOutcome doc_counterattack(const Encoder& encoder, const ImageTensor& x_input,
                                       const CounterattackConfig& config) {
  config.validate();
  require_valid_image(x_input, "doc_counterattack");

  Rng rng_probe(derive_seed(config.seed, stream_tag::kSensitivityProbe));
  Rng rng_init(derive_seed(config.seed, stream_tag::kCounterattackInit));
  Rng rng_orth(derive_seed(config.seed, stream_tag::kOrthogonalDraw));

  const double tau_hat = directional_sensitivity(encoder, x_input, config, rng_probe);
  double weight = 1.0;
  if (config.use_gate) {
    weight = config.gate_polarity == GatePolarity::Standard
                 ? gate_weight(tau_hat, config.tau, config.gamma)
                 : gate_weight(config.tau, tau_hat, config.gamma);
  }

  CounterattackOutcome out;
  out.delta_init = draw_uniform_delta(x_input.shape, config.eps, rng_init);
  out.delta_ca = out.delta_init;
  out.dss = DssResult{tau_hat, weight};

  const int n = x_input.size();
  MomentumState momentum = MomentumState::zeros(n);
  std::vector<double> fixed_axis(static_cast<std::size_t>(n), 0.0);
  fixed_axis[0] = 1.0;

  for (int t = 0; t < config.steps; ++t) {
    const NormalizedGradient ng = normalized_gradient(encoder, x_input, out.delta_ca);
    std::vector<double> r(static_cast<std::size_t>(n));
    for (double& v : r) v = rng_orth.normal();

    std::vector<double> direction;
    if (ng.degenerate) {
      // No usable gradient: explore purely along a random orthogonal
      // direction anchored to a fixed axis.
      std::vector<double> r_perp = orthogonal_component(fixed_axis, r, rng_orth);
      direction.assign(r_perp.size(), 0.0);
      for (std::size_t i = 0; i < r_perp.size(); ++i) direction[i] = config.lambda * r_perp[i];
    } else {
      std::vector<double> r_perp = orthogonal_component(ng.direction.data, r, rng_orth);
      direction = composite_direction(ng.direction.data, r_perp, config.lambda);
    }

    momentum = momentum_update(momentum, direction, config.mu);
    out.delta_ca = doc_step(out.delta_ca, momentum, config.step_size, config.eps);

    std::vector<double> applied(static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < applied.size(); ++i) {
      applied[i] = config.step_size * sgn(momentum.m[i]);
    }
    out.step_directions.push_back(std::move(applied));
    out.step_delta_maxabs.push_back(linf_norm(out.delta_ca.data));
  }

  for (std::size_t i = 0; i < out.delta_ca.data.size(); ++i) {
    out.delta_ca.data[i] = weight * out.delta_ca.data[i] + (1.0 - weight) * out.delta_init.data[i];
  }
  return out;
}

ImageTensor apply_defense(const ImageTensor& x_input, const CounterattackOutcome& outcome) {
  return clip_to_image(add(x_input, outcome.delta_ca));
}

}  // namespace docdef
