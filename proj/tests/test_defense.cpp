#include <doctest.h>

#include <cmath>

#include "docdef/defense.hpp"
#include "test_util.hpp"

using namespace docdef;
using testutil::max_abs_diff;
using testutil::random_image;

namespace {

const double kEps = 4.0 / 255.0;

CounterattackConfig base_config() {
  CounterattackConfig cfg;
  cfg.eps = kEps;
  cfg.steps = 4;
  cfg.step_size = 3.0 / 255.0;
  cfg.seed = 31;
  return cfg;
}

Encoder small_mlp() { return build_encoder(EncoderKind::Mlp, {6, 5, 4}, 3); }

}  // namespace

TEST_CASE("normalized_gradient: unit norm away from the anchor") {
  Rng rng(8);
  const Encoder enc = small_mlp();
  const ImageTensor x = random_image(Shape{1, 2, 3}, rng);
  ImageTensor delta = ImageTensor::zeros(x.shape);
  for (double& v : delta.data) v = 0.01 * rng.normal();
  const NormalizedGradient ng = normalized_gradient(enc, x, delta);
  CHECK(!ng.degenerate);
  CHECK(std::fabs(l2_norm(ng.direction.data) - 1.0) <= 1e-12);
}

TEST_CASE("normalized_gradient: degenerate at zero perturbation") {
  Rng rng(9);
  const Encoder enc = small_mlp();
  const ImageTensor x = random_image(Shape{1, 2, 3}, rng);
  const NormalizedGradient ng = normalized_gradient(enc, x, ImageTensor::zeros(x.shape));
  CHECK(ng.degenerate);
  for (double v : ng.direction.data) CHECK(v == 0.0);
}

TEST_CASE("normalized_gradient: linear closed form W^T W delta") {
  Rng rng(10);
  const Encoder enc = build_encoder(EncoderKind::Linear, {6, 4}, 12);
  const ImageTensor x = random_image(Shape{1, 2, 3}, rng);
  ImageTensor delta = ImageTensor::zeros(x.shape);
  for (double& v : delta.data) v = 0.02 * rng.normal();

  const DenseLayer& layer = enc.layers()[0];
  std::vector<double> w_delta(4, 0.0);
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 6; ++j) {
      w_delta[static_cast<std::size_t>(i)] +=
          layer.weights[static_cast<std::size_t>(i * 6 + j)] * delta.data[static_cast<std::size_t>(j)];
    }
  }
  std::vector<double> expected(6, 0.0);
  for (int j = 0; j < 6; ++j) {
    for (int i = 0; i < 4; ++i) {
      expected[static_cast<std::size_t>(j)] +=
          layer.weights[static_cast<std::size_t>(i * 6 + j)] * w_delta[static_cast<std::size_t>(i)];
    }
  }
  const double n = l2_norm(expected);
  for (double& v : expected) v /= n;

  const NormalizedGradient ng = normalized_gradient(enc, x, delta);
  CHECK(!ng.degenerate);
  CHECK(max_abs_diff(ng.direction.data, expected) <= 1e-12);
}

TEST_CASE("orthogonal_component: hand projections") {
  Rng rng(1);
  const std::vector<double> a = orthogonal_component({1.0, 0.0}, {1.0, 1.0}, rng);
  CHECK(a[0] == doctest::Approx(0.0).epsilon(0.0));
  CHECK(a[1] == doctest::Approx(1.0).epsilon(0.0));
  const std::vector<double> b = orthogonal_component({0.0, 1.0}, {2.0, 0.0}, rng);
  CHECK(b[0] == doctest::Approx(1.0).epsilon(0.0));
  CHECK(b[1] == doctest::Approx(0.0).epsilon(0.0));
}

TEST_CASE("orthogonal_component: dimension-100 seeded draws") {
  Rng rng(123);
  std::vector<double> g(100);
  for (double& v : g) v = rng.normal();
  const double gn = l2_norm(g);
  for (double& v : g) v /= gn;
  std::vector<double> r(100);
  for (double& v : r) v = rng.normal();
  const std::vector<double> perp = orthogonal_component(g, r, rng);
  CHECK(std::fabs(dot(perp, g)) <= 1e-10);
  CHECK(std::fabs(l2_norm(perp) - 1.0) <= 1e-10);
}

TEST_CASE("orthogonal_component: parallel draw is resampled") {
  Rng rng(7);
  const std::vector<double> g = {1.0, 0.0, 0.0};
  std::vector<double> r = {2.0, 0.0, 0.0};  // exactly parallel
  const std::vector<double> perp = orthogonal_component(g, r, rng);
  CHECK(std::fabs(dot(perp, g)) <= 1e-10);
  CHECK(std::fabs(l2_norm(perp) - 1.0) <= 1e-10);
}

TEST_CASE("orthogonal_component: impossible orthogonalization returns zero") {
  // in one dimension every draw is parallel, so resampling runs out
  Rng rng(7);
  const std::vector<double> perp = orthogonal_component({1.0}, {0.5}, rng);
  REQUIRE(perp.size() == 1);
  CHECK(perp[0] == 0.0);
}

TEST_CASE("composite_direction: lambda scaling and Pythagoras") {
  const std::vector<double> g = {1.0, 0.0};
  const std::vector<double> r_perp = {0.0, 1.0};
  CHECK(composite_direction(g, r_perp, 0.0) == g);
  const std::vector<double> d = composite_direction(g, r_perp, 1.0);
  CHECK(d == std::vector<double>{1.0, 1.0});
  for (double lambda : {0.3, 1.0, 2.5}) {
    const std::vector<double> dl = composite_direction(g, r_perp, lambda);
    CHECK(dot(dl, dl) == doctest::Approx(1.0 + lambda * lambda).epsilon(1e-14));
  }
}

TEST_CASE("momentum_update: zero init and mu extremes") {
  const std::vector<double> d = {0.5, -1.0, 2.0};
  MomentumState m = MomentumState::zeros(3);
  m = momentum_update(m, d, 0.25);
  for (std::size_t i = 0; i < 3; ++i) CHECK(m.m[i] == doctest::Approx(0.75 * d[i]).epsilon(1e-15));

  MomentumState z = MomentumState::zeros(3);
  z = momentum_update(z, d, 0.0);
  CHECK(z.m == d);
  z = momentum_update(z, d, 0.0);
  CHECK(z.m == d);
}

TEST_CASE("momentum_update: constant-direction closed form (1 - mu^t) d") {
  const std::vector<double> d = {0.7, -0.3, 1.1, 0.02};
  for (double mu : {0.0, 0.5, 0.9}) {
    MomentumState m = MomentumState::zeros(4);
    for (int t = 1; t <= 10; ++t) {
      m = momentum_update(m, d, mu);
      std::vector<double> expected(4);
      const double factor = 1.0 - std::pow(mu, t);
      for (std::size_t i = 0; i < 4; ++i) expected[i] = factor * d[i];
      CHECK(max_abs_diff(m.m, expected) <= 1e-12);
    }
  }
}

TEST_CASE("doc_step: sign steps and projection") {
  const Shape shape{1, 1, 4};
  const double alpha = 3.0 / 255.0;
  ImageTensor delta = ImageTensor::zeros(shape);
  MomentumState m{std::vector<double>{0.2, 5.0, 0.01, 3.3}};
  delta = doc_step(delta, m, alpha, kEps);
  for (double v : delta.data) CHECK(v == doctest::Approx(alpha).epsilon(0.0));
  delta = doc_step(delta, m, alpha, kEps);
  for (double v : delta.data) CHECK(v == doctest::Approx(kEps).epsilon(1e-15));

  // sign(0) = 0 leaves coordinates in place
  const MomentumState zero{std::vector<double>(4, 0.0)};
  const ImageTensor same = doc_step(delta, zero, alpha, kEps);
  CHECK(same.data == delta.data);
}

TEST_CASE("directional_sensitivity: constant encoder scores zero") {
  DenseLayer layer{4, 2, std::vector<double>(8, 0.0), {0.7, -0.4}};
  const Encoder enc(EncoderKind::Linear, {layer});
  const ImageTensor x({0.3, 0.6, 0.1, 0.9}, Shape{1, 1, 4});
  CounterattackConfig cfg = base_config();
  cfg.num_probes = 8;
  CHECK(std::fabs(directional_sensitivity(enc, x, cfg)) <= 1e-12);
}

TEST_CASE("directional_sensitivity: collinear embeddings score zero") {
  // every input maps onto the (1, 1) ray, so probes stay parallel
  DenseLayer layer{2, 2, {1.0, 1.0, 1.0, 1.0}, {0.0, 0.0}};
  const Encoder enc(EncoderKind::Linear, {layer});
  const ImageTensor x({0.5, 0.5}, Shape{1, 1, 2});
  CounterattackConfig cfg = base_config();
  cfg.num_probes = 1;
  CHECK(std::fabs(directional_sensitivity(enc, x, cfg)) <= 1e-12);

  // the same fact checked directly on the score arithmetic
  const double eps = kEps;
  CHECK(1.0 - cosine_score({0.5 + eps, 0.5 + eps}, {0.5, 0.5}) <= 1e-12);
}

TEST_CASE("directional_sensitivity: matches a straight-line reimplementation") {
  Rng img_rng(55);
  const Encoder enc = small_mlp();
  const ImageTensor x = random_image(Shape{1, 2, 3}, img_rng);
  for (ProbeNoise noise : {ProbeNoise::UniformBall, ProbeNoise::SignGaussian}) {
    CounterattackConfig cfg = base_config();
    cfg.num_probes = 8;
    cfg.probe_noise = noise;
    cfg.seed = 11;

    Rng rng(derive_seed(cfg.seed, stream_tag::kSensitivityProbe));
    const Embedding base = enc.encode(x);
    double cos_sum = 0.0;
    for (int m = 0; m < cfg.num_probes; ++m) {
      ImageTensor probe = x;
      for (double& v : probe.data) {
        double eta;
        if (noise == ProbeNoise::UniformBall) {
          eta = rng.uniform(-cfg.eps, cfg.eps);
        } else {
          const double n = rng.normal();
          eta = cfg.eps * (n > 0.0 ? 1.0 : (n < 0.0 ? -1.0 : 0.0));
        }
        v = std::clamp(v + eta, 0.0, 1.0);
      }
      cos_sum += cosine_score(enc.encode(probe), base);
    }
    const double expected = 1.0 - cos_sum / cfg.num_probes;
    CHECK(std::fabs(directional_sensitivity(enc, x, cfg) - expected) <= 1e-12);
  }
}

TEST_CASE("directional_sensitivity: stays in [0, 2]") {
  Rng rng(66);
  const Encoder enc = small_mlp();
  CounterattackConfig cfg = base_config();
  cfg.num_probes = 4;
  for (int c = 0; c < 25; ++c) {
    cfg.seed = static_cast<std::uint64_t>(c);
    const double tau_hat = directional_sensitivity(enc, random_image(Shape{1, 2, 3}, rng), cfg);
    CHECK(tau_hat >= 0.0);
    CHECK(tau_hat <= 2.0);
  }
}

TEST_CASE("gate_weight: exact midpoint and saturation") {
  for (double gamma : {1.0, 50.0, 500.0}) {
    CHECK(gate_weight(0.37, 0.37, gamma) == 0.5);
  }
  CHECK(gate_weight(0.0, 20.0 / 50.0, 50.0) >= 1.0 - 1e-8);   // argument +20
  CHECK(gate_weight(20.0 / 50.0, 0.0, 50.0) <= 1e-8);          // argument -20
  CHECK(gate_weight(0.1, 0.2, 50.0) > 0.0);
  CHECK(gate_weight(0.1, 0.2, 50.0) < 1.0);
  CHECK_THROWS_AS(gate_weight(0.1, 0.2, 0.0), std::invalid_argument);
}

TEST_CASE("ttc_counterattack: zero steps return the uniform init") {
  Rng rng(71);
  const Encoder enc = small_mlp();
  const ImageTensor x = random_image(Shape{1, 2, 3}, rng);
  CounterattackConfig cfg = base_config();
  cfg.steps = 0;
  const CounterattackOutcome out = ttc_counterattack(enc, x, cfg);
  CHECK(out.delta_ca.data == out.delta_init.data);
  CHECK(linf_norm(out.delta_init.data) <= cfg.eps);
  CHECK(!out.dss.has_value());
}

TEST_CASE("counterattacks respect the budget after every step and the blend") {
  Rng rng(72);
  const Encoder enc = small_mlp();
  CounterattackConfig cfg = base_config();
  for (int c = 0; c < 10; ++c) {
    cfg.seed = static_cast<std::uint64_t>(100 + c);
    const ImageTensor x = random_image(Shape{1, 2, 3}, rng);
    for (bool doc : {false, true}) {
      cfg.tau = 0.01;
      const CounterattackOutcome out =
          doc ? doc_counterattack(enc, x, cfg) : ttc_counterattack(enc, x, cfg);
      for (double b : out.step_delta_maxabs) CHECK(b <= cfg.eps + 1e-12);
      CHECK(linf_norm(out.delta_ca.data) <= cfg.eps + 1e-12);
      const ImageTensor defended = apply_defense(x, out);
      CHECK(defended.valid_image());
    }
  }
}

TEST_CASE("doc reduces to ttc with lambda 0, mu 0 and the gate off") {
  Rng rng(73);
  const Encoder enc = small_mlp();
  CounterattackConfig cfg = base_config();
  cfg.lambda = 0.0;
  cfg.mu = 0.0;
  cfg.use_gate = false;
  for (int c = 0; c < 10; ++c) {
    cfg.seed = static_cast<std::uint64_t>(200 + c);
    const ImageTensor x = random_image(Shape{1, 2, 3}, rng);
    const CounterattackOutcome ttc = ttc_counterattack(enc, x, cfg);
    const CounterattackOutcome doc = doc_counterattack(enc, x, cfg);
    CHECK(max_abs_diff(ttc.delta_ca.data, doc.delta_ca.data) <= 1e-12);
    CHECK(ttc.delta_init.data == doc.delta_init.data);  // shared init stream
  }
}

TEST_CASE("doc blend of two in-budget vectors stays in budget") {
  Rng rng(74);
  const Encoder enc = small_mlp();
  CounterattackConfig cfg = base_config();
  cfg.tau = 0.005;
  cfg.gamma = 10.0;  // keep w well inside (0, 1)
  const ImageTensor x = random_image(Shape{1, 2, 3}, rng);
  const CounterattackOutcome out = doc_counterattack(enc, x, cfg);
  REQUIRE(out.dss.has_value());
  CHECK(out.dss->weight > 0.0);
  CHECK(out.dss->weight < 1.0);
  CHECK(linf_norm(out.delta_ca.data) <= cfg.eps + 1e-12);
}

TEST_CASE("doc_counterattack is deterministic per (seed, config, input)") {
  Rng rng(75);
  const Encoder enc = small_mlp();
  const ImageTensor x = random_image(Shape{1, 2, 3}, rng);
  CounterattackConfig cfg = base_config();
  cfg.tau = 0.01;
  const CounterattackOutcome a = doc_counterattack(enc, x, cfg);
  const CounterattackOutcome b = doc_counterattack(enc, x, cfg);
  CHECK(a.delta_ca.data == b.delta_ca.data);
  CHECK(a.delta_init.data == b.delta_init.data);
  CHECK(a.dss->tau_hat == b.dss->tau_hat);
  CHECK(a.dss->weight == b.dss->weight);

  cfg.seed += 1;
  const CounterattackOutcome c = doc_counterattack(enc, x, cfg);
  CHECK(a.delta_ca.data != c.delta_ca.data);
}

TEST_CASE("apply_defense: identity at zero delta, clipped output, bounded move") {
  Rng rng(76);
  const Encoder enc = small_mlp();
  const ImageTensor x = random_image(Shape{1, 2, 3}, rng);
  CounterattackOutcome zero;
  zero.delta_ca = ImageTensor::zeros(x.shape);
  zero.delta_init = ImageTensor::zeros(x.shape);
  CHECK(apply_defense(x, zero).data == x.data);

  CounterattackConfig cfg = base_config();
  const CounterattackOutcome out = ttc_counterattack(enc, x, cfg);
  const ImageTensor defended = apply_defense(x, out);
  CHECK(defended.valid_image());
  double worst = 0.0;
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    worst = std::max(worst, std::fabs(defended.data[i] - x.data[i]));
  }
  CHECK(worst <= cfg.eps + 1e-12);
}

TEST_CASE("config validation catches bad ranges") {
  CounterattackConfig cfg = base_config();
  cfg.mu = 1.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = base_config();
  cfg.num_probes = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = base_config();
  cfg.gamma = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = base_config();
  cfg.eps = -0.1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
