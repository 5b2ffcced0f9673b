#include <doctest.h>

#include <filesystem>
#include <stdexcept>

#include "docdef/gradient.hpp"
#include "docdef/rng.hpp"
#include "test_util.hpp"

using namespace docdef;
using testutil::max_abs_diff;
using testutil::random_image;
using testutil::rel_l2_error;

namespace {

Encoder identity_encoder_2d() {
  DenseLayer layer{2, 2, {1.0, 0.0, 0.0, 1.0}, {0.0, 0.0}};
  return Encoder(EncoderKind::Linear, {layer});
}

EmbeddingLoss random_loss(const Encoder& encoder, Rng& rng, int k) {
  const int d = encoder.output_dim();
  const int pick = static_cast<int>(rng.next_u64() % 3);
  if (pick == 0) {
    Embedding anchor(static_cast<std::size_t>(d));
    for (double& v : anchor) v = rng.normal();
    return L2ToAnchorLoss{anchor};
  }
  ClassAnchorSet anchors;
  for (int c = 0; c < k; ++c) {
    Embedding a(static_cast<std::size_t>(d));
    for (double& v : a) v = rng.normal();
    anchors.anchors.push_back(a);
    anchors.class_names.push_back("class" + std::to_string(c));
  }
  const int label = static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(k));
  if (pick == 1) return CrossEntropyLossOnAnchors{anchors, label, 1.0};
  return CwMarginLossOnAnchors{anchors, label};
}

}  // namespace

TEST_CASE("encode: identity weights reproduce the input") {
  const Encoder enc = identity_encoder_2d();
  const ImageTensor x({0.2, 0.5}, Shape{1, 1, 2});
  const Embedding e = enc.encode(x);
  CHECK(e[0] == doctest::Approx(0.2).epsilon(0.0));
  CHECK(e[1] == doctest::Approx(0.5).epsilon(0.0));
}

TEST_CASE("encode: hand matrix-vector product") {
  DenseLayer layer{2, 2, {1.0, 1.0, 1.0, -1.0}, {0.0, 0.0}};
  const Encoder enc(EncoderKind::Linear, {layer});
  const Embedding e = enc.encode(ImageTensor({1.0, 0.0}, Shape{1, 1, 2}));
  CHECK(e[0] == 1.0);
  CHECK(e[1] == 1.0);
}

TEST_CASE("encode: mlp forward matches an independent reimplementation") {
  const Encoder enc = build_encoder(EncoderKind::Mlp, {2, 3, 2}, 17);
  const std::vector<double> x = {0.1, 0.9};
  const Embedding got = enc.encode(ImageTensor(x, Shape{1, 1, 2}));
  const std::vector<double> want = testutil::reference_forward(enc, x);
  CHECK(max_abs_diff(got, want) == 0.0);
}

TEST_CASE("encode: dimension mismatch is rejected") {
  const Encoder enc = identity_encoder_2d();
  CHECK_THROWS_AS(enc.encode(ImageTensor({0.1, 0.2, 0.3}, Shape{1, 1, 3})),
                  std::invalid_argument);
}

TEST_CASE("encode is pure: repeated calls are bit-identical") {
  const Encoder enc = build_encoder(EncoderKind::Mlp, {6, 5, 4}, 3);
  Rng rng(99);
  const ImageTensor x = random_image(Shape{1, 2, 3}, rng);
  const Embedding a = enc.encode(x);
  const Embedding b = enc.encode(x);
  CHECK(a == b);
}

TEST_CASE("encode: non-finite intermediates name the layer") {
  DenseLayer layer{2, 2, {1e308, 1e308, 0.0, 1.0}, {0.0, 0.0}};
  const Encoder enc(EncoderKind::Linear, {layer});
  CHECK_THROWS_WITH_AS(enc.encode(ImageTensor({1.0, 1.0}, Shape{1, 1, 2})),
                       doctest::Contains("layer 0"), std::runtime_error);
}

TEST_CASE("build_encoder: determinism and shapes") {
  const Encoder a = build_encoder(EncoderKind::Linear, {4, 3}, 5);
  const Encoder b = build_encoder(EncoderKind::Linear, {4, 3}, 5);
  CHECK(a.layers().size() == 1);
  CHECK(a.layers()[0].weights.size() == 12);
  CHECK(a.layers()[0].bias.size() == 3);
  CHECK(a.layers()[0].weights == b.layers()[0].weights);
  CHECK(a.layers()[0].bias == b.layers()[0].bias);

  const Encoder c = build_encoder(EncoderKind::Linear, {4, 3}, 6);
  CHECK(a.layers()[0].weights != c.layers()[0].weights);
}

TEST_CASE("build_encoder: invalid layer lists are rejected") {
  CHECK_THROWS_AS(build_encoder(EncoderKind::Linear, {}, 1), std::invalid_argument);
  CHECK_THROWS_AS(build_encoder(EncoderKind::Linear, {4}, 1), std::invalid_argument);
  CHECK_THROWS_AS(build_encoder(EncoderKind::Linear, {4, 3, 2}, 1), std::invalid_argument);
  CHECK_THROWS_AS(build_encoder(EncoderKind::Mlp, {4, 0, 2}, 1), std::invalid_argument);
}

TEST_CASE("encoder serialization round trip is exact") {
  namespace fs = std::filesystem;
  const Encoder enc = build_encoder(EncoderKind::Mlp, {5, 4, 3}, 42);
  const fs::path path = fs::temp_directory_path() / "docdef_encoder_roundtrip.txt";
  save_encoder(enc, path.string());
  const Encoder loaded = load_encoder(path.string());
  fs::remove(path);

  REQUIRE(loaded.kind() == enc.kind());
  REQUIRE(loaded.layer_dims() == enc.layer_dims());
  for (std::size_t l = 0; l < enc.layers().size(); ++l) {
    CHECK(loaded.layers()[l].weights == enc.layers()[l].weights);
    CHECK(loaded.layers()[l].bias == enc.layers()[l].bias);
  }
}

TEST_CASE("gradient: linear closed form W^T (W delta) / |W delta|") {
  Rng rng(12);
  const Encoder enc = build_encoder(EncoderKind::Linear, {6, 4}, 8);
  const ImageTensor x = random_image(Shape{1, 2, 3}, rng);
  ImageTensor delta = ImageTensor::zeros(x.shape);
  for (double& v : delta.data) v = 0.01 * rng.normal();

  const EmbeddingLoss loss = L2ToAnchorLoss{enc.encode(x)};
  const auto [value, grad] = loss_value_and_input_gradient(enc, add(x, delta), loss);

  // closed form
  const DenseLayer& layer = enc.layers()[0];
  std::vector<double> w_delta(4, 0.0);
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 6; ++j) {
      w_delta[static_cast<std::size_t>(i)] +=
          layer.weights[static_cast<std::size_t>(i * 6 + j)] * delta.data[static_cast<std::size_t>(j)];
    }
  }
  const double n = l2_norm(w_delta);
  CHECK(value == doctest::Approx(n).epsilon(1e-12));
  std::vector<double> expected(6, 0.0);
  for (int j = 0; j < 6; ++j) {
    for (int i = 0; i < 4; ++i) {
      expected[static_cast<std::size_t>(j)] +=
          layer.weights[static_cast<std::size_t>(i * 6 + j)] * w_delta[static_cast<std::size_t>(i)] / n;
    }
  }
  CHECK(rel_l2_error(grad.data, expected) < 1e-12);
}

TEST_CASE("gradient: defined as zero exactly at the anchor point") {
  const Encoder enc = build_encoder(EncoderKind::Mlp, {4, 3, 2}, 2);
  Rng rng(5);
  const ImageTensor x = random_image(Shape{1, 2, 2}, rng);
  const EmbeddingLoss loss = L2ToAnchorLoss{enc.encode(x)};
  const auto [value, grad] = loss_value_and_input_gradient(enc, x, loss);
  CHECK(value == 0.0);
  for (double g : grad.data) CHECK(g == 0.0);
}

TEST_CASE("gradient: analytic matches central finite differences on 100 seeded cases") {
  const double h = 1e-5;
  for (EncoderKind kind : {EncoderKind::Linear, EncoderKind::Mlp}) {
    const std::vector<int> dims =
        kind == EncoderKind::Linear ? std::vector<int>{12, 6} : std::vector<int>{12, 8, 6};
    double worst = 0.0;
    for (int c = 0; c < 100; ++c) {
      Rng rng(derive_seed(1000, static_cast<std::uint64_t>(c)));
      const Encoder enc = build_encoder(kind, dims, rng.next_u64());
      const ImageTensor x = random_image(Shape{1, 3, 4}, rng);
      EmbeddingLoss loss = random_loss(enc, rng, 4);
      if (std::holds_alternative<L2ToAnchorLoss>(loss)) {
        // keep the evaluation point away from the anchor
        Rng other(derive_seed(2000, static_cast<std::uint64_t>(c)));
        loss = L2ToAnchorLoss{enc.encode(random_image(Shape{1, 3, 4}, other))};
      }
      const auto [value, analytic] = loss_value_and_input_gradient(enc, x, loss);
      (void)value;
      const ImageTensor numeric = finite_difference_gradient(enc, x, loss, h);
      worst = std::max(worst, rel_l2_error(analytic.data, numeric.data));
    }
    CHECK(worst <= 1e-4);
  }
}

TEST_CASE("finite differences: linear closed form agreement at 1e-6 absolute") {
  Rng rng(77);
  const Encoder enc = build_encoder(EncoderKind::Linear, {6, 4}, 21);
  const ImageTensor x = random_image(Shape{1, 2, 3}, rng);
  ImageTensor delta = ImageTensor::zeros(x.shape);
  for (double& v : delta.data) v = 0.05 * rng.normal();
  const EmbeddingLoss loss = L2ToAnchorLoss{enc.encode(x)};
  const ImageTensor at = add(x, delta);
  const auto [value, analytic] = loss_value_and_input_gradient(enc, at, loss);
  (void)value;
  const ImageTensor numeric = finite_difference_gradient(enc, at, loss, 1e-5);
  CHECK(max_abs_diff(analytic.data, numeric.data) <= 1e-6);
}

TEST_CASE("finite differences: constant loss gives the zero vector") {
  // distance to the anchor of a constant encoder never changes
  DenseLayer layer{3, 2, {0.0, 0.0, 0.0, 0.0, 0.0, 0.0}, {0.4, -0.2}};
  const Encoder enc(EncoderKind::Linear, {layer});
  const ImageTensor x({0.1, 0.5, 0.9}, Shape{1, 1, 3});
  const EmbeddingLoss loss = L2ToAnchorLoss{Embedding{0.4, -0.2}};
  const ImageTensor grad = finite_difference_gradient(enc, x, loss, 1e-5);
  for (double g : grad.data) CHECK(g == 0.0);
}

TEST_CASE("finite differences: h must be positive") {
  const Encoder enc = identity_encoder_2d();
  const ImageTensor x({0.1, 0.2}, Shape{1, 1, 2});
  CHECK_THROWS_AS(finite_difference_gradient(enc, x, L2ToAnchorLoss{Embedding{0.0, 0.0}}, 0.0),
                  std::invalid_argument);
}
