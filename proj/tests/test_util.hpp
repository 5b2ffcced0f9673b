#pragma once

#include <cmath>
#include <vector>

#include "docdef/encoder.hpp"
#include "docdef/rng.hpp"
#include "docdef/tensor.hpp"

namespace docdef::testutil {

inline double rel_l2_error(const std::vector<double>& a, const std::vector<double>& b) {
  double num = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double denom = std::max(std::sqrt(na), std::sqrt(nb));
  if (denom < 1e-12) return std::sqrt(num);
  return std::sqrt(num) / denom;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

inline ImageTensor random_image(Shape shape, Rng& rng) {
  ImageTensor x = ImageTensor::zeros(shape);
  for (double& v : x.data) v = rng.uniform(0.05, 0.95);
  return x;
}

// Independent straight-line forward pass: loops over layers applying
// tanh(Wx + b) to every layer but the last. Shares the parameters with the
// encoder under test but none of its code.
inline std::vector<double> reference_forward(const Encoder& encoder,
                                             const std::vector<double>& x) {
  std::vector<double> h = x;
  const auto& layers = encoder.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    std::vector<double> z(static_cast<std::size_t>(layers[l].out_dim), 0.0);
    for (int i = 0; i < layers[l].out_dim; ++i) {
      double acc = layers[l].bias[static_cast<std::size_t>(i)];
      for (int j = 0; j < layers[l].in_dim; ++j) {
        acc += layers[l].weights[static_cast<std::size_t>(i * layers[l].in_dim + j)] *
               h[static_cast<std::size_t>(j)];
      }
      z[static_cast<std::size_t>(i)] = acc;
    }
    if (encoder.kind() == EncoderKind::Mlp && l + 1 < layers.size()) {
      for (double& v : z) v = std::tanh(v);
    }
    h = z;
  }
  return h;
}

}  // namespace docdef::testutil
