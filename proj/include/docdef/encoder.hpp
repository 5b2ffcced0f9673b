#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "docdef/tensor.hpp"

namespace docdef {

using Embedding = std::vector<double>;

enum class EncoderKind { Linear, Mlp };

const char* to_string(EncoderKind kind);
EncoderKind encoder_kind_from_string(const std::string& name);

struct DenseLayer {
  int in_dim = 0;
  int out_dim = 0;
  std::vector<double> weights;  // row-major, out_dim x in_dim
  std::vector<double> bias;     // out_dim
};

// Per-layer activations recorded by a traced forward pass; enough to run
// the reverse sweep for input gradients.
struct ForwardTrace {
  std::vector<std::vector<double>> layer_outputs;  // post-activation, one per layer
};

// Deterministic differentiable image encoder. Linear is a single affine
// layer; Mlp applies tanh after every layer except the last. Immutable
// after construction, safe to share across threads.
class Encoder {
 public:
  Encoder(EncoderKind kind, std::vector<DenseLayer> layers);

  EncoderKind kind() const { return kind_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  int input_dim() const { return layers_.front().in_dim; }
  int output_dim() const { return layers_.back().out_dim; }
  std::vector<int> layer_dims() const;

  // Forward pass; rejects inputs whose length differs from input_dim.
  Embedding encode(const ImageTensor& image) const;
  Embedding encode(std::span<const double> x) const;

  // Forward pass that records activations for a later reverse sweep.
  Embedding encode_traced(std::span<const double> x, ForwardTrace& trace) const;

  // Reverse sweep: gradient of <grad_output, encode(x)> w.r.t. x.
  // Throws on non-finite intermediates, naming the layer.
  std::vector<double> input_gradient(std::span<const double> x, const ForwardTrace& trace,
                                     std::span<const double> grad_output) const;

 private:
  EncoderKind kind_;
  std::vector<DenseLayer> layers_;
};

// Draws parameters from the seeded generator, scaled by 1/sqrt(fan_in).
// layer_dims chains input to output: Linear takes exactly two entries,
// Mlp two or more.
Encoder build_encoder(EncoderKind kind, const std::vector<int>& layer_dims, std::uint64_t seed);

// Text parameter file: header (kind, dims), then per layer the row-major
// weights and the bias, printed with %.17g so a round trip is bit exact.
void save_encoder(const Encoder& encoder, const std::string& path);
Encoder load_encoder(const std::string& path);
void write_encoder(const Encoder& encoder, std::ostream& out);
Encoder read_encoder(std::istream& in, const std::string& context);

}  // namespace docdef
