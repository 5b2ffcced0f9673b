#include "docdef/encoder.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "docdef/rng.hpp"

namespace docdef {

const char* to_string(EncoderKind kind) {
  return kind == EncoderKind::Linear ? "linear" : "mlp";
}

EncoderKind encoder_kind_from_string(const std::string& name) {
  if (name == "linear") return EncoderKind::Linear;
  if (name == "mlp") return EncoderKind::Mlp;
  throw std::invalid_argument("unknown encoder kind '" + name + "' (expected linear or mlp)");
}

Encoder::Encoder(EncoderKind kind, std::vector<DenseLayer> layers)
    : kind_(kind), layers_(std::move(layers)) {
  if (layers_.empty()) throw std::invalid_argument("encoder: empty layer list");
  if (kind_ == EncoderKind::Linear && layers_.size() != 1) {
    throw std::invalid_argument("linear encoder must have exactly one layer");
  }
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const DenseLayer& layer = layers_[l];
    if (layer.in_dim <= 0 || layer.out_dim <= 0) {
      throw std::invalid_argument("encoder layer " + std::to_string(l) +
                                  ": nonpositive dimension");
    }
    if (static_cast<int>(layer.weights.size()) != layer.in_dim * layer.out_dim ||
        static_cast<int>(layer.bias.size()) != layer.out_dim) {
      throw std::invalid_argument("encoder layer " + std::to_string(l) +
                                  ": parameter size mismatch");
    }
    if (l > 0 && layers_[l - 1].out_dim != layer.in_dim) {
      throw std::invalid_argument("encoder layer " + std::to_string(l) +
                                  ": input width does not chain with previous layer");
    }
  }
}

std::vector<int> Encoder::layer_dims() const {
  std::vector<int> dims;
  dims.push_back(layers_.front().in_dim);
  for (const DenseLayer& layer : layers_) dims.push_back(layer.out_dim);
  return dims;
}

static void affine(const DenseLayer& layer, std::span<const double> x, std::vector<double>& out) {
  out.assign(static_cast<std::size_t>(layer.out_dim), 0.0);
  for (int i = 0; i < layer.out_dim; ++i) {
    const double* row = layer.weights.data() + static_cast<std::size_t>(i) * layer.in_dim;
    double acc = layer.bias[static_cast<std::size_t>(i)];
    for (int j = 0; j < layer.in_dim; ++j) acc += row[j] * x[static_cast<std::size_t>(j)];
    out[static_cast<std::size_t>(i)] = acc;
  }
}

static void check_finite(std::span<const double> v, std::size_t layer, const char* pass) {
  if (!all_finite(v)) {
    throw std::runtime_error(std::string("non-finite value in encoder ") + pass + " at layer " +
                             std::to_string(layer));
  }
}

Embedding Encoder::encode(const ImageTensor& image) const {
  require_consistent(image, "encode");
  return encode(std::span<const double>(image.data));
}

Embedding Encoder::encode(std::span<const double> x) const {
  if (static_cast<int>(x.size()) != input_dim()) {
    throw std::invalid_argument("encode: input length " + std::to_string(x.size()) +
                                " does not match encoder input_dim " +
                                std::to_string(input_dim()));
  }
  std::vector<double> current(x.begin(), x.end());
  std::vector<double> next;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    affine(layers_[l], current, next);
    if (kind_ == EncoderKind::Mlp && l + 1 < layers_.size()) {
      for (double& v : next) v = std::tanh(v);
    }
    check_finite(next, l, "forward");
    current.swap(next);
  }
  return current;
}

Embedding Encoder::encode_traced(std::span<const double> x, ForwardTrace& trace) const {
  if (static_cast<int>(x.size()) != input_dim()) {
    throw std::invalid_argument("encode: input length " + std::to_string(x.size()) +
                                " does not match encoder input_dim " +
                                std::to_string(input_dim()));
  }
  trace.layer_outputs.assign(layers_.size(), {});
  std::vector<double> current(x.begin(), x.end());
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    affine(layers_[l], current, trace.layer_outputs[l]);
    if (kind_ == EncoderKind::Mlp && l + 1 < layers_.size()) {
      for (double& v : trace.layer_outputs[l]) v = std::tanh(v);
    }
    check_finite(trace.layer_outputs[l], l, "forward");
    current = trace.layer_outputs[l];
  }
  return current;
}

std::vector<double> Encoder::input_gradient(std::span<const double> /*x*/,
                                            const ForwardTrace& trace,
                                            std::span<const double> grad_output) const {
  if (trace.layer_outputs.size() != layers_.size()) {
    throw std::invalid_argument("input_gradient: trace does not match encoder depth");
  }
  if (static_cast<int>(grad_output.size()) != output_dim()) {
    throw std::invalid_argument("input_gradient: upstream gradient length mismatch");
  }
  std::vector<double> grad(grad_output.begin(), grad_output.end());
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const DenseLayer& layer = layers_[l];
    // tanh was applied to this layer's output unless it is the last layer
    if (kind_ == EncoderKind::Mlp && l + 1 < layers_.size()) {
      const std::vector<double>& h = trace.layer_outputs[l];
      for (int i = 0; i < layer.out_dim; ++i) {
        grad[static_cast<std::size_t>(i)] *= 1.0 - h[static_cast<std::size_t>(i)] * h[static_cast<std::size_t>(i)];
      }
    }
    std::vector<double> prev(static_cast<std::size_t>(layer.in_dim), 0.0);
    for (int i = 0; i < layer.out_dim; ++i) {
      const double* row = layer.weights.data() + static_cast<std::size_t>(i) * layer.in_dim;
      const double g = grad[static_cast<std::size_t>(i)];
      for (int j = 0; j < layer.in_dim; ++j) prev[static_cast<std::size_t>(j)] += row[j] * g;
    }
    check_finite(prev, l, "backward");
    grad.swap(prev);
  }
  return grad;
}

Encoder build_encoder(EncoderKind kind, const std::vector<int>& layer_dims, std::uint64_t seed) {
  if (layer_dims.size() < 2) {
    throw std::invalid_argument("build_encoder: need at least input and output dims");
  }
  if (kind == EncoderKind::Linear && layer_dims.size() != 2) {
    throw std::invalid_argument("build_encoder: linear encoder takes exactly two dims");
  }
  for (int d : layer_dims) {
    if (d <= 0) throw std::invalid_argument("build_encoder: nonpositive layer dim");
  }
  Rng rng(derive_seed(seed, stream_tag::kEncoderInit));
  std::vector<DenseLayer> layers;
  for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
    DenseLayer layer;
    layer.in_dim = layer_dims[l];
    layer.out_dim = layer_dims[l + 1];
    const double scale = 1.0 / std::sqrt(static_cast<double>(layer.in_dim));
    layer.weights.resize(static_cast<std::size_t>(layer.in_dim) * layer.out_dim);
    layer.bias.resize(static_cast<std::size_t>(layer.out_dim));
    for (double& w : layer.weights) w = scale * rng.normal();
    for (double& b : layer.bias) b = scale * rng.normal();
    layers.push_back(std::move(layer));
  }
  return Encoder(kind, std::move(layers));
}

// -- serialization --
// Format (text, one record per line):
//   docdef-encoder v1
//   kind <linear|mlp>
//   dims <d0> <d1> ... <dL>
//   then per layer: out_dim lines of in_dim weights, one line of biases.
// Numbers use %.17g so parsing restores the exact doubles.

static void write_row(std::ostream& out, std::span<const double> row) {
  char buf[32];
  for (std::size_t i = 0; i < row.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g", row[i]);
    if (i) out << ' ';
    out << buf;
  }
  out << '\n';
}

void write_encoder(const Encoder& encoder, std::ostream& out) {
  out << "docdef-encoder v1\n";
  out << "kind " << to_string(encoder.kind()) << '\n';
  out << "dims";
  for (int d : encoder.layer_dims()) out << ' ' << d;
  out << '\n';
  for (const DenseLayer& layer : encoder.layers()) {
    for (int i = 0; i < layer.out_dim; ++i) {
      write_row(out, std::span<const double>(
                         layer.weights.data() + static_cast<std::size_t>(i) * layer.in_dim,
                         static_cast<std::size_t>(layer.in_dim)));
    }
    write_row(out, layer.bias);
  }
}

static std::vector<double> read_row(std::istream& in, std::size_t n, const std::string& context) {
  std::vector<double> row(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(in >> row[i])) {
      throw std::runtime_error(context + ": truncated or malformed numeric row");
    }
  }
  return row;
}

Encoder read_encoder(std::istream& in, const std::string& context) {
  std::string line;
  if (!std::getline(in, line) || line != "docdef-encoder v1") {
    throw std::runtime_error(context + ": missing 'docdef-encoder v1' header");
  }
  std::string word, kind_name;
  if (!(in >> word >> kind_name) || word != "kind") {
    throw std::runtime_error(context + ": expected 'kind <linear|mlp>'");
  }
  EncoderKind kind = encoder_kind_from_string(kind_name);
  if (!(in >> word) || word != "dims") {
    throw std::runtime_error(context + ": expected 'dims ...'");
  }
  std::getline(in, line);
  std::istringstream dims_in(line);
  std::vector<int> dims;
  int d = 0;
  while (dims_in >> d) dims.push_back(d);
  if (dims.size() < 2) throw std::runtime_error(context + ": dims line needs at least two entries");
  std::vector<DenseLayer> layers;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    DenseLayer layer;
    layer.in_dim = dims[l];
    layer.out_dim = dims[l + 1];
    layer.weights.reserve(static_cast<std::size_t>(layer.in_dim) * layer.out_dim);
    for (int i = 0; i < layer.out_dim; ++i) {
      std::vector<double> row =
          read_row(in, static_cast<std::size_t>(layer.in_dim),
                   context + " layer " + std::to_string(l) + " weights row " + std::to_string(i));
      layer.weights.insert(layer.weights.end(), row.begin(), row.end());
    }
    layer.bias = read_row(in, static_cast<std::size_t>(layer.out_dim),
                          context + " layer " + std::to_string(l) + " bias");
    layers.push_back(std::move(layer));
  }
  return Encoder(kind, std::move(layers));
}

void save_encoder(const Encoder& encoder, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  write_encoder(encoder, out);
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

Encoder load_encoder(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open encoder file '" + path + "'");
  return read_encoder(in, path);
}

}  // namespace docdef
