#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace docdef {

struct Shape {
  int channels = 0;
  int height = 0;
  int width = 0;

  int numel() const { return channels * height * width; }
  bool operator==(const Shape&) const = default;
};

// Flat pixel vector with an explicit (C, H, W) shape. Carries images,
// perturbations and gradients alike; only images are constrained to [0, 1].
struct ImageTensor {
  std::vector<double> data;
  Shape shape;

  ImageTensor() = default;
  ImageTensor(std::vector<double> values, Shape s) : data(std::move(values)), shape(s) {}

  static ImageTensor zeros(Shape s) {
    return ImageTensor(std::vector<double>(static_cast<std::size_t>(s.numel()), 0.0), s);
  }

  int size() const { return static_cast<int>(data.size()); }

  bool shape_consistent() const { return static_cast<int>(data.size()) == shape.numel(); }

  // True when every element lies in [0, 1].
  bool valid_image() const;
};

// Throws std::invalid_argument when the tensor is not shape-consistent.
void require_consistent(const ImageTensor& t, const char* what);

// Elementwise sum; shapes must match.
ImageTensor add(const ImageTensor& a, const ImageTensor& b);

// Elementwise difference a - b; shapes must match.
ImageTensor sub(const ImageTensor& a, const ImageTensor& b);

// -- small vector helpers shared across modules --

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> v);
double linf_norm(std::span<const double> v);
bool all_finite(std::span<const double> v);

}  // namespace docdef
