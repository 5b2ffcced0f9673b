#include "docdef/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace docdef {

bool ImageTensor::valid_image() const {
  for (double v : data) {
    if (!(v >= 0.0 && v <= 1.0)) return false;
  }
  return true;
}

void require_consistent(const ImageTensor& t, const char* what) {
  if (!t.shape_consistent()) {
    std::ostringstream msg;
    msg << what << ": data length " << t.data.size() << " does not match shape ("
        << t.shape.channels << ", " << t.shape.height << ", " << t.shape.width << ")";
    throw std::invalid_argument(msg.str());
  }
}

static void require_same_shape(const ImageTensor& a, const ImageTensor& b, const char* what) {
  if (a.data.size() != b.data.size() || !(a.shape == b.shape)) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch");
  }
}

ImageTensor add(const ImageTensor& a, const ImageTensor& b) {
  require_same_shape(a, b, "add");
  ImageTensor out = a;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
  return out;
}

ImageTensor sub(const ImageTensor& a, const ImageTensor& b) {
  require_same_shape(a, b, "sub");
  ImageTensor out = a;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b.data[i];
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("dot: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double l2_norm(std::span<const double> v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return std::sqrt(acc);
}

double linf_norm(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::fabs(x));
  return m;
}

bool all_finite(std::span<const double> v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

}  // namespace docdef
