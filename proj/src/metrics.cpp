#include "docdef/metrics.hpp"

#include <cmath>
#include <stdexcept>

#include "docdef/rng.hpp"

namespace docdef {

double accuracy(const std::vector<int>& predictions, const std::vector<int>& labels) {
  if (predictions.empty()) throw std::invalid_argument("accuracy: empty prediction list");
  if (predictions.size() != labels.size()) {
    throw std::invalid_argument("accuracy: length mismatch");
  }
  int correct = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i] == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(predictions.size());
}

double mean_cos(const std::vector<ImageTensor>& vectors) {
  if (vectors.size() < 2) throw std::invalid_argument("mean_cos: need at least two vectors");
  std::vector<double> norms(vectors.size());
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    if (vectors[i].data.size() != vectors[0].data.size()) {
      throw std::invalid_argument("mean_cos: shape mismatch at index " + std::to_string(i));
    }
    norms[i] = l2_norm(vectors[i].data);
    if (norms[i] == 0.0) {
      throw std::invalid_argument("mean_cos: zero vector at index " + std::to_string(i));
    }
  }
  // Fixed pair enumeration with a serial reduction keeps the sum
  // deterministic regardless of any parallel chunking above this call.
  double acc = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    for (std::size_t j = i + 1; j < vectors.size(); ++j) {
      acc += dot(vectors[i].data, vectors[j].data) / (norms[i] * norms[j]);
      ++pairs;
    }
  }
  return acc / static_cast<double>(pairs);
}

std::vector<double> embedding_shift(const Encoder& encoder,
                                    const std::vector<ImageTensor>& originals,
                                    const std::vector<ImageTensor>& perturbed) {
  if (originals.size() != perturbed.size()) {
    throw std::invalid_argument("embedding_shift: list length mismatch");
  }
  std::vector<double> shifts;
  shifts.reserve(originals.size());
  for (std::size_t i = 0; i < originals.size(); ++i) {
    const Embedding a = encoder.encode(originals[i]);
    const Embedding b = encoder.encode(perturbed[i]);
    std::vector<double> diff(a.size());
    for (std::size_t j = 0; j < a.size(); ++j) diff[j] = b[j] - a[j];
    shifts.push_back(l2_norm(diff));
  }
  return shifts;
}

namespace {

constexpr double kPowerTol = 1e-9;
constexpr int kPowerMaxIter = 1000;

// Leading eigenpair of the symmetric matrix C (d x d, row-major) by power
// iteration from a seeded start. Returns eigenvalue; v holds the
// sign-fixed unit eigenvector.
double power_iteration(const std::vector<double>& c, int d, std::vector<double>& v) {
  Rng rng(derive_seed(0, stream_tag::kPcaStart));
  v.assign(static_cast<std::size_t>(d), 0.0);
  for (double& x : v) x = rng.normal();
  double vn = l2_norm(v);
  for (double& x : v) x /= vn;

  std::vector<double> next(static_cast<std::size_t>(d));
  double lambda = 0.0;
  for (int it = 0; it < kPowerMaxIter; ++it) {
    for (int i = 0; i < d; ++i) {
      double acc = 0.0;
      const double* row = c.data() + static_cast<std::size_t>(i) * d;
      for (int j = 0; j < d; ++j) acc += row[j] * v[static_cast<std::size_t>(j)];
      next[static_cast<std::size_t>(i)] = acc;
    }
    lambda = dot(next, v);
    const double n = l2_norm(next);
    if (n == 0.0) {
      lambda = 0.0;
      break;
    }
    for (double& x : next) x /= n;
    // align signs before measuring the change
    if (dot(next, v) < 0.0) {
      for (double& x : next) x = -x;
      lambda = -lambda;
    }
    double diff = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) diff = std::max(diff, std::fabs(next[i] - v[i]));
    v = next;
    if (diff <= kPowerTol) break;
  }
  // largest-magnitude loading positive
  std::size_t arg = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (std::fabs(v[i]) > std::fabs(v[arg])) arg = i;
  }
  if (v[arg] < 0.0) {
    for (double& x : v) x = -x;
  }
  return lambda;
}

}  // namespace

Pca2d pca_2d(const std::vector<Embedding>& embeddings) {
  const int n = static_cast<int>(embeddings.size());
  if (n < 3) throw std::invalid_argument("pca_2d: need at least three embeddings");
  const int d = static_cast<int>(embeddings.front().size());
  for (const Embedding& e : embeddings) {
    if (static_cast<int>(e.size()) != d) {
      throw std::invalid_argument("pca_2d: inconsistent embedding dimensions");
    }
  }

  std::vector<double> mean(static_cast<std::size_t>(d), 0.0);
  for (const Embedding& e : embeddings) {
    for (int j = 0; j < d; ++j) mean[static_cast<std::size_t>(j)] += e[static_cast<std::size_t>(j)];
  }
  for (double& m : mean) m /= static_cast<double>(n);

  std::vector<std::vector<double>> centered(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    centered[static_cast<std::size_t>(i)].resize(static_cast<std::size_t>(d));
    for (int j = 0; j < d; ++j) {
      centered[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
          embeddings[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] -
          mean[static_cast<std::size_t>(j)];
    }
  }

  // covariance, row-major d x d
  std::vector<double> cov(static_cast<std::size_t>(d) * d, 0.0);
  for (int i = 0; i < n; ++i) {
    const std::vector<double>& row = centered[static_cast<std::size_t>(i)];
    for (int a = 0; a < d; ++a) {
      const double ra = row[static_cast<std::size_t>(a)];
      if (ra == 0.0) continue;
      double* out = cov.data() + static_cast<std::size_t>(a) * d;
      for (int b = 0; b < d; ++b) out[b] += ra * row[static_cast<std::size_t>(b)];
    }
  }
  for (double& v : cov) v /= static_cast<double>(n);

  double trace = 0.0;
  for (int a = 0; a < d; ++a) trace += cov[static_cast<std::size_t>(a) * d + a];

  Pca2d result;
  result.points.assign(static_cast<std::size_t>(n), {0.0, 0.0});
  if (trace <= 0.0) {
    result.rank_deficient = true;  // all points identical
    return result;
  }

  std::vector<double> v1;
  const double lambda1 = power_iteration(cov, d, v1);
  if (lambda1 <= kPowerTol * trace) {
    result.rank_deficient = true;
    return result;
  }
  for (int i = 0; i < n; ++i) {
    result.points[static_cast<std::size_t>(i)][0] = dot(centered[static_cast<std::size_t>(i)], v1);
  }

  // deflate and repeat for the second component
  std::vector<double> deflated = cov;
  for (int a = 0; a < d; ++a) {
    for (int b = 0; b < d; ++b) {
      deflated[static_cast<std::size_t>(a) * d + b] -=
          lambda1 * v1[static_cast<std::size_t>(a)] * v1[static_cast<std::size_t>(b)];
    }
  }
  std::vector<double> v2;
  const double lambda2 = power_iteration(deflated, d, v2);
  if (lambda2 <= kPowerTol * lambda1) {
    result.rank_deficient = true;  // second coordinate stays zero
    return result;
  }
  for (int i = 0; i < n; ++i) {
    result.points[static_cast<std::size_t>(i)][1] = dot(centered[static_cast<std::size_t>(i)], v2);
  }
  return result;
}

}  // namespace docdef
