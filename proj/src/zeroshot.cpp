#include "docdef/zeroshot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace docdef {

void ClassAnchorSet::validate() const {
  if (anchors.size() < 2) throw std::invalid_argument("anchor set needs at least two classes");
  if (!class_names.empty() && class_names.size() != anchors.size()) {
    throw std::invalid_argument("anchor set: class name count does not match anchor count");
  }
  const std::size_t d = anchors.front().size();
  if (d < 1) throw std::invalid_argument("anchor set: empty anchor");
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    if (anchors[i].size() != d) {
      throw std::invalid_argument("anchor " + std::to_string(i) + " has inconsistent dimension");
    }
    if (l2_norm(anchors[i]) == 0.0) {
      throw std::invalid_argument("anchor " + std::to_string(i) + " is the zero vector");
    }
  }
}

double cosine_score(const Embedding& e, const Embedding& anchor) {
  if (e.size() != anchor.size()) {
    throw std::invalid_argument("cosine_score: dimension mismatch");
  }
  const double ne = l2_norm(e);
  const double na = l2_norm(anchor);
  if (ne == 0.0 || na == 0.0) {
    throw std::invalid_argument("cosine_score: zero embedding");
  }
  double s = dot(e, anchor) / (ne * na);
  return std::clamp(s, -1.0, 1.0);
}

std::vector<double> cosine_scores(const Embedding& e, const ClassAnchorSet& anchors) {
  anchors.validate();
  std::vector<double> scores;
  scores.reserve(anchors.anchors.size());
  for (const Embedding& a : anchors.anchors) scores.push_back(cosine_score(e, a));
  return scores;
}

static std::vector<double> softmax(const std::vector<double>& logits) {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : logits) m = std::max(m, v);
  std::vector<double> out(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - m);
    z += out[i];
  }
  for (double& v : out) v /= z;
  return out;
}

ClassDistribution class_probabilities(const Embedding& e, const ClassAnchorSet& anchors,
                                      double temperature) {
  if (!(temperature > 0.0)) throw std::invalid_argument("class_probabilities: temperature must be positive");
  std::vector<double> scores = cosine_scores(e, anchors);
  for (double& s : scores) s /= temperature;
  return ClassDistribution{softmax(scores)};
}

int predict(const Embedding& e, const ClassAnchorSet& anchors) {
  std::vector<double> scores = cosine_scores(e, anchors);
  int best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  }
  return best;
}

static void check_label(int label, int k, const char* what) {
  if (label < 0 || label >= k) {
    throw std::invalid_argument(std::string(what) + ": label " + std::to_string(label) +
                                " out of range [0, " + std::to_string(k) + ")");
  }
}

double cross_entropy_loss(const Embedding& e, const ClassAnchorSet& anchors, int label,
                          double temperature) {
  if (!(temperature > 0.0)) throw std::invalid_argument("cross_entropy_loss: temperature must be positive");
  std::vector<double> scores = cosine_scores(e, anchors);
  check_label(label, static_cast<int>(scores.size()), "cross_entropy_loss");
  double m = -std::numeric_limits<double>::infinity();
  for (double& s : scores) {
    s /= temperature;
    m = std::max(m, s);
  }
  double z = 0.0;
  for (double s : scores) z += std::exp(s - m);
  return std::log(z) + m - scores[static_cast<std::size_t>(label)];
}

double cw_margin_loss(const Embedding& e, const ClassAnchorSet& anchors, int label) {
  std::vector<double> scores = cosine_scores(e, anchors);
  check_label(label, static_cast<int>(scores.size()), "cw_margin_loss");
  double best_other = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < scores.size(); ++j) {
    if (static_cast<int>(j) == label) continue;
    if (scores[j] > best_other) best_other = scores[j];
  }
  return best_other - scores[static_cast<std::size_t>(label)];
}

// File format mirrors the encoder one:
//   docdef-anchors v1
//   classes <K>
//   dim <d>
//   <name> <d values>   (K lines)

void save_anchors(const ClassAnchorSet& anchors, const std::string& path) {
  anchors.validate();
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << "docdef-anchors v1\n";
  out << "classes " << anchors.class_count() << '\n';
  out << "dim " << anchors.dim() << '\n';
  char buf[32];
  for (int i = 0; i < anchors.class_count(); ++i) {
    const std::string name = anchors.class_names.empty()
                                 ? "class" + std::to_string(i)
                                 : anchors.class_names[static_cast<std::size_t>(i)];
    out << name;
    for (double v : anchors.anchors[static_cast<std::size_t>(i)]) {
      std::snprintf(buf, sizeof(buf), "%.17g", v);
      out << ' ' << buf;
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

ClassAnchorSet load_anchors(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open anchor file '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || line != "docdef-anchors v1") {
    throw std::runtime_error(path + ": missing 'docdef-anchors v1' header");
  }
  std::string word;
  int k = 0, d = 0;
  if (!(in >> word >> k) || word != "classes" || k < 2) {
    throw std::runtime_error(path + ": expected 'classes <K>' with K >= 2");
  }
  if (!(in >> word >> d) || word != "dim" || d < 1) {
    throw std::runtime_error(path + ": expected 'dim <d>' with d >= 1");
  }
  ClassAnchorSet set;
  for (int i = 0; i < k; ++i) {
    std::string name;
    if (!(in >> name)) throw std::runtime_error(path + ": truncated at anchor " + std::to_string(i));
    Embedding a(static_cast<std::size_t>(d));
    for (int j = 0; j < d; ++j) {
      if (!(in >> a[static_cast<std::size_t>(j)])) {
        throw std::runtime_error(path + ": malformed values for anchor " + std::to_string(i));
      }
    }
    set.class_names.push_back(name);
    set.anchors.push_back(std::move(a));
  }
  set.validate();
  return set;
}

}  // namespace docdef
