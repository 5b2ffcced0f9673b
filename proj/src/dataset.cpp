#include "docdef/dataset.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "docdef/attack.hpp"
#include "docdef/rng.hpp"

namespace docdef {

const char* to_string(Split split) { return split == Split::AnchorFit ? "anchor_fit" : "test"; }

void Dataset::validate() const {
  if (images.empty()) throw std::invalid_argument("dataset: empty split");
  if (images.size() != labels.size()) {
    throw std::invalid_argument("dataset: image/label count mismatch");
  }
  if (class_count < 2) throw std::invalid_argument("dataset: class_count must be at least 2");
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (!(images[i].shape == shape) || !images[i].shape_consistent()) {
      throw std::invalid_argument("dataset: inconsistent image shape at index " +
                                  std::to_string(i));
    }
    if (!images[i].valid_image()) {
      throw std::invalid_argument("dataset: pixel out of [0, 1] at index " + std::to_string(i));
    }
    if (labels[i] < 0 || labels[i] >= class_count) {
      throw std::invalid_argument("dataset: label out of range at index " + std::to_string(i));
    }
  }
}

namespace {

Dataset make_split(const std::vector<std::vector<double>>& templates, Shape shape,
                   double noise_sigma, int per_class, std::uint64_t seed,
                   std::uint64_t split_tag, Split split) {
  const int k = static_cast<int>(templates.size());
  Dataset out;
  out.class_count = k;
  out.shape = shape;
  out.split = split;
  out.seed = seed;
  const int total = k * per_class;
  out.images.reserve(static_cast<std::size_t>(total));
  out.labels.reserve(static_cast<std::size_t>(total));
  for (int i = 0; i < total; ++i) {
    const int label = i / per_class;
    Rng rng(derive_seed(seed, split_tag, static_cast<std::uint64_t>(i)));
    ImageTensor image(templates[static_cast<std::size_t>(label)], shape);
    for (double& v : image.data) v += noise_sigma * rng.normal();
    out.images.push_back(clip_to_image(std::move(image)));
    out.labels.push_back(label);
  }
  return out;
}

}  // namespace

BlobSplits generate_blobs(int class_count, Shape shape, double noise_sigma,
                          int anchor_per_class, int test_per_class, std::uint64_t seed) {
  if (class_count < 2) throw std::invalid_argument("generate_blobs: class_count must be >= 2");
  if (shape.numel() <= 0) throw std::invalid_argument("generate_blobs: empty shape");
  if (anchor_per_class < 1 || test_per_class < 1) {
    throw std::invalid_argument("generate_blobs: split sizes must be >= 1");
  }
  if (!(noise_sigma >= 0.0)) throw std::invalid_argument("generate_blobs: negative noise sigma");

  Rng template_rng(derive_seed(seed, stream_tag::kBlobTemplate));
  std::vector<std::vector<double>> templates(static_cast<std::size_t>(class_count));
  for (auto& t : templates) {
    t.resize(static_cast<std::size_t>(shape.numel()));
    for (double& v : t) v = template_rng.uniform(0.2, 0.8);
  }

  BlobSplits splits;
  splits.anchor_fit = make_split(templates, shape, noise_sigma, anchor_per_class, seed,
                                 stream_tag::kBlobAnchorSplit, Split::AnchorFit);
  splits.test = make_split(templates, shape, noise_sigma, test_per_class, seed,
                           stream_tag::kBlobTestSplit, Split::Test);
  return splits;
}

// -- CSV --
// Optional sidecar line "# shape C H W", then "label,p0,p1,..." header,
// then one example per row.

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

double parse_double(const std::string& text, int line_no, int column) {
  double value = 0.0;
  const char* begin = text.data();
  const char* end = begin + text.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end) {
    throw std::runtime_error("malformed number '" + text + "' at row " + std::to_string(line_no) +
                             ", column " + std::to_string(column));
  }
  return value;
}

}  // namespace

Dataset load_csv_dataset(const std::string& path, std::optional<Shape> shape) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset file '" + path + "'");

  Dataset out;
  std::string line;
  int line_no = 0;

  // optional sidecar shape line
  if (!std::getline(in, line)) throw std::runtime_error(path + ": empty file");
  ++line_no;
  if (line.rfind("# shape", 0) == 0) {
    std::istringstream shape_in(line.substr(7));
    Shape s;
    if (!(shape_in >> s.channels >> s.height >> s.width) || s.numel() <= 0) {
      throw std::runtime_error(path + ": malformed shape line at row 1");
    }
    shape = s;
    if (!std::getline(in, line)) throw std::runtime_error(path + ": missing header row");
    ++line_no;
  }
  if (!shape.has_value()) {
    throw std::runtime_error(path + ": no shape available (no '# shape' line and none supplied)");
  }
  out.shape = *shape;

  const std::vector<std::string> header = split_csv_line(line);
  if (header.empty() || header[0] != "label") {
    throw std::runtime_error(path + ": header must start with 'label' (row " +
                             std::to_string(line_no) + ")");
  }
  const int pixels = static_cast<int>(header.size()) - 1;
  if (pixels != out.shape.numel()) {
    throw std::runtime_error(path + ": header has " + std::to_string(pixels) +
                             " pixel columns but shape expects " +
                             std::to_string(out.shape.numel()));
  }

  int max_label = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::vector<std::string> fields = split_csv_line(line);
    if (static_cast<int>(fields.size()) != pixels + 1) {
      throw std::runtime_error(path + ": row " + std::to_string(line_no) + " has " +
                               std::to_string(fields.size()) + " fields, expected " +
                               std::to_string(pixels + 1));
    }
    int label = 0;
    {
      const std::string& text = fields[0];
      auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), label);
      if (ec != std::errc() || ptr != text.data() + text.size() || label < 0) {
        throw std::runtime_error(path + ": malformed label '" + text + "' at row " +
                                 std::to_string(line_no));
      }
    }
    ImageTensor image = ImageTensor::zeros(out.shape);
    for (int j = 0; j < pixels; ++j) {
      const double v = parse_double(fields[static_cast<std::size_t>(j) + 1], line_no, j);
      if (!(v >= 0.0 && v <= 1.0)) {
        throw std::runtime_error(path + ": pixel " + fields[static_cast<std::size_t>(j) + 1] +
                                 " out of [0, 1] at row " + std::to_string(line_no) +
                                 ", column p" + std::to_string(j));
      }
      image.data[static_cast<std::size_t>(j)] = v;
    }
    out.images.push_back(std::move(image));
    out.labels.push_back(label);
    max_label = std::max(max_label, label);
  }
  if (out.images.empty()) throw std::runtime_error(path + ": no data rows");
  out.class_count = max_label + 1;
  if (out.class_count < 2) out.class_count = 2;
  return out;
}

void save_csv_dataset(const Dataset& dataset, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << "# shape " << dataset.shape.channels << ' ' << dataset.shape.height << ' '
      << dataset.shape.width << '\n';
  out << "label";
  for (int j = 0; j < dataset.shape.numel(); ++j) out << ",p" << j;
  out << '\n';
  char buf[32];
  for (std::size_t i = 0; i < dataset.images.size(); ++i) {
    out << dataset.labels[i];
    for (double v : dataset.images[i].data) {
      std::snprintf(buf, sizeof(buf), "%.17g", v);
      out << ',' << buf;
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

ClassAnchorSet build_anchors(const Encoder& encoder, const Dataset& anchor_fit) {
  anchor_fit.validate();
  const int k = anchor_fit.class_count;
  const int d = encoder.output_dim();
  std::vector<Embedding> sums(static_cast<std::size_t>(k),
                              Embedding(static_cast<std::size_t>(d), 0.0));
  std::vector<int> counts(static_cast<std::size_t>(k), 0);
  for (std::size_t i = 0; i < anchor_fit.images.size(); ++i) {
    const Embedding e = encoder.encode(anchor_fit.images[i]);
    Embedding& sum = sums[static_cast<std::size_t>(anchor_fit.labels[i])];
    for (int j = 0; j < d; ++j) sum[static_cast<std::size_t>(j)] += e[static_cast<std::size_t>(j)];
    ++counts[static_cast<std::size_t>(anchor_fit.labels[i])];
  }
  ClassAnchorSet anchors;
  for (int c = 0; c < k; ++c) {
    if (counts[static_cast<std::size_t>(c)] == 0) {
      throw std::invalid_argument("build_anchors: class " + std::to_string(c) +
                                  " has no anchor-split examples");
    }
    Embedding mean = sums[static_cast<std::size_t>(c)];
    for (double& v : mean) v /= static_cast<double>(counts[static_cast<std::size_t>(c)]);
    anchors.anchors.push_back(std::move(mean));
    anchors.class_names.push_back("class" + std::to_string(c));
  }
  anchors.validate();
  return anchors;
}

}  // namespace docdef
