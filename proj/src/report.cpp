#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "docdef/experiment.hpp"

namespace docdef {

namespace {

using ordered_json = nlohmann::ordered_json;

std::string fmt17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

ordered_json json_or_null(const std::optional<double>& v) {
  if (!v.has_value()) return nullptr;
  return *v;
}

ordered_json config_echo(const ExperimentConfig& c) {
  ordered_json j;
  j["seed"] = c.seed;
  j["dataset"] = {{"classes", c.dataset.class_count},
                  {"shape", {c.dataset.shape.channels, c.dataset.shape.height, c.dataset.shape.width}},
                  {"noise_sigma", c.dataset.noise_sigma},
                  {"anchor_per_class", c.dataset.anchor_per_class},
                  {"test_per_class", c.dataset.test_per_class},
                  {"anchor_csv", c.dataset.anchor_csv},
                  {"test_csv", c.dataset.test_csv}};
  j["encoder"] = {{"kind", to_string(c.encoder.kind)},
                  {"dims", c.encoder.dims},
                  {"seed", c.encoder.seed},
                  {"load_path", c.encoder.load_path}};
  j["attack"] = {{"eps", c.attack.eps},
                 {"steps", c.attack.steps},
                 {"step_size", c.attack.step_size},
                 {"loss", to_string(c.attack.loss)},
                 {"random_init", c.attack.random_init}};
  j["defense"] = {{"kind", to_string(c.defense_kind)},
                  {"eps_ca", c.defense.eps},
                  {"steps", c.defense.steps},
                  {"step_size", c.defense.step_size},
                  {"lambda", c.defense.lambda},
                  {"mu", c.defense.mu},
                  {"num_probes", c.defense.num_probes},
                  {"tau", c.defense.tau},
                  {"auto_tau", c.auto_tau},
                  {"gamma", c.defense.gamma},
                  {"probe_noise", to_string(c.defense.probe_noise)},
                  {"gate_polarity", to_string(c.defense.gate_polarity)},
                  {"use_gate", c.defense.use_gate}};
  return j;
}

ordered_json summary_json(const ExperimentReport& r) {
  ordered_json j;
  j["toolkit"] = "docdef";
  j["version"] = r.version;
  j["config"] = config_echo(r.config);
  j["n_examples"] = r.undefended.n_examples;
  j["calibrated_tau"] = r.calibrated_tau;
  j["undefended"] = {{"clean_acc", r.undefended.clean_acc},
                     {"robust_acc", r.undefended.robust_acc},
                     {"mean_cos_delta_atk", json_or_null(r.undefended.mean_cos)}};
  j["defended"] = {{"clean_acc", r.defended.clean_acc},
                   {"robust_acc", r.defended.robust_acc},
                   {"mean_cos_delta_ca_adv", json_or_null(r.defended.mean_cos)},
                   {"mean_cos_delta_ca_clean", json_or_null(r.mean_cos_delta_ca_clean)},
                   {"mean_weight_clean", r.mean_weight_clean},
                   {"mean_weight_adv", r.mean_weight_adv}};
  j["mean_tau_hat_clean"] = r.undefended.mean_tau_hat_clean;
  j["mean_tau_hat_adv"] = r.undefended.mean_tau_hat_adv;
  if (!r.config.stable_output) {
    ordered_json t;
    for (const auto& [stage, seconds] : r.timings_sec) t[stage] = seconds;
    j["timings_sec"] = t;
  }
  return j;
}

void write_records_csv(const ExperimentReport& r, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << "id,label,clean_pred,adv_pred,defended_clean_pred,defended_adv_pred,"
         "tau_hat_clean,tau_hat_adv,weight_clean,weight_adv\n";
  for (const ExampleRecord& rec : r.records) {
    out << rec.id << ',' << rec.label << ',' << rec.clean_pred << ',' << rec.adv_pred << ','
        << rec.defended_clean_pred << ',' << rec.defended_adv_pred << ','
        << fmt17(rec.tau_hat_clean) << ',' << fmt17(rec.tau_hat_adv) << ','
        << fmt17(rec.weight_clean) << ',' << fmt17(rec.weight_adv) << '\n';
  }
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

void write_pca_csv_and_svg(const ExperimentReport& r, const std::string& csv_path,
                           const std::string& svg_path) {
  const std::vector<std::pair<const char*, const std::vector<Embedding>*>> conditions = {
      {"clean", &r.embeddings_clean},
      {"adv", &r.embeddings_adv},
      {"defended_clean", &r.embeddings_defended_clean},
      {"defended_adv", &r.embeddings_defended_adv}};

  std::vector<Embedding> all;
  for (const auto& [name, block] : conditions) {
    all.insert(all.end(), block->begin(), block->end());
  }
  const Pca2d pca = pca_2d(all);

  std::ofstream csv(csv_path);
  if (!csv) throw std::runtime_error("cannot open '" + csv_path + "' for writing");
  csv << "condition,id,label,pc1,pc2\n";
  std::size_t cursor = 0;
  for (const auto& [name, block] : conditions) {
    for (std::size_t i = 0; i < block->size(); ++i, ++cursor) {
      csv << name << ',' << r.records[i].id << ',' << r.records[i].label << ','
          << fmt17(pca.points[cursor][0]) << ',' << fmt17(pca.points[cursor][1]) << '\n';
    }
  }
  if (!csv) throw std::runtime_error("write failed for '" + csv_path + "'");

  // scatter: one circle per embedding, colored by condition
  double min_x = 0.0, max_x = 0.0, min_y = 0.0, max_y = 0.0;
  for (const auto& p : pca.points) {
    min_x = std::min(min_x, p[0]);
    max_x = std::max(max_x, p[0]);
    min_y = std::min(min_y, p[1]);
    max_y = std::max(max_y, p[1]);
  }
  const double span_x = std::max(max_x - min_x, 1e-9);
  const double span_y = std::max(max_y - min_y, 1e-9);
  const double size = 640.0, margin = 40.0, inner = size - 2.0 * margin;
  const char* colors[4] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e"};

  std::ofstream svg(svg_path);
  if (!svg) throw std::runtime_error("cannot open '" + svg_path + "' for writing");
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << size
      << "\" height=\"" << size << "\" viewBox=\"0 0 " << size << ' ' << size << "\">\n"
      << "  <rect width=\"" << size << "\" height=\"" << size << "\" fill=\"white\"/>\n";
  cursor = 0;
  int color_idx = 0;
  for (const auto& [name, block] : conditions) {
    svg << "  <g fill=\"" << colors[color_idx] << "\" fill-opacity=\"0.6\">\n";
    for (std::size_t i = 0; i < block->size(); ++i, ++cursor) {
      const double px = margin + (pca.points[cursor][0] - min_x) / span_x * inner;
      const double py = size - margin - (pca.points[cursor][1] - min_y) / span_y * inner;
      svg << "    <circle cx=\"" << px << "\" cy=\"" << py << "\" r=\"3\"/>\n";
    }
    svg << "  </g>\n";
    ++color_idx;
  }
  color_idx = 0;
  for (const auto& [name, block] : conditions) {
    const double ly = 16.0 + 16.0 * color_idx;
    svg << "  <circle cx=\"12\" cy=\"" << ly - 4.0 << "\" r=\"4\" fill=\"" << colors[color_idx]
        << "\"/>\n"
        << "  <text x=\"22\" y=\"" << ly << "\" font-family=\"sans-serif\" font-size=\"12\">"
        << name << "</text>\n";
    ++color_idx;
  }
  svg << "</svg>\n";
  if (!svg) throw std::runtime_error("write failed for '" + svg_path + "'");
}

}  // namespace

void emit_report(const ExperimentReport& report, const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory '" + dir + "'");

  std::vector<std::string> written;
  auto cleanup = [&written]() {
    for (const std::string& path : written) {
      std::error_code rm_ec;
      std::filesystem::remove(path, rm_ec);
    }
  };
  try {
    const std::string summary_path = (fs::path(dir) / "summary.json").string();
    {
      std::ofstream out(summary_path);
      if (!out) throw std::runtime_error("cannot open '" + summary_path + "' for writing");
      written.push_back(summary_path);
      out << summary_json(report).dump(2) << '\n';
      if (!out) throw std::runtime_error("write failed for '" + summary_path + "'");
    }
    const std::string records_path = (fs::path(dir) / "records.csv").string();
    written.push_back(records_path);
    write_records_csv(report, records_path);

    const std::string pca_path = (fs::path(dir) / "embeddings_pca.csv").string();
    const std::string svg_path = (fs::path(dir) / "scatter.svg").string();
    written.push_back(pca_path);
    written.push_back(svg_path);
    write_pca_csv_and_svg(report, pca_path, svg_path);
  } catch (...) {
    cleanup();
    throw;
  }
}

void emit_sweep_csv(const std::vector<SweepRow>& rows, const std::string& parameter,
                    const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << "parameter,value,clean_acc,robust_acc,defended_clean_acc,defended_robust_acc,"
         "mean_cos_delta_ca_adv,mean_tau_hat_clean,mean_tau_hat_adv\n";
  for (const SweepRow& row : rows) {
    out << parameter << ',' << fmt17(row.value) << ',' << fmt17(row.undefended.clean_acc) << ','
        << fmt17(row.undefended.robust_acc) << ',' << fmt17(row.defended.clean_acc) << ','
        << fmt17(row.defended.robust_acc) << ','
        << (row.defended.mean_cos ? fmt17(*row.defended.mean_cos) : "") << ','
        << fmt17(row.defended.mean_tau_hat_clean) << ',' << fmt17(row.defended.mean_tau_hat_adv)
        << '\n';
  }
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

}  // namespace docdef
