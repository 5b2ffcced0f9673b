#include "docdef/experiment.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

#include "docdef/rng.hpp"
#include "docdef/version.hpp"

namespace docdef {

const char* to_string(DefenseKind kind) {
  switch (kind) {
    case DefenseKind::None: return "none";
    case DefenseKind::Ttc: return "ttc";
    default: return "doc";
  }
}

DefenseKind defense_kind_from_string(const std::string& name) {
  if (name == "none") return DefenseKind::None;
  if (name == "ttc") return DefenseKind::Ttc;
  if (name == "doc") return DefenseKind::Doc;
  throw std::invalid_argument("unknown defense kind '" + name + "'");
}

namespace {

class StageTimer {
 public:
  StageTimer(std::map<std::string, double>& sink, bool enabled) : sink_(sink), enabled_(enabled) {}

  template <typename Fn>
  auto run(const std::string& stage, Fn&& fn) {
    const auto start = std::chrono::steady_clock::now();
    try {
      if constexpr (std::is_void_v<decltype(fn())>) {
        fn();
        record(stage, start);
      } else {
        auto result = fn();
        record(stage, start);
        return result;
      }
    } catch (const std::exception& e) {
      throw std::runtime_error("stage '" + stage + "' failed: " + e.what());
    }
  }

 private:
  void record(const std::string& stage, std::chrono::steady_clock::time_point start) {
    if (!enabled_) return;
    const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
    sink_[stage] = elapsed.count();
  }

  std::map<std::string, double>& sink_;
  bool enabled_;
};

std::optional<double> safe_mean_cos(const std::vector<ImageTensor>& vectors) {
  if (vectors.size() < 2) return std::nullopt;
  for (const ImageTensor& v : vectors) {
    if (l2_norm(v.data) == 0.0) return std::nullopt;
  }
  return mean_cos(vectors);
}

AttackConfig example_attack_config(const AttackConfig& base, std::uint64_t stage_seed, int index) {
  AttackConfig cfg = base;
  cfg.seed = derive_seed(stage_seed, stream_tag::kExample, static_cast<std::uint64_t>(index));
  return cfg;
}

CounterattackConfig example_defense_config(const CounterattackConfig& base,
                                           std::uint64_t stage_seed, int index) {
  CounterattackConfig cfg = base;
  cfg.seed = derive_seed(stage_seed, stream_tag::kExample, static_cast<std::uint64_t>(index));
  return cfg;
}

}  // namespace

ExperimentReport run_experiment(const ExperimentConfig& config) {
  ExperimentReport report;
  report.config = config;
  report.version = kVersion;
  StageTimer timer(report.timings_sec, !config.stable_output);

  // dataset
  BlobSplits data = timer.run("dataset", [&] {
    if (!config.dataset.anchor_csv.empty() || !config.dataset.test_csv.empty()) {
      if (config.dataset.anchor_csv.empty() || config.dataset.test_csv.empty()) {
        throw std::invalid_argument("both anchor-csv and test-csv must be set to load data");
      }
      BlobSplits loaded;
      loaded.anchor_fit = load_csv_dataset(config.dataset.anchor_csv);
      loaded.anchor_fit.split = Split::AnchorFit;
      loaded.test = load_csv_dataset(config.dataset.test_csv);
      loaded.test.split = Split::Test;
      if (!(loaded.anchor_fit.shape == loaded.test.shape)) {
        throw std::invalid_argument("anchor and test splits disagree on image shape");
      }
      const int k = std::max(loaded.anchor_fit.class_count, loaded.test.class_count);
      loaded.anchor_fit.class_count = k;
      loaded.test.class_count = k;
      loaded.anchor_fit.validate();
      loaded.test.validate();
      return loaded;
    }
    return generate_blobs(config.dataset.class_count, config.dataset.shape,
                          config.dataset.noise_sigma, config.dataset.anchor_per_class,
                          config.dataset.test_per_class, config.seed);
  });

  // encoder
  Encoder encoder = timer.run("encoder", [&] {
    Encoder enc = config.encoder.load_path.empty()
                      ? build_encoder(config.encoder.kind, config.encoder.dims,
                                      config.encoder.seed)
                      : load_encoder(config.encoder.load_path);
    if (enc.input_dim() != data.test.shape.numel()) {
      throw std::invalid_argument("encoder input_dim " + std::to_string(enc.input_dim()) +
                                  " does not match image size " +
                                  std::to_string(data.test.shape.numel()));
    }
    return enc;
  });

  // anchors
  ClassAnchorSet anchors = timer.run("anchors", [&] { return build_anchors(encoder, data.anchor_fit); });

  const std::uint64_t attack_stage_seed = derive_seed(config.seed, stream_tag::kAttackStage);
  const std::uint64_t defense_stage_seed = derive_seed(config.seed, stream_tag::kDefenseStage);

  // gate threshold calibration on the held-out anchor split: midpoint of the
  // mean sensitivity score over clean and over attacked examples
  CounterattackConfig defense = config.defense;
  const bool needs_gate =
      config.defense_kind == DefenseKind::Doc && config.defense.use_gate;
  if (needs_gate && config.auto_tau) {
    timer.run("calibrate", [&] {
      const std::uint64_t calib_seed = derive_seed(config.seed, stream_tag::kCalibrationStage);
      double clean_sum = 0.0;
      double adv_sum = 0.0;
      const int n = data.anchor_fit.size();
      for (int i = 0; i < n; ++i) {
        const ImageTensor& x = data.anchor_fit.images[static_cast<std::size_t>(i)];
        const AttackConfig atk = example_attack_config(config.attack, calib_seed, i);
        const ImageTensor x_adv = pgd_attack(encoder, anchors, x, data.anchor_fit.labels[static_cast<std::size_t>(i)], atk);
        const CounterattackConfig dss_cfg = example_defense_config(defense, calib_seed, i);
        clean_sum += directional_sensitivity(encoder, x, dss_cfg);
        adv_sum += directional_sensitivity(encoder, x_adv, dss_cfg);
      }
      defense.tau = 0.5 * (clean_sum / n + adv_sum / n);
    });
  }
  report.calibrated_tau = defense.tau;
  report.config.defense.tau = defense.tau;

  // evaluate the four conditions on the test split
  timer.run("evaluate", [&] {
    const Dataset& test = data.test;
    const int n = test.size();
    std::vector<int> labels = test.labels;
    std::vector<int> clean_pred(n), adv_pred(n), def_clean_pred(n), def_adv_pred(n);
    std::vector<ImageTensor> attack_deltas;
    std::vector<ImageTensor> ca_deltas_clean;
    std::vector<ImageTensor> ca_deltas_adv;
    attack_deltas.reserve(static_cast<std::size_t>(n));

    report.records.resize(static_cast<std::size_t>(n));
    report.embeddings_clean.resize(static_cast<std::size_t>(n));
    report.embeddings_adv.resize(static_cast<std::size_t>(n));
    report.embeddings_defended_clean.resize(static_cast<std::size_t>(n));
    report.embeddings_defended_adv.resize(static_cast<std::size_t>(n));

    double tau_clean_sum = 0.0, tau_adv_sum = 0.0;
    double w_clean_sum = 0.0, w_adv_sum = 0.0;

    for (int i = 0; i < n; ++i) {
      const std::size_t idx = static_cast<std::size_t>(i);
      const ImageTensor& x_clean = test.images[idx];
      const int label = labels[idx];

      const Embedding e_clean = encoder.encode(x_clean);
      clean_pred[idx] = predict(e_clean, anchors);
      report.embeddings_clean[idx] = e_clean;

      const AttackConfig atk = example_attack_config(config.attack, attack_stage_seed, i);
      const ImageTensor x_adv = pgd_attack(encoder, anchors, x_clean, label, atk);
      const Embedding e_adv = encoder.encode(x_adv);
      adv_pred[idx] = predict(e_adv, anchors);
      report.embeddings_adv[idx] = e_adv;
      attack_deltas.push_back(sub(x_adv, x_clean));

      const CounterattackConfig def_cfg = example_defense_config(defense, defense_stage_seed, i);
      double tau_clean = 0.0, tau_adv = 0.0, w_clean = 1.0, w_adv = 1.0;

      if (config.defense_kind == DefenseKind::None) {
        def_clean_pred[idx] = clean_pred[idx];
        def_adv_pred[idx] = adv_pred[idx];
        report.embeddings_defended_clean[idx] = e_clean;
        report.embeddings_defended_adv[idx] = e_adv;
        tau_clean = directional_sensitivity(encoder, x_clean, def_cfg);
        tau_adv = directional_sensitivity(encoder, x_adv, def_cfg);
      } else {
        CounterattackOutcome out_clean, out_adv;
        if (config.defense_kind == DefenseKind::Ttc) {
          out_clean = ttc_counterattack(encoder, x_clean, def_cfg);
          out_adv = ttc_counterattack(encoder, x_adv, def_cfg);
          tau_clean = directional_sensitivity(encoder, x_clean, def_cfg);
          tau_adv = directional_sensitivity(encoder, x_adv, def_cfg);
        } else {
          out_clean = doc_counterattack(encoder, x_clean, def_cfg);
          out_adv = doc_counterattack(encoder, x_adv, def_cfg);
          tau_clean = out_clean.dss->tau_hat;
          tau_adv = out_adv.dss->tau_hat;
          w_clean = out_clean.dss->weight;
          w_adv = out_adv.dss->weight;
        }
        const ImageTensor x_def_clean = apply_defense(x_clean, out_clean);
        const ImageTensor x_def_adv = apply_defense(x_adv, out_adv);
        const Embedding e_def_clean = encoder.encode(x_def_clean);
        const Embedding e_def_adv = encoder.encode(x_def_adv);
        def_clean_pred[idx] = predict(e_def_clean, anchors);
        def_adv_pred[idx] = predict(e_def_adv, anchors);
        report.embeddings_defended_clean[idx] = e_def_clean;
        report.embeddings_defended_adv[idx] = e_def_adv;
        ca_deltas_clean.push_back(std::move(out_clean.delta_ca));
        ca_deltas_adv.push_back(std::move(out_adv.delta_ca));
      }

      tau_clean_sum += tau_clean;
      tau_adv_sum += tau_adv;
      w_clean_sum += w_clean;
      w_adv_sum += w_adv;
      report.records[idx] = ExampleRecord{i,       label,    clean_pred[idx], adv_pred[idx],
                                          def_clean_pred[idx], def_adv_pred[idx],
                                          tau_clean, tau_adv,  w_clean,        w_adv};
    }

    report.undefended.clean_acc = accuracy(clean_pred, labels);
    report.undefended.robust_acc = accuracy(adv_pred, labels);
    report.undefended.mean_cos = safe_mean_cos(attack_deltas);
    report.undefended.n_examples = n;
    report.defended.clean_acc = accuracy(def_clean_pred, labels);
    report.defended.robust_acc = accuracy(def_adv_pred, labels);
    report.defended.mean_cos = safe_mean_cos(ca_deltas_adv);
    report.defended.n_examples = n;
    report.mean_cos_delta_ca_clean = safe_mean_cos(ca_deltas_clean);

    report.undefended.mean_tau_hat_clean = tau_clean_sum / n;
    report.undefended.mean_tau_hat_adv = tau_adv_sum / n;
    report.defended.mean_tau_hat_clean = report.undefended.mean_tau_hat_clean;
    report.defended.mean_tau_hat_adv = report.undefended.mean_tau_hat_adv;
    report.mean_weight_clean = w_clean_sum / n;
    report.mean_weight_adv = w_adv_sum / n;
  });

  return report;
}

std::vector<SweepRow> sweep(const ExperimentConfig& config, const std::string& parameter,
                            const std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("sweep: empty value list");
  std::vector<SweepRow> rows;
  rows.reserve(values.size());
  for (double value : values) {
    ExperimentConfig run_config = config;
    if (parameter == "steps") {
      run_config.defense.steps = static_cast<int>(std::llround(value));
    } else if (parameter == "lambda") {
      run_config.defense.lambda = value;
    } else if (parameter == "mu") {
      run_config.defense.mu = value;
    } else if (parameter == "gamma") {
      run_config.defense.gamma = value;
    } else if (parameter == "tau") {
      run_config.defense.tau = value;
      run_config.auto_tau = false;
    } else if (parameter == "eps_ca") {
      run_config.defense.eps = value;
    } else if (parameter == "num_probes") {
      run_config.defense.num_probes = static_cast<int>(std::llround(value));
    } else {
      throw std::invalid_argument(
          "sweep: unknown parameter '" + parameter +
          "' (expected steps, lambda, mu, gamma, tau, eps_ca or num_probes)");
    }
    const ExperimentReport report = run_experiment(run_config);
    rows.push_back(SweepRow{value, report.undefended, report.defended});
  }
  return rows;
}

std::vector<std::pair<std::string, std::string>> read_kv_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file '" + path + "'");
  std::vector<std::pair<std::string, std::string>> pairs;
  std::string line;
  int line_no = 0;
  auto trim = [](std::string s) {
    const char* ws = " \t\r";
    const auto b = s.find_first_not_of(ws);
    if (b == std::string::npos) return std::string();
    const auto e = s.find_last_not_of(ws);
    return s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error(path + ": line " + std::to_string(line_no) +
                               " is not a key=value entry");
    }
    pairs.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return pairs;
}

Shape parse_shape(const std::string& text) {
  Shape s;
  char x1 = 0, x2 = 0;
  std::istringstream in(text);
  if (!(in >> s.channels >> x1 >> s.height >> x2 >> s.width) || x1 != 'x' || x2 != 'x' ||
      s.numel() <= 0 || !(in >> std::ws).eof()) {
    throw std::invalid_argument("malformed shape '" + text + "' (expected CxHxW)");
  }
  return s;
}

namespace {

double to_double(const std::string& value, const std::string& key) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("config key '" + key + "': malformed number '" + value + "'");
  }
}

int to_int(const std::string& value, const std::string& key) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw std::invalid_argument("config key '" + key + "': malformed integer '" + value + "'");
  }
  return v;
}

std::uint64_t to_u64(const std::string& value, const std::string& key) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw std::invalid_argument("config key '" + key + "': malformed seed '" + value + "'");
  }
  return v;
}

bool to_bool(const std::string& value, const std::string& key) {
  if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
  if (value == "false" || value == "0" || value == "no" || value == "off") return false;
  throw std::invalid_argument("config key '" + key + "': malformed boolean '" + value + "'");
}

std::vector<int> to_int_list(const std::string& value, const std::string& key) {
  std::vector<int> out;
  std::istringstream in(value);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(to_int(item, key));
  if (out.empty()) throw std::invalid_argument("config key '" + key + "': empty list");
  return out;
}

}  // namespace

void apply_config_entry(ExperimentConfig& config, const std::string& key,
                        const std::string& value) {
  if (key == "classes") config.dataset.class_count = to_int(value, key);
  else if (key == "shape") config.dataset.shape = parse_shape(value);
  else if (key == "noise-sigma") config.dataset.noise_sigma = to_double(value, key);
  else if (key == "anchor-per-class") config.dataset.anchor_per_class = to_int(value, key);
  else if (key == "test-per-class") config.dataset.test_per_class = to_int(value, key);
  else if (key == "anchor-csv") config.dataset.anchor_csv = value;
  else if (key == "test-csv") config.dataset.test_csv = value;
  else if (key == "encoder-kind") config.encoder.kind = encoder_kind_from_string(value);
  else if (key == "encoder-dims") config.encoder.dims = to_int_list(value, key);
  else if (key == "encoder-seed") config.encoder.seed = to_u64(value, key);
  else if (key == "encoder-load") config.encoder.load_path = value;
  else if (key == "attack-eps") config.attack.eps = to_double(value, key);
  else if (key == "attack-steps") config.attack.steps = to_int(value, key);
  else if (key == "attack-step-size") config.attack.step_size = to_double(value, key);
  else if (key == "attack-loss") config.attack.loss = attack_loss_from_string(value);
  else if (key == "attack-random-init") config.attack.random_init = to_bool(value, key);
  else if (key == "defense") config.defense_kind = defense_kind_from_string(value);
  else if (key == "eps-ca") config.defense.eps = to_double(value, key);
  else if (key == "ca-steps") config.defense.steps = to_int(value, key);
  else if (key == "ca-step-size") config.defense.step_size = to_double(value, key);
  else if (key == "lambda") config.defense.lambda = to_double(value, key);
  else if (key == "mu") config.defense.mu = to_double(value, key);
  else if (key == "probes") config.defense.num_probes = to_int(value, key);
  else if (key == "gamma") config.defense.gamma = to_double(value, key);
  else if (key == "probe-noise") config.defense.probe_noise = probe_noise_from_string(value);
  else if (key == "gate-polarity") config.defense.gate_polarity = gate_polarity_from_string(value);
  else if (key == "use-gate") config.defense.use_gate = to_bool(value, key);
  else if (key == "tau") {
    if (value == "auto") {
      config.auto_tau = true;
    } else {
      config.defense.tau = to_double(value, key);
      config.auto_tau = false;
    }
  } else if (key == "seed") config.seed = to_u64(value, key);
  else if (key == "out-dir") config.out_dir = value;
  else if (key == "stable-output") config.stable_output = to_bool(value, key);
  else throw std::invalid_argument("unknown config key '" + key + "'");
}

}  // namespace docdef
