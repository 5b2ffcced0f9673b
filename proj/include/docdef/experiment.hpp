#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "docdef/dataset.hpp"
#include "docdef/defense.hpp"
#include "docdef/metrics.hpp"

namespace docdef {

enum class DefenseKind { None, Ttc, Doc };
const char* to_string(DefenseKind kind);
DefenseKind defense_kind_from_string(const std::string& name);

struct DatasetSpec {
  int class_count = 4;
  Shape shape{3, 8, 8};
  double noise_sigma = 0.2;
  int anchor_per_class = 50;
  int test_per_class = 100;
  // When set, load these instead of generating blobs.
  std::string anchor_csv;
  std::string test_csv;
};

struct EncoderSpec {
  EncoderKind kind = EncoderKind::Linear;
  std::vector<int> dims = {192, 16};
  std::uint64_t seed = 7;
  std::string load_path;  // when set, load instead of building
};

struct ExperimentConfig {
  DatasetSpec dataset;
  EncoderSpec encoder;
  AttackConfig attack;
  CounterattackConfig defense;
  DefenseKind defense_kind = DefenseKind::Doc;
  bool auto_tau = true;  // calibrate defense.tau from the anchor split
  std::string out_dir;
  bool stable_output = false;  // omit wall-clock timings from summary.json
  std::uint64_t seed = 1;      // master seed; dataset uses it directly
};

struct ExampleRecord {
  int id = 0;
  int label = 0;
  int clean_pred = 0;
  int adv_pred = 0;
  int defended_clean_pred = 0;
  int defended_adv_pred = 0;
  double tau_hat_clean = 0.0;
  double tau_hat_adv = 0.0;
  double weight_clean = 1.0;
  double weight_adv = 1.0;
};

struct EvalSummary {
  double clean_acc = 0.0;
  double robust_acc = 0.0;
  // Mean pairwise cosine of the relevant perturbation set: attack deltas for
  // the undefended summary, counterattack deltas on attacked inputs for the
  // defended one. Unset when the set is empty or all-zero.
  std::optional<double> mean_cos;
  double mean_tau_hat_clean = 0.0;
  double mean_tau_hat_adv = 0.0;
  int n_examples = 0;
};

struct ExperimentReport {
  std::vector<ExampleRecord> records;
  EvalSummary undefended;
  EvalSummary defended;
  std::optional<double> mean_cos_delta_ca_clean;
  double mean_weight_clean = 1.0;
  double mean_weight_adv = 1.0;
  double calibrated_tau = 0.0;
  ExperimentConfig config;
  std::map<std::string, double> timings_sec;  // per stage; empty under stable output
  std::string version;

  // Embeddings per condition for the PCA export, in record order.
  std::vector<Embedding> embeddings_clean;
  std::vector<Embedding> embeddings_adv;
  std::vector<Embedding> embeddings_defended_clean;
  std::vector<Embedding> embeddings_defended_adv;
};

// Full pipeline: build or load dataset and encoder, build anchors, attack
// the test split, counterattack both clean and attacked inputs, evaluate
// the four conditions and the diversity metrics. Throws with the stage
// name on failure. Does not write files; see emit_report.
ExperimentReport run_experiment(const ExperimentConfig& config);

// Writes summary.json, records.csv, embeddings_pca.csv and scatter.svg
// into dir. Partial outputs are removed when emission fails.
void emit_report(const ExperimentReport& report, const std::string& dir);

// One row of a sweep over a single defense parameter.
struct SweepRow {
  double value = 0.0;
  EvalSummary undefended;
  EvalSummary defended;
};

// Re-runs the experiment once per value with shared seeds. parameter is one
// of: steps, lambda, mu, gamma, tau, eps_ca, num_probes. Setting tau
// disables auto calibration for that run.
std::vector<SweepRow> sweep(const ExperimentConfig& config, const std::string& parameter,
                            const std::vector<double>& values);

// Writes the sweep table as CSV.
void emit_sweep_csv(const std::vector<SweepRow>& rows, const std::string& parameter,
                    const std::string& path);

// Flat key=value config file support for the CLI (# starts a comment).
// Returns the pairs in file order.
std::vector<std::pair<std::string, std::string>> read_kv_config(const std::string& path);

// Applies one key=value entry to the config. Keys use the CLI flag names
// without the leading dashes (e.g. "attack-eps", "defense", "tau").
// Unknown keys are rejected.
void apply_config_entry(ExperimentConfig& config, const std::string& key,
                        const std::string& value);

// "CxHxW", e.g. "3x8x8".
Shape parse_shape(const std::string& text);

}  // namespace docdef
