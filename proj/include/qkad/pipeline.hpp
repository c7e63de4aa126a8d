#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "qkad/kernel.hpp"
#include "qkad/ocsvm.hpp"
#include "qkad/preprocess.hpp"

namespace qkad {

/// Bad configuration or CLI input; maps to exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class AnomalyKind { MeanShift, StuckAt, Mixed };

AnomalyKind anomaly_kind_from_string(const std::string& name);
const char* to_string(AnomalyKind kind);

/// Synthetic stand-in for the licensed testbeds: a correlated autoregressive
/// normal signal with regime baselines, plus injected anomaly segments on a
/// fixed feature subset.
struct SynthSpec {
  long samples = 4000;
  int features = 8;
  int regimes = 2;
  double anomaly_fraction = 0.1;
  double shift_magnitude = 4.0;
  double noise_sigma = 1.0;
  std::uint64_t seed = 7;
  int anomaly_feature_count = 0;  // 0 = max(1, features/3)
  int anomaly_segment_length = 100;
  AnomalyKind anomaly_kind = AnomalyKind::MeanShift;
};

Dataset synth_generate(const SynthSpec& spec);

struct CsvOptions {
  std::string label_column = "label";
  std::map<std::string, int> label_map;  // string labels -> {0,1}; empty = numeric
};

struct CsvLoadResult {
  Dataset dataset;
  long dropped_rows = 0;
};

CsvLoadResult load_csv(const std::filesystem::path& path, const CsvOptions& options = {});
void save_csv(const Dataset& dataset, const std::filesystem::path& path);

struct SamplerConfig {
  long train_size = 1000;
  long test_size = 1000;
  double calibration_fraction = 0.2;  // share of the mixed pool kept for labels
  std::uint64_t seed = 1;
};

struct SplitIndices {
  std::vector<long> train;        // normal-only
  std::vector<long> calibration;  // labelled, stratified
  std::vector<long> test;         // labelled, stratified
};

/// Draws the training set from normal rows only, then carves a labelled
/// calibration split and a stratified test split from the remaining mixed
/// pool. The three index sets are disjoint.
SplitIndices sample_splits(const Dataset& dataset, const SamplerConfig& sampler);

struct KernelConfig {
  bool quantum = true;
  FeatureMapSpec feature_map;              // quantum
  ClassicalKernel classical;               // classical
  std::optional<bool> exponentiate;        // default: quantum yes, classical no
};

struct BackendConfig {
  Backend backend = Backend::Pure;
  std::string noise_preset = "Ideal";      // density only
  std::optional<NoiseModel> custom_noise;  // overrides the preset
  long shots = 0;                          // 0 = exact probabilities
  std::optional<bool> psd_clip;            // default: density yes, pure no

  NoiseModel resolve_noise() const;
};

struct ExperimentConfig {
  std::optional<std::filesystem::path> csv_path;
  CsvOptions csv;
  std::optional<SynthSpec> synth;

  int window = 60;
  LabelAggregation aggregation = LabelAggregation::AnyAnomaly;
  SamplerConfig sampler;

  ReducerKind reducer = ReducerKind::Tree;
  int target_features = 8;
  TreeOptions tree;
  NmfOptions nmf;

  KernelConfig kernel;
  BackendConfig backend;
  SweepConfig svm;

  bool alignment_on_exponentiated = false;
  std::optional<ClassicalKernel> alignment_reference;

  std::filesystem::path output_dir = "out";
  int workers = 1;
  std::uint64_t seed = 42;
  bool emit_csv = false;

  void validate() const;
};

ExperimentConfig config_from_json(const nlohmann::json& doc);
nlohmann::json config_to_json(const ExperimentConfig& config);
ExperimentConfig load_config(const std::filesystem::path& path);

NoiseModel noise_model_from_json(const nlohmann::json& doc);

struct AlignmentReport {
  double kta = 0.0;
  std::optional<double> d_error;           // density backend only
  std::optional<double> ka_vs_reference;   // when a classical reference is configured
};

struct RunReport {
  nlohmann::json config_echo;
  std::string dataset_hash;
  double best_nu = 0.0;
  double best_tol = 0.0;
  EvalMetrics metrics;
  AlignmentReport alignment;
  std::optional<double> psd_min_eigenvalue;
  std::map<std::string, double> timings_s;
  std::map<std::string, std::string> artifacts;
};

/// Full experiment: ingest -> window -> split -> preprocess -> scale ->
/// grams -> sweep-fit -> score -> metrics + alignment, persisting kernels,
/// model and report under the output directory. Errors carry their pipeline
/// stage in the message.
RunReport run(const ExperimentConfig& config);

nlohmann::json report_to_json(const RunReport& report);

// Audit serializations persisted alongside the report; recomputing the
// preprocessor and scaler from training rows alone must reproduce them.
nlohmann::json preprocessor_to_json(const FittedPreprocessor& pre);
nlohmann::json scaler_to_json(const FeatureScaler& scaler);

struct ComparisonResult {
  std::string text_table;
  std::string csv;
};

/// Side-by-side metric table for reports sharing a dataset hash. Percent
/// change columns use 100*(a-b)/b against the first report; KTA is compared
/// as an absolute delta.
ComparisonResult compare(const std::vector<nlohmann::json>& reports,
                         const std::vector<std::string>& names);

std::string dataset_hash_hex(const Dataset& dataset, const SamplerConfig& sampler, int window,
                             LabelAggregation aggregation);

}  // namespace qkad
