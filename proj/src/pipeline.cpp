#include "qkad/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "qkad/util.hpp"

namespace qkad {

namespace {

using Index = Eigen::Index;
using nlohmann::json;

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (std::isspace(static_cast<unsigned char>(s[b])) != 0)) ++b;
  while (e > b && (std::isspace(static_cast<unsigned char>(s[e - 1])) != 0)) --e;
  return s.substr(b, e - b);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(trim(field));
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

bool is_missing(const std::string& token) {
  if (token.empty()) return true;
  std::string lower;
  for (char c : token) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  return lower == "nan" || lower == "na" || lower == "null";
}

bool parse_double(const std::string& token, double& out) {
  char* end = nullptr;
  out = std::strtod(token.c_str(), &end);
  return end == token.c_str() + token.size() && !token.empty();
}

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& m, const std::vector<long>& idx) {
  Eigen::MatrixXd out(static_cast<Index>(idx.size()), m.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    out.row(static_cast<Index>(i)) = m.row(static_cast<Index>(idx[i]));
  }
  return out;
}

std::vector<int> take_labels(const std::vector<int>& labels, const std::vector<long>& idx) {
  std::vector<int> out(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    out[i] = labels[static_cast<std::size_t>(idx[i])];
  }
  return out;
}

json vector_to_json(const Eigen::VectorXd& v) {
  return json(std::vector<double>(v.begin(), v.end()));
}

json rowvector_to_json(const Eigen::RowVectorXd& v) {
  return json(std::vector<double>(v.begin(), v.end()));
}

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

template <typename Fn>
auto run_stage(RunReport& report, const std::string& name, Fn&& fn) -> decltype(fn()) {
  const auto start = std::chrono::steady_clock::now();
  auto record = [&] {
    report.timings_s[name] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };
  try {
    if constexpr (std::is_void_v<decltype(fn())>) {
      fn();
      record();
    } else {
      auto value = fn();
      record();
      return value;
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw std::runtime_error("[" + name + "] " + e.what());
  }
}

}  // namespace

AnomalyKind anomaly_kind_from_string(const std::string& name) {
  if (name == "mean_shift") return AnomalyKind::MeanShift;
  if (name == "stuck_at") return AnomalyKind::StuckAt;
  if (name == "mixed") return AnomalyKind::Mixed;
  throw ConfigError("unknown anomaly kind: " + name);
}

const char* to_string(AnomalyKind kind) {
  switch (kind) {
    case AnomalyKind::MeanShift: return "mean_shift";
    case AnomalyKind::StuckAt: return "stuck_at";
    case AnomalyKind::Mixed: return "mixed";
  }
  return "?";
}

Dataset synth_generate(const SynthSpec& spec) {
  if (!(spec.anomaly_fraction > 0.0 && spec.anomaly_fraction < 1.0)) {
    throw std::invalid_argument("anomaly fraction must be in (0,1)");
  }
  if (spec.samples < 10 || spec.features < 1 || spec.regimes < 1 ||
      spec.anomaly_segment_length < 1 || !(spec.noise_sigma > 0.0)) {
    throw std::invalid_argument("invalid synthetic-data parameters");
  }
  if (spec.anomaly_feature_count > spec.features) {
    throw std::invalid_argument("anomaly feature count exceeds feature count");
  }

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const long m = spec.samples;
  const int f = spec.features;

  Eigen::MatrixXd mixing = Eigen::MatrixXd::Identity(f, f);
  for (Index i = 0; i < f; ++i) {
    for (Index j = 0; j < f; ++j) mixing(i, j) += 0.25 * gauss(rng);
  }
  Eigen::MatrixXd baselines(spec.regimes, f);
  for (Index r = 0; r < spec.regimes; ++r) {
    for (Index k = 0; k < f; ++k) {
      baselines(r, k) = 2.0 * spec.noise_sigma * (2.0 * uniform(rng) - 1.0);
    }
  }

  // Stationary AR(1) latent with unit per-feature variance, mixed for
  // cross-feature correlation.
  const double phi = 0.9;
  const double innovation = std::sqrt(1.0 - phi * phi);
  Eigen::VectorXd latent = Eigen::VectorXd::Zero(f);
  Eigen::MatrixXd x(m, f);
  const long regime_length = std::max<long>(1, m / spec.regimes);
  for (long t = 0; t < m; ++t) {
    for (Index k = 0; k < f; ++k) latent[k] = phi * latent[k] + innovation * gauss(rng);
    const Index regime = static_cast<Index>(std::min<long>(t / regime_length, spec.regimes - 1));
    x.row(t) = baselines.row(regime) + spec.noise_sigma * (mixing * latent).transpose();
  }

  Eigen::RowVectorXd sigma(f);
  const Eigen::RowVectorXd mean = x.colwise().mean();
  for (Index k = 0; k < f; ++k) {
    sigma[k] = std::sqrt((x.col(k).array() - mean[k]).square().sum() / static_cast<double>(m));
  }

  const int subset_size =
      spec.anomaly_feature_count > 0 ? spec.anomaly_feature_count : std::max(1, f / 3);
  std::vector<int> order(static_cast<std::size_t>(f));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const std::vector<int> subset(order.begin(), order.begin() + subset_size);

  std::vector<int> labels(static_cast<std::size_t>(m), 0);
  const long target = std::lround(spec.anomaly_fraction * static_cast<double>(m));
  long placed = 0;
  int segment = 0;
  std::uniform_int_distribution<long> start_draw(0, m - 1);
  for (int attempt = 0; placed < target && attempt < 100000; ++attempt) {
    const long length = std::min<long>(spec.anomaly_segment_length, target - placed);
    const long start = start_draw(rng) % std::max<long>(1, m - length);
    bool free = true;
    for (long t = start; t < start + length; ++t) {
      if (labels[static_cast<std::size_t>(t)] != 0) {
        free = false;
        break;
      }
    }
    if (!free) continue;
    const double sign = segment % 2 == 0 ? 1.0 : -1.0;
    AnomalyKind mode = spec.anomaly_kind;
    if (mode == AnomalyKind::Mixed) {
      mode = segment % 2 == 0 ? AnomalyKind::MeanShift : AnomalyKind::StuckAt;
    }
    for (long t = start; t < start + length; ++t) {
      labels[static_cast<std::size_t>(t)] = 1;
      for (int feat : subset) {
        if (mode == AnomalyKind::MeanShift) {
          x(t, feat) += sign * spec.shift_magnitude * sigma[feat];
        } else {
          x(t, feat) = x(start, feat);
        }
      }
    }
    placed += length;
    ++segment;
  }

  Dataset dataset;
  dataset.features = std::move(x);
  dataset.labels = std::move(labels);
  dataset.feature_names.reserve(static_cast<std::size_t>(f));
  for (int k = 0; k < f; ++k) dataset.feature_names.push_back("f" + std::to_string(k));
  dataset.validate();
  return dataset;
}

CsvLoadResult load_csv(const std::filesystem::path& path, const CsvOptions& options) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset file " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty dataset file " + path.string());
  const std::vector<std::string> header = split_csv_line(line);
  long label_index = -1;
  for (std::size_t k = 0; k < header.size(); ++k) {
    if (header[k] == options.label_column) {
      label_index = static_cast<long>(k);
      break;
    }
  }
  if (label_index < 0) {
    throw std::runtime_error("label column '" + options.label_column + "' not found");
  }

  CsvLoadResult result;
  for (std::size_t k = 0; k < header.size(); ++k) {
    if (static_cast<long>(k) != label_index) result.dataset.feature_names.push_back(header[k]);
  }

  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  long line_number = 1;
  while (std::getline(in, line)) {
    ++line_number;
    if (trim(line).empty()) continue;
    const std::vector<std::string> fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      ++result.dropped_rows;
      continue;
    }
    std::vector<double> row;
    row.reserve(header.size() - 1);
    int label = -1;
    bool missing = false;
    for (std::size_t k = 0; k < fields.size(); ++k) {
      const std::string& token = fields[k];
      if (static_cast<long>(k) == label_index) {
        if (!options.label_map.empty()) {
          const auto it = options.label_map.find(token);
          if (it == options.label_map.end()) {
            throw std::runtime_error("line " + std::to_string(line_number) +
                                     ": label '" + token + "' not in the label map");
          }
          label = it->second;
        } else {
          double v = 0.0;
          if (is_missing(token)) {
            missing = true;
          } else if (!parse_double(token, v) || (v != 0.0 && v != 1.0)) {
            throw std::runtime_error("label column '" + options.label_column +
                                     "' is not binary numeric; provide a label map");
          } else {
            label = static_cast<int>(v);
          }
        }
        continue;
      }
      double v = 0.0;
      if (is_missing(token)) {
        missing = true;
      } else if (!parse_double(token, v) || !std::isfinite(v)) {
        throw std::runtime_error("feature column '" + header[k] + "' is non-numeric at line " +
                                 std::to_string(line_number));
      } else {
        row.push_back(v);
      }
    }
    if (missing) {
      ++result.dropped_rows;
      continue;
    }
    rows.push_back(std::move(row));
    labels.push_back(label);
  }
  if (rows.empty()) throw std::runtime_error("no usable rows in " + path.string());

  result.dataset.features.resize(static_cast<Index>(rows.size()),
                                 static_cast<Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      result.dataset.features(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
    }
  }
  result.dataset.labels = std::move(labels);
  result.dataset.validate();
  return result;
}

void save_csv(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.precision(17);
  for (const std::string& name : dataset.feature_names) out << name << ',';
  out << "label\n";
  for (Index i = 0; i < dataset.rows(); ++i) {
    for (Index j = 0; j < dataset.cols(); ++j) out << dataset.features(i, j) << ',';
    out << dataset.labels[static_cast<std::size_t>(i)] << '\n';
  }
}

SplitIndices sample_splits(const Dataset& dataset, const SamplerConfig& sampler) {
  if (sampler.train_size < 2 || sampler.test_size < 1) {
    throw std::invalid_argument("sampler sizes must be positive (train >= 2)");
  }
  if (!(sampler.calibration_fraction >= 0.0 && sampler.calibration_fraction < 1.0)) {
    throw std::invalid_argument("calibration fraction must be in [0,1)");
  }
  std::vector<long> normals, anomalies;
  for (long i = 0; i < dataset.rows(); ++i) {
    (dataset.labels[static_cast<std::size_t>(i)] == 0 ? normals : anomalies).push_back(i);
  }
  if (static_cast<long>(normals.size()) < sampler.train_size) {
    throw std::runtime_error("not enough normal rows for the requested training size");
  }
  if (anomalies.empty()) {
    throw std::runtime_error("no anomalous rows: cannot build a stratified calibration/test split");
  }

  std::mt19937_64 rng(sampler.seed);
  std::shuffle(normals.begin(), normals.end(), rng);
  std::shuffle(anomalies.begin(), anomalies.end(), rng);

  SplitIndices splits;
  splits.train.assign(normals.begin(), normals.begin() + sampler.train_size);
  std::vector<long> pool_normals(normals.begin() + sampler.train_size, normals.end());

  auto carve = [&](std::vector<long>& from, long count) {
    std::vector<long> taken(from.begin(), from.begin() + count);
    from.erase(from.begin(), from.begin() + count);
    return taken;
  };

  const long pool_size = static_cast<long>(pool_normals.size() + anomalies.size());
  auto calibration_take = [&](long class_size) {
    long want = std::lround(sampler.calibration_fraction * static_cast<double>(class_size));
    if (sampler.calibration_fraction > 0.0 && class_size > 0) want = std::max<long>(want, 1);
    return std::min(want, class_size - 1);  // keep at least one row per class for testing
  };
  const long cal_normals = calibration_take(static_cast<long>(pool_normals.size()));
  const long cal_anomalies = calibration_take(static_cast<long>(anomalies.size()));
  for (long i : carve(pool_normals, std::max<long>(cal_normals, 0))) splits.calibration.push_back(i);
  for (long i : carve(anomalies, std::max<long>(cal_anomalies, 0))) splits.calibration.push_back(i);

  const long remaining = static_cast<long>(pool_normals.size() + anomalies.size());
  if (remaining < sampler.test_size) {
    throw std::runtime_error("not enough rows left for the requested test size (pool " +
                             std::to_string(pool_size) + ")");
  }
  const double anomaly_ratio =
      static_cast<double>(anomalies.size()) / static_cast<double>(remaining);
  long want_anomalies = std::lround(anomaly_ratio * static_cast<double>(sampler.test_size));
  want_anomalies = std::min<long>(want_anomalies, static_cast<long>(anomalies.size()));
  long want_normals = sampler.test_size - want_anomalies;
  if (want_normals > static_cast<long>(pool_normals.size())) {
    want_normals = static_cast<long>(pool_normals.size());
    want_anomalies = sampler.test_size - want_normals;
  }
  if (want_anomalies > static_cast<long>(anomalies.size())) {
    throw std::runtime_error("not enough rows for a stratified test split");
  }
  for (long i : carve(pool_normals, want_normals)) splits.test.push_back(i);
  for (long i : carve(anomalies, want_anomalies)) splits.test.push_back(i);

  std::sort(splits.train.begin(), splits.train.end());
  std::sort(splits.calibration.begin(), splits.calibration.end());
  std::sort(splits.test.begin(), splits.test.end());
  return splits;
}

NoiseModel BackendConfig::resolve_noise() const {
  NoiseModel model = custom_noise ? *custom_noise : qkad::noise_preset(noise_preset).model;
  model.validate();
  return model;
}

void ExperimentConfig::validate() const {
  if (csv_path.has_value() == synth.has_value()) {
    throw ConfigError("configure exactly one data source: dataset.csv or dataset.synth");
  }
  if (window < 1) throw ConfigError("window must be >= 1");
  if (target_features < 1) throw ConfigError("reducer feature count must be >= 1");
  if (workers < 1) throw ConfigError("workers must be >= 1");
  if (backend.shots < 0) throw ConfigError("shots must be >= 0");
  if (svm.nu_grid.empty() || svm.tol_grid.empty()) throw ConfigError("svm grids must be non-empty");
  for (double nu : svm.nu_grid) {
    if (!(nu > 0.0 && nu <= 1.0)) throw ConfigError("nu grid values must lie in (0,1]");
  }
  for (double tol : svm.tol_grid) {
    if (!(tol > 0.0)) throw ConfigError("tol grid values must be positive");
  }
  try {
    if (kernel.quantum) {
      if (kernel.feature_map.feature_count != target_features) {
        throw ConfigError("feature-map feature count must equal the reducer output count");
      }
      kernel.feature_map.validate();
      const int qubits = kernel.feature_map.qubit_count();
      if (backend.backend == Backend::Density && qubits > kMaxDensityQubits) {
        throw ConfigError("density backend limited to " + std::to_string(kMaxDensityQubits) +
                          " qubits");
      }
      if (backend.backend == Backend::Pure && qubits > kMaxPureQubits) {
        throw ConfigError("pure backend limited to " + std::to_string(kMaxPureQubits) + " qubits");
      }
    } else {
      kernel.classical.validate();
      if (backend.backend == Backend::Density) {
        throw ConfigError("classical kernels have no density backend");
      }
    }
    if (backend.backend == Backend::Density || backend.custom_noise.has_value()) {
      backend.resolve_noise();
    }
    if (synth) {
      if (!(synth->anomaly_fraction > 0.0 && synth->anomaly_fraction < 1.0)) {
        throw ConfigError("synth anomaly fraction must be in (0,1)");
      }
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}

NoiseModel noise_model_from_json(const json& doc) {
  NoiseModel model;
  model.p1q = doc.value("p1q", model.p1q);
  model.p2q = doc.value("p2q", model.p2q);
  if (doc.contains("T1")) model.t1_us = doc.at("T1").get<double>();
  if (doc.contains("T2")) model.t2_us = doc.at("T2").get<double>();
  model.d1q_ns = doc.value("d1q", model.d1q_ns);
  model.d2q_ns = doc.value("d2q", model.d2q_ns);
  model.d_meas_ns = doc.value("d_meas", model.d_meas_ns);
  model.readout_flip = doc.value("readout_flip", model.readout_flip);
  model.validate();
  return model;
}

namespace {

json noise_model_to_json(const NoiseModel& model) {
  json doc;
  doc["p1q"] = model.p1q;
  doc["p2q"] = model.p2q;
  if (!std::isinf(model.t1_us)) doc["T1"] = model.t1_us;
  if (!std::isinf(model.t2_us)) doc["T2"] = model.t2_us;
  doc["d1q"] = model.d1q_ns;
  doc["d2q"] = model.d2q_ns;
  doc["d_meas"] = model.d_meas_ns;
  doc["readout_flip"] = model.readout_flip;
  return doc;
}

}  // namespace

ExperimentConfig config_from_json(const json& doc) {
  try {
    ExperimentConfig config;
    const json dataset = doc.value("dataset", json::object());
    if (dataset.contains("csv")) {
      config.csv_path = dataset.at("csv").get<std::string>();
      config.csv.label_column = dataset.value("label_column", config.csv.label_column);
      if (dataset.contains("label_map")) {
        for (const auto& [key, value] : dataset.at("label_map").items()) {
          config.csv.label_map[key] = value.get<int>();
        }
      }
    }
    if (dataset.contains("synth")) {
      const json s = dataset.at("synth");
      SynthSpec spec;
      spec.samples = s.value("samples", spec.samples);
      spec.features = s.value("features", spec.features);
      spec.regimes = s.value("regimes", spec.regimes);
      spec.anomaly_fraction = s.value("anomaly_fraction", spec.anomaly_fraction);
      spec.shift_magnitude = s.value("shift_magnitude", spec.shift_magnitude);
      spec.noise_sigma = s.value("noise_sigma", spec.noise_sigma);
      spec.seed = s.value("seed", spec.seed);
      spec.anomaly_feature_count = s.value("anomaly_feature_count", spec.anomaly_feature_count);
      spec.anomaly_segment_length = s.value("anomaly_segment_length", spec.anomaly_segment_length);
      spec.anomaly_kind = anomaly_kind_from_string(s.value("anomaly_kind", "mean_shift"));
      config.synth = spec;
    }

    config.window = doc.value("window", config.window);
    const std::string agg = doc.value("label_aggregation", "any");
    if (agg == "any") config.aggregation = LabelAggregation::AnyAnomaly;
    else if (agg == "majority") config.aggregation = LabelAggregation::Majority;
    else throw ConfigError("unknown label aggregation: " + agg);

    const json sampler = doc.value("sampler", json::object());
    config.sampler.train_size = sampler.value("train_size", config.sampler.train_size);
    config.sampler.test_size = sampler.value("test_size", config.sampler.test_size);
    config.sampler.calibration_fraction =
        sampler.value("calibration_fraction", config.sampler.calibration_fraction);
    config.sampler.seed = sampler.value("seed", config.sampler.seed);

    const json reducer = doc.value("reducer", json::object());
    config.reducer = reducer_kind_from_string(reducer.value("kind", "tree"));
    config.target_features = reducer.value("features", config.target_features);
    config.tree.max_depth = reducer.value("max_depth", config.tree.max_depth);
    config.tree.min_leaf = reducer.value("min_leaf", config.tree.min_leaf);
    config.nmf.iterations = reducer.value("nmf_iterations", config.nmf.iterations);
    config.seed = doc.value("seed", config.seed);
    config.nmf.seed = reducer.value("nmf_seed", mix_seed(config.seed, 0x4e4d46));

    const json kernel = doc.value("kernel", json::object());
    const std::string type = kernel.value("type", "quantum");
    if (type == "quantum") {
      config.kernel.quantum = true;
      config.kernel.feature_map.family =
          feature_map_family_from_string(kernel.value("family", "simple2dof"));
      config.kernel.feature_map.repetitions = kernel.value("repetitions", 1);
      config.kernel.feature_map.bandwidth = kernel.value("bandwidth", 1.0);
      config.kernel.feature_map.feature_count = config.target_features;
    } else if (type == "classical") {
      config.kernel.quantum = false;
      config.kernel.classical.kind = classical_kind_from_string(kernel.value("kind", "rbf"));
      config.kernel.classical.gamma = kernel.value("gamma", config.kernel.classical.gamma);
      config.kernel.classical.degree = kernel.value("degree", config.kernel.classical.degree);
      config.kernel.classical.coef0 = kernel.value("coef0", config.kernel.classical.coef0);
      config.kernel.classical.scale = kernel.value("scale", config.kernel.classical.scale);
    } else {
      throw ConfigError("kernel type must be 'quantum' or 'classical'");
    }
    if (kernel.contains("exponentiate")) {
      config.kernel.exponentiate = kernel.at("exponentiate").get<bool>();
    }

    const json backend = doc.value("backend", json::object());
    const std::string backend_kind = backend.value("kind", "pure");
    if (backend_kind == "pure") config.backend.backend = Backend::Pure;
    else if (backend_kind == "density") config.backend.backend = Backend::Density;
    else throw ConfigError("backend kind must be 'pure' or 'density'");
    config.backend.noise_preset = backend.value("noise_preset", config.backend.noise_preset);
    if (backend.contains("custom_noise")) {
      config.backend.custom_noise = noise_model_from_json(backend.at("custom_noise"));
    }
    config.backend.shots = backend.value("shots", config.backend.shots);
    if (backend.contains("psd_clip")) {
      config.backend.psd_clip = backend.at("psd_clip").get<bool>();
    }

    const json svm = doc.value("svm", json::object());
    if (svm.contains("nu_grid")) config.svm.nu_grid = svm.at("nu_grid").get<std::vector<double>>();
    if (svm.contains("tol_grid")) {
      config.svm.tol_grid = svm.at("tol_grid").get<std::vector<double>>();
    }
    config.svm.max_iter = svm.value("max_iter", config.svm.max_iter);

    const json alignment = doc.value("alignment", json::object());
    config.alignment_on_exponentiated =
        alignment.value("on_exponentiated", config.alignment_on_exponentiated);
    if (alignment.contains("reference")) {
      const json ref = alignment.at("reference");
      ClassicalKernel reference;
      reference.kind = classical_kind_from_string(ref.value("kind", "rbf"));
      reference.gamma = ref.value("gamma", reference.gamma);
      reference.degree = ref.value("degree", reference.degree);
      reference.coef0 = ref.value("coef0", reference.coef0);
      reference.scale = ref.value("scale", reference.scale);
      config.alignment_reference = reference;
    }

    config.output_dir = doc.value("output_dir", config.output_dir.string());
    config.workers = doc.value("workers", config.workers);
    config.emit_csv = doc.value("emit_csv", config.emit_csv);
    return config;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
}

json config_to_json(const ExperimentConfig& config) {
  json doc;
  json dataset;
  if (config.csv_path) {
    dataset["csv"] = config.csv_path->string();
    dataset["label_column"] = config.csv.label_column;
    if (!config.csv.label_map.empty()) {
      json map;
      for (const auto& [key, value] : config.csv.label_map) map[key] = value;
      dataset["label_map"] = map;
    }
  }
  if (config.synth) {
    const SynthSpec& s = *config.synth;
    dataset["synth"] = {{"samples", s.samples},
                        {"features", s.features},
                        {"regimes", s.regimes},
                        {"anomaly_fraction", s.anomaly_fraction},
                        {"shift_magnitude", s.shift_magnitude},
                        {"noise_sigma", s.noise_sigma},
                        {"seed", s.seed},
                        {"anomaly_feature_count", s.anomaly_feature_count},
                        {"anomaly_segment_length", s.anomaly_segment_length},
                        {"anomaly_kind", to_string(s.anomaly_kind)}};
  }
  doc["dataset"] = dataset;
  doc["window"] = config.window;
  doc["label_aggregation"] =
      config.aggregation == LabelAggregation::AnyAnomaly ? "any" : "majority";
  doc["sampler"] = {{"train_size", config.sampler.train_size},
                    {"test_size", config.sampler.test_size},
                    {"calibration_fraction", config.sampler.calibration_fraction},
                    {"seed", config.sampler.seed}};
  json reducer = {{"kind", to_string(config.reducer)},
                  {"features", config.target_features},
                  {"max_depth", config.tree.max_depth},
                  {"min_leaf", config.tree.min_leaf}};
  if (config.reducer == ReducerKind::Nmf) {
    reducer["nmf_iterations"] = config.nmf.iterations;
    reducer["nmf_seed"] = config.nmf.seed;
  }
  doc["reducer"] = reducer;
  json kernel;
  if (config.kernel.quantum) {
    kernel = {{"type", "quantum"},
              {"family", to_string(config.kernel.feature_map.family)},
              {"repetitions", config.kernel.feature_map.repetitions},
              {"bandwidth", config.kernel.feature_map.bandwidth}};
  } else {
    kernel = {{"type", "classical"},
              {"kind", config.kernel.classical.kind == ClassicalKernel::Kind::Rbf ? "rbf"
                       : config.kernel.classical.kind == ClassicalKernel::Kind::Poly ? "poly"
                                                                                     : "linear"},
              {"gamma", config.kernel.classical.gamma},
              {"degree", config.kernel.classical.degree},
              {"coef0", config.kernel.classical.coef0},
              {"scale", config.kernel.classical.scale}};
  }
  if (config.kernel.exponentiate) kernel["exponentiate"] = *config.kernel.exponentiate;
  doc["kernel"] = kernel;
  json backend = {{"kind", config.backend.backend == Backend::Pure ? "pure" : "density"},
                  {"noise_preset", config.backend.noise_preset},
                  {"shots", config.backend.shots}};
  if (config.backend.custom_noise) {
    backend["custom_noise"] = noise_model_to_json(*config.backend.custom_noise);
  }
  if (config.backend.psd_clip) backend["psd_clip"] = *config.backend.psd_clip;
  doc["backend"] = backend;
  doc["svm"] = {{"nu_grid", config.svm.nu_grid},
                {"tol_grid", config.svm.tol_grid},
                {"max_iter", config.svm.max_iter}};
  json alignment = {{"on_exponentiated", config.alignment_on_exponentiated}};
  if (config.alignment_reference) {
    const ClassicalKernel& ref = *config.alignment_reference;
    alignment["reference"] = {
        {"kind", ref.kind == ClassicalKernel::Kind::Rbf ? "rbf"
                 : ref.kind == ClassicalKernel::Kind::Poly ? "poly"
                                                           : "linear"},
        {"gamma", ref.gamma},
        {"degree", ref.degree},
        {"coef0", ref.coef0},
        {"scale", ref.scale}};
  }
  doc["alignment"] = alignment;
  doc["output_dir"] = config.output_dir.string();
  doc["workers"] = config.workers;
  doc["seed"] = config.seed;
  doc["emit_csv"] = config.emit_csv;
  return doc;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const std::exception& e) {
    throw ConfigError("config parse error: " + std::string(e.what()));
  }
  return config_from_json(doc);
}

std::string dataset_hash_hex(const Dataset& dataset, const SamplerConfig& sampler, int window,
                             LabelAggregation aggregation) {
  std::uint64_t h = fnv1a64("qkad-dataset");
  const Index rows = dataset.rows(), cols = dataset.cols();
  h = fnv1a64(&rows, sizeof(rows), h);
  h = fnv1a64(&cols, sizeof(cols), h);
  h = fnv1a64(dataset.features.data(),
              sizeof(double) * static_cast<std::size_t>(rows * cols), h);
  h = fnv1a64(dataset.labels.data(), sizeof(int) * dataset.labels.size(), h);
  for (const std::string& name : dataset.feature_names) h = fnv1a64(name, h);
  h = fnv1a64(&window, sizeof(window), h);
  const int agg = aggregation == LabelAggregation::AnyAnomaly ? 0 : 1;
  h = fnv1a64(&agg, sizeof(agg), h);
  h = fnv1a64(&sampler.train_size, sizeof(sampler.train_size), h);
  h = fnv1a64(&sampler.test_size, sizeof(sampler.test_size), h);
  h = fnv1a64(&sampler.calibration_fraction, sizeof(sampler.calibration_fraction), h);
  h = fnv1a64(&sampler.seed, sizeof(sampler.seed), h);
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

json preprocessor_to_json(const FittedPreprocessor& pre) {
  json doc;
  doc["window"] = pre.window;
  doc["aggregation"] = pre.aggregation == LabelAggregation::AnyAnomaly ? "any" : "majority";
  doc["reducer"] = to_string(pre.reducer);
  doc["target_features"] = pre.target_features;
  doc["zscore"] = {{"mean", vector_to_json(pre.zscore.mean)},
                   {"stddev", vector_to_json(pre.zscore.stddev)},
                   {"constant", pre.zscore.constant}};
  switch (pre.reducer) {
    case ReducerKind::Tree:
      doc["tree"] = {{"selected_columns", pre.selected_columns},
                     {"importances", vector_to_json(pre.importances)}};
      break;
    case ReducerKind::Pca:
      doc["pca"] = {{"mean", rowvector_to_json(pre.pca.mean)},
                    {"components", matrix_to_json(pre.pca.components)},
                    {"explained_variance", vector_to_json(pre.pca.explained_variance)}};
      break;
    case ReducerKind::Nmf:
      doc["nmf"] = {{"basis", matrix_to_json(pre.nmf.basis)},
                    {"shift", rowvector_to_json(pre.nmf.shift)},
                    {"iterations", pre.nmf.options.iterations},
                    {"seed", pre.nmf.options.seed}};
      break;
  }
  return doc;
}

json scaler_to_json(const FeatureScaler& scaler) {
  json ranges = json::array();
  for (const auto& r : scaler.ranges) {
    ranges.push_back({{"min", r.min}, {"max", r.max}, {"degenerate", r.degenerate}});
  }
  return json{{"bandwidth", scaler.bandwidth}, {"ranges", ranges}};
}

RunReport run(const ExperimentConfig& config) {
  RunReport report;
  run_stage(report, "config", [&] { config.validate(); });
  report.config_echo = config_to_json(config);

  const Dataset dataset = run_stage(report, "ingest", [&] {
    return config.csv_path ? load_csv(*config.csv_path, config.csv).dataset
                           : synth_generate(*config.synth);
  });
  const Dataset windowed = run_stage(report, "window", [&] {
    return moving_average(dataset, config.window, config.aggregation);
  });
  report.dataset_hash = dataset_hash_hex(dataset, config.sampler, config.window,
                                         config.aggregation);
  const SplitIndices splits =
      run_stage(report, "split", [&] { return sample_splits(windowed, config.sampler); });

  const Eigen::MatrixXd train_raw = take_rows(windowed.features, splits.train);
  const Eigen::MatrixXd cal_raw = take_rows(windowed.features, splits.calibration);
  const Eigen::MatrixXd test_raw = take_rows(windowed.features, splits.test);
  const std::vector<int> cal_labels = take_labels(windowed.labels, splits.calibration);
  const std::vector<int> test_labels = take_labels(windowed.labels, splits.test);

  const FittedPreprocessor pre = run_stage(report, "preprocess", [&] {
    return fit_preprocessor(train_raw, cal_raw, cal_labels, config.reducer,
                            config.target_features, config.window, config.aggregation,
                            config.tree, config.nmf);
  });
  const Eigen::MatrixXd train_reduced = pre.transform(train_raw);
  const Eigen::MatrixXd test_reduced = pre.transform(test_raw);

  const double bandwidth = config.kernel.quantum ? config.kernel.feature_map.bandwidth : 1.0;
  const FeatureScaler scaler = run_stage(report, "scale", [&] {
    return FeatureScaler::fit(train_reduced, bandwidth);
  });
  const Eigen::MatrixXd train_scaled = scaler.scale_rows(train_reduced);
  const Eigen::MatrixXd test_scaled = scaler.scale_rows(test_reduced);

  const bool density = config.backend.backend == Backend::Density;
  NoiseModel noise;
  if (density) noise = config.backend.resolve_noise();
  GramOptions gram;
  gram.workers = config.workers;
  gram.shots = config.backend.shots;
  gram.seed = mix_seed(config.seed, 0x6772616d);
  gram.noise_label = density ? config.backend.noise_preset : "";

  auto make_gram = [&](const Eigen::MatrixXd& rows, const Eigen::MatrixXd& cols,
                       bool symmetric, Backend backend) {
    GramOptions opts = gram;
    opts.symmetric = symmetric;
    if (config.kernel.quantum) {
      return quantum_gram(rows, cols, config.kernel.feature_map, backend,
                          density && backend == Backend::Density ? &noise : nullptr, opts);
    }
    return classical_gram(rows, cols, config.kernel.classical, opts);
  };

  KernelMatrix train_kernel = run_stage(report, "train_kernel", [&] {
    return make_gram(train_scaled, train_scaled, true, config.backend.backend);
  });
  const Eigen::MatrixXd train_kernel_raw_values = train_kernel.values;
  const bool clip = config.backend.psd_clip.value_or(density);
  if (clip) {
    run_stage(report, "psd_floor", [&] {
      PsdFloorResult floor = psd_floor(train_kernel.values, true);
      report.psd_min_eigenvalue = floor.min_eigenvalue;
      train_kernel.values = std::move(floor.clipped);
    });
  }
  const KernelMatrix cross_kernel = run_stage(report, "test_kernel", [&] {
    return make_gram(test_scaled, train_scaled, false, config.backend.backend);
  });
  const KernelMatrix square_kernel = run_stage(report, "alignment_kernel", [&] {
    return make_gram(test_scaled, test_scaled, true, config.backend.backend);
  });

  const bool expo = config.kernel.exponentiate.value_or(config.kernel.quantum);
  const KernelMatrix train_svm = expo ? exponentiate(train_kernel) : train_kernel;
  const KernelMatrix cross_svm = expo ? exponentiate(cross_kernel) : cross_kernel;

  SweepConfig sweep_config = config.svm;
  sweep_config.workers = config.workers;
  const SweepResult best = run_stage(report, "sweep", [&] {
    return sweep(train_svm, cross_svm, test_labels, sweep_config);
  });
  report.best_nu = best.nu;
  report.best_tol = best.tol;
  report.metrics = best.metrics;

  run_stage(report, "align", [&] {
    if (config.alignment_on_exponentiated) {
      report.alignment.kta =
          kernel_target_alignment(exponentiate(square_kernel).values, test_labels);
    } else {
      report.alignment.kta = kernel_target_alignment(square_kernel.values, test_labels);
    }
    if (density) {
      const KernelMatrix ideal = make_gram(train_scaled, train_scaled, true, Backend::Pure);
      report.alignment.d_error =
          dissimilarity_error(ideal.values, train_kernel_raw_values);
    }
    if (config.alignment_reference) {
      GramOptions opts = gram;
      opts.symmetric = true;
      const KernelMatrix reference =
          classical_gram(test_scaled, test_scaled, *config.alignment_reference, opts);
      report.alignment.ka_vs_reference =
          kernel_alignment(square_kernel.values, reference.values);
    }
  });

  run_stage(report, "persist", [&] {
    namespace fs = std::filesystem;
    fs::create_directories(config.output_dir);
    const auto artifact = [&](const std::string& name) {
      return (config.output_dir / name).string();
    };
    save_kernel(train_svm, artifact("train_kernel.qkad"));
    report.artifacts["train_kernel"] = artifact("train_kernel.qkad");
    save_kernel(cross_svm, artifact("test_kernel.qkad"));
    report.artifacts["test_kernel"] = artifact("test_kernel.qkad");
    save_kernel(square_kernel, artifact("test_square_kernel.qkad"));
    report.artifacts["test_square_kernel"] = artifact("test_square_kernel.qkad");
    save_model(best.model, artifact("model.json"));
    report.artifacts["model"] = artifact("model.json");

    json audit;
    audit["splits"] = {{"train", splits.train},
                       {"calibration", splits.calibration},
                       {"test", splits.test}};
    audit["preprocessor"] = preprocessor_to_json(pre);
    audit["scaler"] = scaler_to_json(scaler);
    std::ofstream audit_out(artifact("preprocessor.json"));
    audit_out << audit.dump(2) << '\n';
    report.artifacts["preprocessor"] = artifact("preprocessor.json");

    if (config.emit_csv) {
      export_kernel_csv(train_svm, artifact("train_kernel.csv"));
      export_kernel_csv(cross_svm, artifact("test_kernel.csv"));
      Dataset processed_train{train_scaled, std::vector<int>(splits.train.size(), 0),
                              pre.output_names(windowed.feature_names)};
      save_csv(processed_train, artifact("train_features.csv"));
      Dataset processed_test{test_scaled, test_labels,
                             pre.output_names(windowed.feature_names)};
      save_csv(processed_test, artifact("test_features.csv"));
    }

    std::ofstream report_out(artifact("report.json"));
    report.artifacts["report"] = artifact("report.json");
    report_out << report_to_json(report).dump(2) << '\n';
  });

  return report;
}

json report_to_json(const RunReport& report) {
  json doc;
  doc["config"] = report.config_echo;
  doc["dataset_hash"] = report.dataset_hash;
  doc["best"] = {{"nu", report.best_nu}, {"tol", report.best_tol}};
  doc["metrics"] = {{"tp", report.metrics.tp},         {"fp", report.metrics.fp},
                    {"tn", report.metrics.tn},         {"fn", report.metrics.fn},
                    {"precision", report.metrics.precision},
                    {"recall", report.metrics.recall}, {"f1", report.metrics.f1},
                    {"accuracy", report.metrics.accuracy}};
  json alignment = {{"kta", report.alignment.kta}};
  if (report.alignment.d_error) alignment["d_error"] = *report.alignment.d_error;
  if (report.alignment.ka_vs_reference) {
    alignment["ka_vs_reference"] = *report.alignment.ka_vs_reference;
  }
  doc["alignment"] = alignment;
  if (report.psd_min_eigenvalue) doc["psd_min_eigenvalue"] = *report.psd_min_eigenvalue;
  doc["timings_s"] = report.timings_s;
  doc["artifacts"] = report.artifacts;
  return doc;
}

ComparisonResult compare(const std::vector<json>& reports, const std::vector<std::string>& names) {
  if (reports.size() < 2) throw std::invalid_argument("compare needs at least two reports");
  if (names.size() != reports.size()) throw std::invalid_argument("one name per report required");
  const std::string hash = reports.front().at("dataset_hash").get<std::string>();
  for (const json& report : reports) {
    if (report.at("dataset_hash").get<std::string>() != hash) {
      throw std::runtime_error("mismatched dataset hashes: reports describe different data");
    }
  }

  struct Row {
    std::string name;
    double precision, recall, f1, kta;
  };
  std::vector<Row> rows;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const json& metrics = reports[i].at("metrics");
    rows.push_back({names[i], metrics.at("precision").get<double>(),
                    metrics.at("recall").get<double>(), metrics.at("f1").get<double>(),
                    reports[i].at("alignment").at("kta").get<double>()});
  }

  const Row& base = rows.front();
  auto pct = [](double a, double b) {
    return b != 0.0 ? 100.0 * (a - b) / b : std::numeric_limits<double>::quiet_NaN();
  };

  std::ostringstream text, csv;
  csv << "name,precision,recall,f1,kta,precision_pct,recall_pct,f1_pct,kta_delta\n";
  char line[256];
  std::snprintf(line, sizeof(line), "%-24s %9s %9s %9s %11s %9s %9s %9s %11s\n", "name",
                "prec", "recall", "f1", "kta", "dP%", "dR%", "dF1%", "dKTA");
  text << line;
  for (const Row& row : rows) {
    const double dp = pct(row.precision, base.precision);
    const double dr = pct(row.recall, base.recall);
    const double df = pct(row.f1, base.f1);
    const double dk = row.kta - base.kta;
    std::snprintf(line, sizeof(line),
                  "%-24s %9.4f %9.4f %9.4f %11.4e %+9.2f %+9.2f %+9.2f %+11.4e\n",
                  row.name.c_str(), row.precision, row.recall, row.f1, row.kta, dp, dr, df, dk);
    text << line;
    csv << row.name << ',' << row.precision << ',' << row.recall << ',' << row.f1 << ','
        << row.kta << ',' << dp << ',' << dr << ',' << df << ',' << dk << '\n';
  }
  return {text.str(), csv.str()};
}

}  // namespace qkad
