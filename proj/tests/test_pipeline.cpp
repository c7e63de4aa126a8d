#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "qkad/pipeline.hpp"

using namespace qkad;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path temp_dir(const char* name) {
  const fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

ExperimentConfig small_synth_config(const fs::path& out_dir) {
  ExperimentConfig config;
  SynthSpec synth;
  synth.samples = 1200;
  synth.features = 8;
  synth.anomaly_fraction = 0.12;
  synth.shift_magnitude = 4.0;
  synth.seed = 5;
  config.synth = synth;
  config.window = 20;
  config.sampler = {200, 150, 0.2, 9};
  config.reducer = ReducerKind::Tree;
  config.target_features = 8;
  config.kernel.feature_map = {FeatureMapFamily::Simple2DoF, 1, 1.0, 8};
  config.svm.nu_grid = {0.05, 0.1, 0.2};
  config.svm.tol_grid = {1e-4};
  config.output_dir = out_dir;
  config.workers = 2;
  config.seed = 31;
  return config;
}

}  // namespace

TEST_CASE("toy CSV round-trips through load_csv") {
  const fs::path dir = temp_dir("qkad_csv");
  const fs::path file = dir / "toy.csv";
  std::ofstream(file) << "a,b,label\n1.5,2,0\n-3,0.25,1\n4,5,0\n";
  const CsvLoadResult result = load_csv(file);
  CHECK(result.dropped_rows == 0);
  REQUIRE(result.dataset.rows() == 3);
  CHECK(result.dataset.features(0, 0) == 1.5);
  CHECK(result.dataset.features(1, 1) == 0.25);
  CHECK(result.dataset.labels == std::vector<int>{0, 1, 0});
  CHECK(result.dataset.feature_names == std::vector<std::string>{"a", "b"});

  // save then reload
  save_csv(result.dataset, dir / "copy.csv");
  const CsvLoadResult copy = load_csv(dir / "copy.csv");
  CHECK((copy.dataset.features - result.dataset.features).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("string labels map through the label map") {
  const fs::path dir = temp_dir("qkad_csv_map");
  const fs::path file = dir / "mapped.csv";
  std::ofstream(file) << "x,state\n1,Normal\n2,Attack\n3,Normal\n";
  CsvOptions options;
  options.label_column = "state";
  options.label_map = {{"Normal", 0}, {"Attack", 1}};
  const CsvLoadResult result = load_csv(file, options);
  CHECK(result.dataset.labels == std::vector<int>{0, 1, 0});

  CsvOptions incomplete = options;
  incomplete.label_map = {{"Normal", 0}};
  CHECK_THROWS_WITH_AS(static_cast<void>(load_csv(file, incomplete)),
                       doctest::Contains("not in the label map"), std::runtime_error);
}

TEST_CASE("rows with missing values are dropped and counted") {
  const fs::path dir = temp_dir("qkad_csv_nan");
  const fs::path file = dir / "gaps.csv";
  std::ofstream(file) << "a,b,label\n1,2,0\nnan,3,0\n4,,1\n5,6,1\n";
  const CsvLoadResult result = load_csv(file);
  CHECK(result.dropped_rows == 2);
  CHECK(result.dataset.rows() == 2);
}

TEST_CASE("csv loader rejects bad schemas with named errors") {
  const fs::path dir = temp_dir("qkad_csv_bad");
  std::ofstream(dir / "nolabel.csv") << "a,b\n1,2\n";
  CHECK_THROWS_WITH_AS(static_cast<void>(load_csv(dir / "nolabel.csv")),
                       doctest::Contains("label column"), std::runtime_error);
  std::ofstream(dir / "text.csv") << "a,b,label\n1,fast,0\n";
  CHECK_THROWS_WITH_AS(static_cast<void>(load_csv(dir / "text.csv")),
                       doctest::Contains("column 'b'"), std::runtime_error);
  std::ofstream(dir / "empty.csv") << "a,label\nnan,0\n";
  CHECK_THROWS_WITH_AS(static_cast<void>(load_csv(dir / "empty.csv")),
                       doctest::Contains("no usable rows"), std::runtime_error);
  CHECK_THROWS_AS(static_cast<void>(load_csv(dir / "absent.csv")), std::runtime_error);
}

TEST_CASE("synthetic data is deterministic under the seed") {
  SynthSpec spec;
  spec.samples = 500;
  const Dataset a = synth_generate(spec);
  const Dataset b = synth_generate(spec);
  CHECK((a.features - b.features).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.labels == b.labels);
  spec.seed += 1;
  const Dataset c = synth_generate(spec);
  CHECK((a.features - c.features).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("synthetic anomaly fraction lands near the request") {
  SynthSpec spec;
  spec.samples = 4000;
  spec.anomaly_fraction = 0.1;
  const Dataset data = synth_generate(spec);
  long anomalies = 0;
  for (int label : data.labels) anomalies += label;
  CHECK(anomalies > 300);
  CHECK(anomalies < 500);
}

TEST_CASE("zero shift produces statistically indistinguishable anomalies") {
  SynthSpec spec;
  spec.samples = 2000;
  spec.shift_magnitude = 0.0;
  const Dataset data = synth_generate(spec);
  // column means of anomalous rows stay near the normal ones
  Eigen::RowVectorXd normal_mean = Eigen::RowVectorXd::Zero(data.cols());
  Eigen::RowVectorXd anomaly_mean = Eigen::RowVectorXd::Zero(data.cols());
  long normal = 0, anomalous = 0;
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    if (data.labels[static_cast<std::size_t>(i)] == 0) {
      normal_mean += data.features.row(i);
      ++normal;
    } else {
      anomaly_mean += data.features.row(i);
      ++anomalous;
    }
  }
  normal_mean /= static_cast<double>(normal);
  anomaly_mean /= static_cast<double>(anomalous);
  CHECK((normal_mean - anomaly_mean).cwiseAbs().maxCoeff() < 1.0);
}

TEST_CASE("six-sigma shifts put the shifted features on top of the tree ranking") {
  SynthSpec spec;
  spec.samples = 3000;
  spec.features = 8;
  spec.shift_magnitude = 6.0;
  spec.anomaly_feature_count = 3;
  spec.seed = 77;
  const Dataset data = synth_generate(spec);

  // identify the shifted features by mean displacement
  std::vector<std::pair<double, int>> displacement;
  for (Eigen::Index k = 0; k < data.cols(); ++k) {
    double normal_sum = 0, anomaly_sum = 0;
    long normal = 0, anomalous = 0;
    for (Eigen::Index i = 0; i < data.rows(); ++i) {
      if (data.labels[static_cast<std::size_t>(i)] == 0) {
        normal_sum += data.features(i, k);
        ++normal;
      } else {
        anomaly_sum += data.features(i, k);
        ++anomalous;
      }
    }
    displacement.push_back({std::abs(anomaly_sum / anomalous - normal_sum / normal),
                            static_cast<int>(k)});
  }
  std::sort(displacement.rbegin(), displacement.rend());
  std::set<int> shifted = {displacement[0].second, displacement[1].second,
                           displacement[2].second};

  const Eigen::VectorXd importance = tree_importance(data.features, data.labels);
  std::vector<std::pair<double, int>> ranked;
  for (Eigen::Index k = 0; k < importance.size(); ++k) {
    ranked.push_back({importance[k], static_cast<int>(k)});
  }
  std::sort(ranked.rbegin(), ranked.rend());
  for (int r = 0; r < 3; ++r) CHECK(shifted.count(ranked[static_cast<std::size_t>(r)].second) == 1);
}

TEST_CASE("splits are disjoint, normal-only in train, and stratified") {
  SynthSpec spec;
  spec.samples = 5000;
  const Dataset data = synth_generate(spec);
  SamplerConfig sampler{1000, 1000, 0.2, 3};
  const SplitIndices splits = sample_splits(data, sampler);
  CHECK(splits.train.size() == 1000);
  CHECK(splits.test.size() == 1000);

  std::set<long> all;
  for (long i : splits.train) {
    CHECK(data.labels[static_cast<std::size_t>(i)] == 0);
    all.insert(i);
  }
  for (long i : splits.calibration) all.insert(i);
  for (long i : splits.test) all.insert(i);
  CHECK(all.size() == splits.train.size() + splits.calibration.size() + splits.test.size());

  // calibration holds both classes
  long cal_anomalies = 0;
  for (long i : splits.calibration) cal_anomalies += data.labels[static_cast<std::size_t>(i)];
  CHECK(cal_anomalies > 0);
  CHECK(cal_anomalies < static_cast<long>(splits.calibration.size()));

  // test stratification matches the pool ratio within two percent
  long pool_anomalies = 0, pool = 0;
  std::set<long> train_set(splits.train.begin(), splits.train.end());
  std::set<long> cal_set(splits.calibration.begin(), splits.calibration.end());
  for (long i = 0; i < data.rows(); ++i) {
    if (train_set.count(i) || cal_set.count(i)) continue;
    ++pool;
    pool_anomalies += data.labels[static_cast<std::size_t>(i)];
  }
  long test_anomalies = 0;
  for (long i : splits.test) test_anomalies += data.labels[static_cast<std::size_t>(i)];
  const double pool_ratio = static_cast<double>(pool_anomalies) / static_cast<double>(pool);
  const double test_ratio = static_cast<double>(test_anomalies) / 1000.0;
  CHECK(std::abs(pool_ratio - test_ratio) < 0.02);
}

TEST_CASE("all-normal datasets cannot produce labelled splits") {
  Dataset data;
  data.features = Eigen::MatrixXd::Random(50, 2);
  data.labels.assign(50, 0);
  data.feature_names = {"a", "b"};
  CHECK_THROWS_WITH_AS(static_cast<void>(sample_splits(data, {10, 10, 0.2, 1})),
                       doctest::Contains("no anomalous rows"), std::runtime_error);
}

TEST_CASE("config JSON round-trips") {
  const ExperimentConfig config = small_synth_config("out");
  const json doc = config_to_json(config);
  const ExperimentConfig parsed = config_from_json(doc);
  CHECK(config_to_json(parsed) == doc);
  CHECK(parsed.synth->samples == 1200);
  CHECK(parsed.kernel.feature_map.family == FeatureMapFamily::Simple2DoF);
  CHECK(parsed.svm.nu_grid == config.svm.nu_grid);
}

TEST_CASE("config validation produces ConfigError") {
  ExperimentConfig config = small_synth_config("out");
  config.synth.reset();
  CHECK_THROWS_AS(config.validate(), ConfigError);

  config = small_synth_config("out");
  config.target_features = 6;  // feature map still says 8
  CHECK_THROWS_AS(config.validate(), ConfigError);

  config = small_synth_config("out");
  config.kernel.quantum = false;
  config.backend.backend = Backend::Density;
  CHECK_THROWS_AS(config.validate(), ConfigError);

  config = small_synth_config("out");
  config.backend.backend = Backend::Density;
  config.backend.noise_preset = "Osaka";
  CHECK_THROWS_AS(config.validate(), ConfigError);
}

TEST_CASE("custom noise JSON uses the documented field names") {
  const json doc = {{"p1q", 1e-4}, {"p2q", 1e-3},       {"T1", 150.0},         {"T2", 120.0},
                    {"d1q", 40.0}, {"d2q", 250.0},      {"d_meas", 900.0},     {"readout_flip", 0.02}};
  const NoiseModel model = noise_model_from_json(doc);
  CHECK(model.p1q == doctest::Approx(1e-4));
  CHECK(model.t2_us == doctest::Approx(120.0));
  CHECK(model.d_meas_ns == doctest::Approx(900.0));
}

TEST_CASE("run produces a coherent report and persists its artifacts") {
  const fs::path dir = temp_dir("qkad_run");
  const ExperimentConfig config = small_synth_config(dir);
  const RunReport report = run(config);

  CHECK(report.metrics.tp + report.metrics.fn > 0);
  CHECK(report.alignment.kta > 0.0);
  CHECK_FALSE(report.alignment.d_error.has_value());
  CHECK(fs::exists(dir / "train_kernel.qkad"));
  CHECK(fs::exists(dir / "test_kernel.qkad"));
  CHECK(fs::exists(dir / "test_square_kernel.qkad"));
  CHECK(fs::exists(dir / "model.json"));
  CHECK(fs::exists(dir / "report.json"));
  CHECK(fs::exists(dir / "preprocessor.json"));

  // config echo matches the input exactly
  CHECK(report.config_echo == config_to_json(config));

  // persisted report parses and repeats the metrics
  const json persisted = json::parse(read_file(dir / "report.json"));
  CHECK(persisted.at("metrics").at("f1").get<double>() == doctest::Approx(report.metrics.f1));
  CHECK(persisted.at("dataset_hash").get<std::string>() == report.dataset_hash);
}

TEST_CASE("two runs of one config are bit-identical") {
  const fs::path dir_a = temp_dir("qkad_det_a");
  const fs::path dir_b = temp_dir("qkad_det_b");
  ExperimentConfig config = small_synth_config(dir_a);
  const RunReport a = run(config);
  config.output_dir = dir_b;
  config.workers = 1;  // determinism must not depend on the worker count
  const RunReport b = run(config);

  CHECK(a.metrics.f1 == b.metrics.f1);
  CHECK(a.metrics.tp == b.metrics.tp);
  CHECK(a.best_nu == b.best_nu);
  CHECK(a.alignment.kta == b.alignment.kta);
  CHECK(read_file(dir_a / "train_kernel.qkad") == read_file(dir_b / "train_kernel.qkad"));
  CHECK(read_file(dir_a / "test_kernel.qkad") == read_file(dir_b / "test_kernel.qkad"));
}

TEST_CASE("ideal density backend reproduces the pure run") {
  const fs::path dir_pure = temp_dir("qkad_pure");
  const fs::path dir_density = temp_dir("qkad_density");
  ExperimentConfig config = small_synth_config(dir_pure);
  config.synth->samples = 400;
  config.sampler = {60, 50, 0.25, 9};
  config.target_features = 4;
  config.kernel.feature_map.feature_count = 4;
  config.svm.nu_grid = {0.1};
  const RunReport pure = run(config);

  config.output_dir = dir_density;
  config.backend.backend = Backend::Density;
  config.backend.noise_preset = "Ideal";
  const RunReport density = run(config);

  CHECK(density.metrics.f1 == doctest::Approx(pure.metrics.f1).epsilon(1e-6));
  CHECK(density.metrics.tp == pure.metrics.tp);
  CHECK(density.alignment.kta == doctest::Approx(pure.alignment.kta).epsilon(1e-6));
  CHECK(density.alignment.d_error.has_value());
  CHECK(*density.alignment.d_error < 1e-9);
}

TEST_CASE("rerunning from persisted kernels reproduces the metrics") {
  const fs::path dir = temp_dir("qkad_rerun");
  ExperimentConfig config = small_synth_config(dir);
  const RunReport report = run(config);

  const KernelMatrix train = load_kernel(dir / "train_kernel.qkad");
  const KernelMatrix cross = load_kernel(dir / "test_kernel.qkad");
  // recover the truth labels from the windowed dataset and persisted split
  const Dataset data = synth_generate(*config.synth);
  const Dataset windowed = moving_average(data, config.window, config.aggregation);
  const json audit = json::parse(read_file(dir / "preprocessor.json"));
  std::vector<int> truth;
  for (long idx : audit.at("splits").at("test").get<std::vector<long>>()) {
    truth.push_back(windowed.labels[static_cast<std::size_t>(idx)]);
  }
  SweepConfig sweep_config = config.svm;
  sweep_config.workers = config.workers;
  const SweepResult again = sweep(train, cross, truth, sweep_config);
  CHECK(again.metrics.f1 == report.metrics.f1);
  CHECK(again.metrics.tp == report.metrics.tp);
  CHECK(again.nu == report.best_nu);
}

TEST_CASE("no leakage: train rows alone reproduce the persisted preprocessor") {
  const fs::path dir = temp_dir("qkad_leak");
  ExperimentConfig config = small_synth_config(dir);
  run(config);

  const json audit = json::parse(read_file(dir / "preprocessor.json"));
  const Dataset data = synth_generate(*config.synth);
  const Dataset windowed = moving_average(data, config.window, config.aggregation);
  const auto train_idx = audit.at("splits").at("train").get<std::vector<long>>();
  const auto cal_idx = audit.at("splits").at("calibration").get<std::vector<long>>();

  Eigen::MatrixXd train(static_cast<Eigen::Index>(train_idx.size()), windowed.cols());
  for (std::size_t i = 0; i < train_idx.size(); ++i) {
    train.row(static_cast<Eigen::Index>(i)) = windowed.features.row(train_idx[i]);
  }
  Eigen::MatrixXd cal(static_cast<Eigen::Index>(cal_idx.size()), windowed.cols());
  std::vector<int> cal_labels;
  for (std::size_t i = 0; i < cal_idx.size(); ++i) {
    cal.row(static_cast<Eigen::Index>(i)) = windowed.features.row(cal_idx[i]);
    cal_labels.push_back(windowed.labels[static_cast<std::size_t>(cal_idx[i])]);
  }

  const FittedPreprocessor pre =
      fit_preprocessor(train, cal, cal_labels, config.reducer, config.target_features,
                       config.window, config.aggregation, config.tree, config.nmf);
  CHECK(preprocessor_to_json(pre) == audit.at("preprocessor"));

  const FeatureScaler scaler =
      FeatureScaler::fit(pre.transform(train), config.kernel.feature_map.bandwidth);
  CHECK(scaler_to_json(scaler) == audit.at("scaler"));
}

TEST_CASE("compare tabulates reports and guards the dataset hash") {
  json report;
  report["dataset_hash"] = "abc";
  report["metrics"] = {{"precision", 0.8}, {"recall", 0.8}, {"f1", 0.8}};
  report["alignment"] = {{"kta", 0.05}};
  json improved = report;
  improved["metrics"]["f1"] = 0.9;

  const ComparisonResult self = compare({report, report}, {"base", "same"});
  CHECK(self.csv.find("same,0.8,0.8,0.8,0.05,0,0,0,0") != std::string::npos);

  const ComparisonResult gain = compare({report, improved}, {"base", "better"});
  CHECK(gain.csv.find("better,0.8,0.8,0.9,0.05,0,0,12.5,0") != std::string::npos);

  json other = report;
  other["dataset_hash"] = "xyz";
  CHECK_THROWS_WITH_AS(static_cast<void>(compare({report, other}, {"a", "b"})),
                       doctest::Contains("mismatched dataset hashes"), std::runtime_error);
  CHECK_THROWS_AS(static_cast<void>(compare({report}, {"a"})), std::invalid_argument);
}

TEST_CASE("dataset hash keys on contents and sampler seed") {
  SynthSpec spec;
  spec.samples = 300;
  const Dataset a = synth_generate(spec);
  SamplerConfig sampler;
  const std::string h1 = dataset_hash_hex(a, sampler, 60, LabelAggregation::AnyAnomaly);
  const std::string h2 = dataset_hash_hex(a, sampler, 60, LabelAggregation::AnyAnomaly);
  CHECK(h1 == h2);
  sampler.seed += 1;
  CHECK(dataset_hash_hex(a, sampler, 60, LabelAggregation::AnyAnomaly) != h1);
  spec.seed += 1;
  const Dataset b = synth_generate(spec);
  SamplerConfig base;
  CHECK(dataset_hash_hex(b, base, 60, LabelAggregation::AnyAnomaly) != h1);
}
