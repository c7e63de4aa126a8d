#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "qkad/pipeline.hpp"

namespace {

using nlohmann::json;

void print_metrics(const qkad::EvalMetrics& m) {
  std::printf("tp=%ld fp=%ld tn=%ld fn=%ld\n", m.tp, m.fp, m.tn, m.fn);
  std::printf("precision=%.4f recall=%.4f f1=%.4f accuracy=%.4f\n", m.precision, m.recall,
              m.f1, m.accuracy);
}

std::vector<int> labels_from_csv(const std::string& path, const std::string& label_column) {
  qkad::CsvOptions options;
  options.label_column = label_column;
  return qkad::load_csv(path, options).dataset.labels;
}

void add_synth_command(CLI::App& app) {
  auto* cmd = app.add_subcommand("synth", "Generate a synthetic labelled dataset CSV");
  auto spec = std::make_shared<qkad::SynthSpec>();
  auto out = std::make_shared<std::string>();
  auto kind = std::make_shared<std::string>("mean_shift");
  cmd->add_option("--samples", spec->samples, "Sample count");
  cmd->add_option("--features", spec->features, "Feature count");
  cmd->add_option("--regimes", spec->regimes, "Normal operating regimes");
  cmd->add_option("--anomaly-fraction", spec->anomaly_fraction, "Anomalous sample fraction");
  cmd->add_option("--shift", spec->shift_magnitude, "Shift magnitude in feature sigmas");
  cmd->add_option("--noise-sigma", spec->noise_sigma, "Signal noise scale");
  cmd->add_option("--seed", spec->seed, "Generator seed");
  cmd->add_option("--anomaly-features", spec->anomaly_feature_count,
                  "Features hit by anomalies (0 = features/3)");
  cmd->add_option("--segment-length", spec->anomaly_segment_length, "Anomaly segment length");
  cmd->add_option("--kind", *kind, "Anomaly kind: mean_shift|stuck_at|mixed");
  cmd->add_option("--out", *out, "Output CSV path")->required();
  cmd->callback([spec, out, kind] {
    spec->anomaly_kind = qkad::anomaly_kind_from_string(*kind);
    qkad::save_csv(qkad::synth_generate(*spec), *out);
    std::printf("wrote %s\n", out->c_str());
  });
}

struct PrepArgs {
  std::string data;
  std::string label_column = "label";
  int window = 60;
  std::string aggregation = "any";
  std::string reducer = "tree";
  int features = 8;
  int nmf_iterations = 200;
  std::uint64_t nmf_seed = 0;
  int tree_depth = 8;
  int min_leaf = 5;
  long train_size = 1000;
  long test_size = 1000;
  double cal_fraction = 0.2;
  std::uint64_t sampler_seed = 1;
  double bandwidth = 1.0;
  std::string out_dir = "prep_out";
};

void add_prep_command(CLI::App& app) {
  auto* cmd = app.add_subcommand(
      "prep", "Window, standardize, reduce and scale a dataset into split CSVs");
  auto args = std::make_shared<PrepArgs>();
  cmd->add_option("--data", args->data, "Input CSV")->required();
  cmd->add_option("--label-column", args->label_column, "Label column name");
  cmd->add_option("--window", args->window, "Moving-average window");
  cmd->add_option("--aggregation", args->aggregation, "Window labels: any|majority");
  cmd->add_option("--reducer", args->reducer, "Reducer: tree|pca|nmf");
  cmd->add_option("--features", args->features, "Output feature count");
  cmd->add_option("--nmf-iterations", args->nmf_iterations, "NMF iterations");
  cmd->add_option("--nmf-seed", args->nmf_seed, "NMF init seed");
  cmd->add_option("--tree-depth", args->tree_depth, "Tree max depth");
  cmd->add_option("--min-leaf", args->min_leaf, "Tree min leaf size");
  cmd->add_option("--train-size", args->train_size, "Training rows (normal only)");
  cmd->add_option("--test-size", args->test_size, "Test rows (stratified)");
  cmd->add_option("--cal-fraction", args->cal_fraction, "Calibration share of the mixed pool");
  cmd->add_option("--sampler-seed", args->sampler_seed, "Split seed");
  cmd->add_option("--bandwidth", args->bandwidth, "Kernel bandwidth c in (0,1]");
  cmd->add_option("--out-dir", args->out_dir, "Output directory");
  cmd->callback([args] {
    qkad::CsvOptions csv;
    csv.label_column = args->label_column;
    const qkad::Dataset raw = qkad::load_csv(args->data, csv).dataset;
    const qkad::LabelAggregation agg = args->aggregation == "majority"
                                           ? qkad::LabelAggregation::Majority
                                           : qkad::LabelAggregation::AnyAnomaly;
    const qkad::Dataset windowed = qkad::moving_average(raw, args->window, agg);
    qkad::SamplerConfig sampler{args->train_size, args->test_size, args->cal_fraction,
                                args->sampler_seed};
    const qkad::SplitIndices splits = qkad::sample_splits(windowed, sampler);

    auto rows_of = [&](const std::vector<long>& idx) {
      Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), windowed.cols());
      for (std::size_t i = 0; i < idx.size(); ++i) {
        out.row(static_cast<Eigen::Index>(i)) = windowed.features.row(idx[i]);
      }
      return out;
    };
    auto labels_of = [&](const std::vector<long>& idx) {
      std::vector<int> out(idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i) {
        out[i] = windowed.labels[static_cast<std::size_t>(idx[i])];
      }
      return out;
    };

    const qkad::FittedPreprocessor pre = qkad::fit_preprocessor(
        rows_of(splits.train), rows_of(splits.calibration), labels_of(splits.calibration),
        qkad::reducer_kind_from_string(args->reducer), args->features, args->window, agg,
        {args->tree_depth, args->min_leaf}, {args->nmf_iterations, args->nmf_seed});
    const Eigen::MatrixXd train_reduced = pre.transform(rows_of(splits.train));
    const qkad::FeatureScaler scaler = qkad::FeatureScaler::fit(train_reduced, args->bandwidth);

    std::filesystem::create_directories(args->out_dir);
    const std::vector<std::string> names = pre.output_names(windowed.feature_names);
    auto emit = [&](const char* file, const std::vector<long>& idx) {
      qkad::Dataset split{scaler.scale_rows(pre.transform(rows_of(idx))), labels_of(idx), names};
      qkad::save_csv(split, std::filesystem::path(args->out_dir) / file);
    };
    emit("train.csv", splits.train);
    emit("calibration.csv", splits.calibration);
    emit("test.csv", splits.test);

    json audit;
    audit["splits"] = {{"train", splits.train},
                       {"calibration", splits.calibration},
                       {"test", splits.test}};
    audit["preprocessor"] = qkad::preprocessor_to_json(pre);
    audit["scaler"] = qkad::scaler_to_json(scaler);
    std::ofstream out(std::filesystem::path(args->out_dir) / "preprocessor.json");
    out << audit.dump(2) << '\n';
    std::printf("wrote train/calibration/test CSVs under %s\n", args->out_dir.c_str());
  });
}

struct KernelArgs {
  std::string rows;
  std::string cols;
  std::string label_column = "label";
  std::string type = "quantum";
  std::string family = "simple2dof";
  int repetitions = 1;
  double bandwidth = 1.0;
  std::string classical_kind = "rbf";
  double gamma = 1.0;
  int degree = 3;
  double coef0 = 0.0;
  double scale = 1.0;
  std::string backend = "pure";
  std::string noise_preset = "Torino";
  long shots = 0;
  std::uint64_t seed = 0;
  int workers = 1;
  bool symmetric = false;
  std::string out;
  std::string csv_out;
};

void add_kernel_command(CLI::App& app) {
  auto* cmd = app.add_subcommand("kernel", "Build a Gram matrix from processed feature CSVs");
  auto args = std::make_shared<KernelArgs>();
  cmd->add_option("--rows", args->rows, "Row-point CSV (scaled features)")->required();
  cmd->add_option("--cols", args->cols, "Col-point CSV; defaults to --rows");
  cmd->add_option("--label-column", args->label_column, "Label column to ignore");
  cmd->add_option("--type", args->type, "quantum|classical");
  cmd->add_option("--family", args->family, "Feature map: belis|simple2dof|sakhnenko10|zz");
  cmd->add_option("--repetitions", args->repetitions, "Feature-map repetitions");
  cmd->add_option("--bandwidth", args->bandwidth, "Bandwidth used when the data was scaled");
  cmd->add_option("--kind", args->classical_kind, "Classical kernel: rbf|poly|linear");
  cmd->add_option("--gamma", args->gamma, "RBF gamma");
  cmd->add_option("--degree", args->degree, "Poly degree");
  cmd->add_option("--coef0", args->coef0, "Poly coef0");
  cmd->add_option("--scale", args->scale, "Poly scale");
  cmd->add_option("--backend", args->backend, "pure|density");
  cmd->add_option("--noise-preset", args->noise_preset, "Density-backend noise preset");
  cmd->add_option("--shots", args->shots, "Shot count (0 = exact)");
  cmd->add_option("--seed", args->seed, "Shot-sampling seed");
  cmd->add_option("--workers", args->workers, "Worker threads");
  cmd->add_flag("--symmetric", args->symmetric, "Rows and cols are the same points");
  cmd->add_option("--out", args->out, "Output .qkad path")->required();
  cmd->add_option("--csv", args->csv_out, "Also export the matrix as CSV");
  cmd->callback([args] {
    qkad::CsvOptions csv;
    csv.label_column = args->label_column;
    const Eigen::MatrixXd rows = qkad::load_csv(args->rows, csv).dataset.features;
    const Eigen::MatrixXd cols = args->cols.empty()
                                     ? rows
                                     : qkad::load_csv(args->cols, csv).dataset.features;
    qkad::GramOptions options;
    options.symmetric = args->symmetric || args->cols.empty();
    options.workers = args->workers;
    options.shots = args->shots;
    options.seed = args->seed;

    qkad::KernelMatrix kernel;
    if (args->type == "quantum") {
      qkad::FeatureMapSpec spec;
      spec.family = qkad::feature_map_family_from_string(args->family);
      spec.repetitions = args->repetitions;
      spec.bandwidth = args->bandwidth;
      spec.feature_count = static_cast<int>(rows.cols());
      const qkad::Backend backend =
          args->backend == "density" ? qkad::Backend::Density : qkad::Backend::Pure;
      if (backend == qkad::Backend::Density) {
        const qkad::NoiseModel noise = qkad::noise_preset(args->noise_preset).model;
        options.noise_label = args->noise_preset;
        kernel = qkad::quantum_gram(rows, cols, spec, backend, &noise, options);
      } else {
        kernel = qkad::quantum_gram(rows, cols, spec, backend, nullptr, options);
      }
    } else {
      qkad::ClassicalKernel classical;
      classical.kind = qkad::classical_kind_from_string(args->classical_kind);
      classical.gamma = args->gamma;
      classical.degree = args->degree;
      classical.coef0 = args->coef0;
      classical.scale = args->scale;
      kernel = qkad::classical_gram(rows, cols, classical, options);
    }
    qkad::save_kernel(kernel, args->out);
    if (!args->csv_out.empty()) qkad::export_kernel_csv(kernel, args->csv_out);
    std::printf("wrote %ldx%ld kernel to %s\n", static_cast<long>(kernel.rows()),
                static_cast<long>(kernel.cols()), args->out.c_str());
  });
}

void add_train_command(CLI::App& app) {
  auto* cmd = app.add_subcommand("train", "Fit a nu-one-class SVM on a training kernel");
  auto kernel_path = std::make_shared<std::string>();
  auto out = std::make_shared<std::string>();
  auto nu = std::make_shared<double>(0.1);
  auto tol = std::make_shared<double>(1e-4);
  auto max_iter = std::make_shared<long>(1000000);
  auto exponentiate_flag = std::make_shared<bool>(false);
  cmd->add_option("--kernel", *kernel_path, "Training kernel .qkad")->required();
  cmd->add_option("--nu", *nu, "Outlier-fraction bound in (0,1]");
  cmd->add_option("--tol", *tol, "KKT tolerance");
  cmd->add_option("--max-iter", *max_iter, "Iteration cap");
  cmd->add_flag("--exponentiate", *exponentiate_flag, "Exponentiate the kernel before fitting");
  cmd->add_option("--out", *out, "Model JSON path")->required();
  cmd->callback([kernel_path, out, nu, tol, max_iter, exponentiate_flag] {
    qkad::KernelMatrix kernel = qkad::load_kernel(*kernel_path);
    if (*exponentiate_flag) kernel = qkad::exponentiate(kernel);
    const qkad::OcsvmModel model = qkad::fit_ocsvm(kernel, *nu, {*tol, *max_iter});
    qkad::save_model(model, *out);
    std::printf("fitted nu=%.4f rho=%.6f supports=%zu iterations=%ld\n", model.nu, model.rho,
                model.support_indices.size(), model.iterations);
  });
}

void add_eval_command(CLI::App& app) {
  auto* cmd = app.add_subcommand("eval", "Score a cross kernel against a model and labels");
  auto model_path = std::make_shared<std::string>();
  auto kernel_path = std::make_shared<std::string>();
  auto labels_path = std::make_shared<std::string>();
  auto label_column = std::make_shared<std::string>("label");
  auto out = std::make_shared<std::string>();
  auto exponentiate_flag = std::make_shared<bool>(false);
  cmd->add_option("--model", *model_path, "Model JSON")->required();
  cmd->add_option("--kernel", *kernel_path, "Cross kernel .qkad (rows = eval points)")
      ->required();
  cmd->add_option("--labels", *labels_path, "CSV holding the truth labels")->required();
  cmd->add_option("--label-column", *label_column, "Label column name");
  cmd->add_flag("--exponentiate", *exponentiate_flag, "Exponentiate the kernel before scoring");
  cmd->add_option("--out", *out, "Write metrics JSON here");
  cmd->callback([model_path, kernel_path, labels_path, label_column, out, exponentiate_flag] {
    const qkad::OcsvmModel model = qkad::load_model(*model_path);
    qkad::KernelMatrix kernel = qkad::load_kernel(*kernel_path);
    if (*exponentiate_flag) kernel = qkad::exponentiate(kernel);
    const std::vector<int> truth = labels_from_csv(*labels_path, *label_column);
    const qkad::EvalMetrics metrics =
        qkad::evaluate(qkad::predict(qkad::decision_scores(model, kernel)), truth);
    print_metrics(metrics);
    if (!out->empty()) {
      json doc = {{"tp", metrics.tp},       {"fp", metrics.fp},
                  {"tn", metrics.tn},       {"fn", metrics.fn},
                  {"precision", metrics.precision}, {"recall", metrics.recall},
                  {"f1", metrics.f1},       {"accuracy", metrics.accuracy}};
      std::ofstream f(*out);
      f << doc.dump(2) << '\n';
    }
  });
}

void add_align_command(CLI::App& app) {
  auto* cmd = app.add_subcommand("align", "Kernel alignment metrics between kernels or labels");
  auto k1 = std::make_shared<std::string>();
  auto k2 = std::make_shared<std::string>();
  auto labels_path = std::make_shared<std::string>();
  auto label_column = std::make_shared<std::string>("label");
  cmd->add_option("--k1", *k1, "First kernel .qkad")->required();
  cmd->add_option("--k2", *k2, "Second kernel .qkad (KA and D_Error)");
  cmd->add_option("--labels", *labels_path, "Labels CSV (KTA of --k1)");
  cmd->add_option("--label-column", *label_column, "Label column name");
  cmd->callback([k1, k2, labels_path, label_column] {
    const qkad::KernelMatrix kernel1 = qkad::load_kernel(*k1);
    if (!k2->empty()) {
      const qkad::KernelMatrix kernel2 = qkad::load_kernel(*k2);
      const double ka = qkad::kernel_alignment(kernel1.values, kernel2.values);
      std::printf("KA=%.8f\nD_Error=%.8e\n", ka, 1.0 - ka);
    }
    if (!labels_path->empty()) {
      const std::vector<int> labels = labels_from_csv(*labels_path, *label_column);
      std::printf("KTA=%.8e\n", qkad::kernel_target_alignment(kernel1.values, labels));
    }
    if (k2->empty() && labels_path->empty()) {
      throw qkad::ConfigError("align needs --k2 and/or --labels");
    }
  });
}

void add_run_command(CLI::App& app) {
  auto* cmd = app.add_subcommand("run", "Execute a full experiment from a JSON config");
  auto config_path = std::make_shared<std::string>();
  auto out_dir = std::make_shared<std::string>();
  auto seed = std::make_shared<std::int64_t>(-1);
  auto workers = std::make_shared<int>(0);
  auto emit_csv = std::make_shared<bool>(false);
  cmd->add_option("--config", *config_path, "Experiment config JSON")->required();
  cmd->add_option("--out-dir", *out_dir, "Override the output directory");
  cmd->add_option("--seed", *seed, "Override the master seed");
  cmd->add_option("--workers", *workers, "Override the worker count");
  cmd->add_flag("--emit-csv", *emit_csv, "Also export kernels and features as CSV");
  cmd->callback([config_path, out_dir, seed, workers, emit_csv] {
    qkad::ExperimentConfig config = qkad::load_config(*config_path);
    if (!out_dir->empty()) config.output_dir = *out_dir;
    if (*seed >= 0) config.seed = static_cast<std::uint64_t>(*seed);
    if (*workers > 0) config.workers = *workers;
    if (*emit_csv) config.emit_csv = true;
    const qkad::RunReport report = qkad::run(config);
    std::printf("dataset %s  best nu=%.3f tol=%.0e\n", report.dataset_hash.c_str(),
                report.best_nu, report.best_tol);
    print_metrics(report.metrics);
    std::printf("KTA=%.6e", report.alignment.kta);
    if (report.alignment.d_error) std::printf("  D_Error=%.6e", *report.alignment.d_error);
    if (report.alignment.ka_vs_reference) {
      std::printf("  KA_vs_ref=%.6f", *report.alignment.ka_vs_reference);
    }
    std::printf("\nreport: %s\n", report.artifacts.at("report").c_str());
  });
}

void add_compare_command(CLI::App& app) {
  auto* cmd = app.add_subcommand("compare", "Tabulate metrics across run reports");
  auto paths = std::make_shared<std::vector<std::string>>();
  auto csv_out = std::make_shared<std::string>();
  cmd->add_option("reports", *paths, "report.json files (first is the baseline)")
      ->required()
      ->expected(2, -1);
  cmd->add_option("--csv", *csv_out, "Write the comparison as CSV");
  cmd->callback([paths, csv_out] {
    std::vector<json> reports;
    std::vector<std::string> names;
    for (const std::string& path : *paths) {
      std::ifstream in(path);
      if (!in) throw std::runtime_error("cannot open report " + path);
      reports.push_back(json::parse(in));
      names.push_back(std::filesystem::path(path).parent_path().filename().string() + "/" +
                      std::filesystem::path(path).filename().string());
    }
    const qkad::ComparisonResult result = qkad::compare(reports, names);
    std::fputs(result.text_table.c_str(), stdout);
    if (!csv_out->empty()) {
      std::ofstream out(*csv_out);
      out << result.csv;
    }
  });
}

void add_noise_presets_command(CLI::App& app) {
  auto* cmd = app.add_subcommand("noise-presets", "List the built-in hardware noise snapshots");
  cmd->callback([] {
    std::printf("%-12s %10s %10s %10s %10s %9s %9s\n", "name", "eplg", "p1q", "p2q", "readout",
                "T1(us)", "T2(us)");
    for (const qkad::NoisePreset& preset : qkad::noise_presets()) {
      const qkad::NoiseModel& m = preset.model;
      std::printf("%-12s %10.2e %10.3e %10.3e %10.3e %9.2f %9.2f\n", preset.name.c_str(),
                  preset.best_2q_eplg, m.p1q, m.p2q, m.readout_flip, m.t1_us, m.t2_us);
    }
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quantum-kernel anomaly detection toolkit"};
  app.require_subcommand(1);
  add_synth_command(app);
  add_prep_command(app);
  add_kernel_command(app);
  add_train_command(app);
  add_eval_command(app);
  add_align_command(app);
  add_run_command(app);
  add_compare_command(app);
  add_noise_presets_command(app);

  try {
    app.parse(argc, argv);
    return 0;
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const qkad::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
}
