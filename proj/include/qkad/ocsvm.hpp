#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qkad/kernel.hpp"

namespace qkad {

/// Fitted nu-one-class SVM over a precomputed kernel. Dual weights satisfy
/// 0 <= alpha_i <= 1/(nu m) and sum alpha = 1.
struct OcsvmModel {
  Eigen::VectorXd alpha;
  double rho = 0.0;
  double nu = 0.5;
  std::vector<int> support_indices;
  KernelStage kernel_stage = KernelStage::Raw;
  std::string kernel_source;
  long iterations = 0;
  double kkt_residual = 0.0;
};

struct FitOptions {
  double tol = 1e-4;
  long max_iter = 1000000;
};

/// Solves max_alpha -1/2 alpha^T K alpha over the simplex-with-box feasible
/// set by two-variable working-set updates on the most violating pair.
OcsvmModel fit_ocsvm(const KernelMatrix& train, double nu, const FitOptions& options = {});

/// f(x) = sum_j alpha_j K(x, x_j) - rho for each row of the cross kernel
/// (rows = eval points, cols = training points).
Eigen::VectorXd decision_scores(const OcsvmModel& model, const KernelMatrix& cross);

/// f >= 0 -> normal (0); f < 0 -> anomaly (1).
std::vector<int> predict(const Eigen::VectorXd& scores);

struct EvalMetrics {
  long tp = 0, fp = 0, tn = 0, fn = 0;
  double precision = 0.0, recall = 0.0, f1 = 0.0, accuracy = 0.0;
};

/// Counts with anomaly (1) as the positive class; undefined ratios are 0.
EvalMetrics evaluate(const std::vector<int>& predicted, const std::vector<int>& truth);

struct SweepCell {
  double nu = 0.0;
  double tol = 0.0;
  bool ok = false;
  EvalMetrics metrics;
  std::string error;
};

struct SweepConfig {
  std::vector<double> nu_grid{0.01, 0.02, 0.05, 0.1, 0.2, 0.3, 0.5};
  std::vector<double> tol_grid{1e-3, 1e-4, 1e-5};
  long max_iter = 1000000;
  int workers = 1;
};

struct SweepResult {
  double nu = 0.0;
  double tol = 0.0;
  EvalMetrics metrics;
  OcsvmModel model;
  std::vector<SweepCell> cells;
};

/// Trains one model per (nu, tol) grid point and returns the best-F1
/// configuration; ties break toward smaller nu, then smaller tol. Failed
/// cells record their error and do not abort the sweep.
SweepResult sweep(const KernelMatrix& train, const KernelMatrix& cross,
                  const std::vector<int>& truth, const SweepConfig& config = {});

void save_model(const OcsvmModel& model, const std::filesystem::path& path);
OcsvmModel load_model(const std::filesystem::path& path);

}  // namespace qkad
