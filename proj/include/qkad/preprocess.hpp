#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace qkad {

/// Labelled sample matrix; label 0 = normal, 1 = anomaly.
struct Dataset {
  Eigen::MatrixXd features;  // samples x features
  std::vector<int> labels;
  std::vector<std::string> feature_names;

  Eigen::Index rows() const { return features.rows(); }
  Eigen::Index cols() const { return features.cols(); }
  void validate() const;
};

enum class LabelAggregation { AnyAnomaly, Majority };

/// Trailing moving average with stride 1: output row t (t = w-1..m-1)
/// averages input rows t-w+1..t.
Eigen::MatrixXd moving_average(const Eigen::MatrixXd& matrix, int window);

/// Windowed dataset; a window is anomalous if >= 1 sample in it is anomalous
/// (AnyAnomaly) or if more than half are (Majority).
Dataset moving_average(const Dataset& dataset, int window,
                       LabelAggregation aggregation = LabelAggregation::AnyAnomaly);

/// Standard scaler with population normalization; constant training features
/// are flagged and map to 0.
struct ZScoreScaler {
  Eigen::VectorXd mean;
  Eigen::VectorXd stddev;
  std::vector<bool> constant;

  static ZScoreScaler fit(const Eigen::MatrixXd& matrix);
  Eigen::MatrixXd apply(const Eigen::MatrixXd& matrix) const;
};

struct TreeOptions {
  int max_depth = 8;
  int min_leaf = 5;
};

/// Gini importance of each feature from a CART-style binary tree, normalized
/// to sum 1. Requires both classes in `labels`.
Eigen::VectorXd tree_importance(const Eigen::MatrixXd& matrix, const std::vector<int>& labels,
                                const TreeOptions& options = {});

struct PcaModel {
  Eigen::RowVectorXd mean;
  Eigen::MatrixXd components;          // features x n, orthonormal columns
  Eigen::VectorXd explained_variance;  // non-increasing

  static PcaModel fit(const Eigen::MatrixXd& matrix, int n_components);
  Eigen::MatrixXd apply(const Eigen::MatrixXd& matrix) const;
};

struct NmfOptions {
  int iterations = 200;
  std::uint64_t seed = 0;
};

/// Frobenius-objective NMF by multiplicative updates. Inputs are shifted
/// non-negative with a per-feature training minimum; `apply` solves the
/// coefficient matrix for new rows with the basis held fixed.
struct NmfModel {
  Eigen::MatrixXd basis;         // n_components x features, non-negative
  Eigen::MatrixXd coefficients;  // training W from the fit, rows x n_components
  Eigen::RowVectorXd shift;      // subtracted before factorization
  NmfOptions options;
  std::vector<double> objective_history;

  static NmfModel fit(const Eigen::MatrixXd& matrix, int n_components,
                      const NmfOptions& options = {});
  Eigen::MatrixXd apply(const Eigen::MatrixXd& matrix) const;
};

enum class ReducerKind { Tree, Pca, Nmf };

ReducerKind reducer_kind_from_string(const std::string& name);
const char* to_string(ReducerKind kind);

/// Everything needed to map raw windowed rows to model-ready features:
/// z-score statistics plus one fitted reducer. All statistics come from
/// training (or labelled calibration) rows only.
struct FittedPreprocessor {
  int window = 60;
  LabelAggregation aggregation = LabelAggregation::AnyAnomaly;
  ZScoreScaler zscore;
  ReducerKind reducer = ReducerKind::Tree;
  int target_features = 0;

  std::vector<int> selected_columns;  // Tree: original indices, importance-descending
  Eigen::VectorXd importances;        // Tree audit trail
  PcaModel pca;
  NmfModel nmf;

  /// Reduces an already z-scored matrix to `target_features` columns.
  Eigen::MatrixXd reduce(const Eigen::MatrixXd& zscored) const;
  /// Full transform of raw windowed rows: z-score then reduce.
  Eigen::MatrixXd transform(const Eigen::MatrixXd& raw) const;
  std::vector<std::string> output_names(const std::vector<std::string>& input_names) const;
};

/// Fits the z-score on training rows and the reducer on its natural split:
/// the Gini tree needs labels, so it fits on the calibration rows (z-scored
/// with training statistics); PCA and NMF fit on the training rows.
FittedPreprocessor fit_preprocessor(const Eigen::MatrixXd& train,
                                    const Eigen::MatrixXd& calibration,
                                    const std::vector<int>& calibration_labels,
                                    ReducerKind reducer, int target_features, int window,
                                    LabelAggregation aggregation,
                                    const TreeOptions& tree_options = {},
                                    const NmfOptions& nmf_options = {});

}  // namespace qkad
