#include "qkad/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>

#include <Eigen/SVD>

namespace qkad {

namespace {

using Index = Eigen::Index;

double gini(long count0, long count1) {
  const long total = count0 + count1;
  if (total == 0) return 0.0;
  const double p0 = static_cast<double>(count0) / static_cast<double>(total);
  const double p1 = static_cast<double>(count1) / static_cast<double>(total);
  return 1.0 - p0 * p0 - p1 * p1;
}

struct TreeBuilder {
  const Eigen::MatrixXd& x;
  const std::vector<int>& y;
  const TreeOptions& options;
  double total_weight;
  Eigen::VectorXd importance;

  TreeBuilder(const Eigen::MatrixXd& x_in, const std::vector<int>& y_in,
              const TreeOptions& options_in)
      : x(x_in), y(y_in), options(options_in),
        total_weight(static_cast<double>(x_in.rows())),
        importance(Eigen::VectorXd::Zero(x_in.cols())) {}

  void split(std::vector<Index>& rows, int depth) {
    const long n = static_cast<long>(rows.size());
    long ones = 0;
    for (Index r : rows) ones += y[static_cast<std::size_t>(r)];
    const double node_gini = gini(n - ones, ones);
    if (depth >= options.max_depth || n < 2 * options.min_leaf || node_gini == 0.0) return;

    int best_feature = -1;
    double best_threshold = 0.0;
    double best_decrease = 1e-15;
    for (Index k = 0; k < x.cols(); ++k) {
      std::vector<Index> order = rows;
      std::sort(order.begin(), order.end(),
                [&](Index a, Index b) { return x(a, k) < x(b, k); });
      long left_ones = 0;
      for (long i = 0; i + 1 < n; ++i) {
        left_ones += y[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
        const double v = x(order[static_cast<std::size_t>(i)], k);
        const double next = x(order[static_cast<std::size_t>(i + 1)], k);
        if (!(next > v)) continue;
        const long n_left = i + 1;
        const long n_right = n - n_left;
        if (n_left < options.min_leaf || n_right < options.min_leaf) continue;
        const double child =
            (static_cast<double>(n_left) * gini(n_left - left_ones, left_ones) +
             static_cast<double>(n_right) * gini(n_right - (ones - left_ones), ones - left_ones)) /
            static_cast<double>(n);
        const double decrease = node_gini - child;
        if (decrease > best_decrease) {
          best_decrease = decrease;
          best_feature = static_cast<int>(k);
          best_threshold = 0.5 * (v + next);
        }
      }
    }
    if (best_feature < 0) return;

    importance[best_feature] += static_cast<double>(n) / total_weight * best_decrease;
    std::vector<Index> left, right;
    left.reserve(rows.size());
    right.reserve(rows.size());
    for (Index r : rows) {
      (x(r, best_feature) <= best_threshold ? left : right).push_back(r);
    }
    rows.clear();
    rows.shrink_to_fit();
    split(left, depth + 1);
    split(right, depth + 1);
  }
};

}  // namespace

void Dataset::validate() const {
  if (static_cast<Index>(labels.size()) != rows()) {
    throw std::invalid_argument("label count does not match sample count");
  }
  for (int label : labels) {
    if (label != 0 && label != 1) throw std::invalid_argument("labels must be 0 or 1");
  }
  if (!features.allFinite()) throw std::invalid_argument("dataset contains non-finite values");
  if (static_cast<Index>(feature_names.size()) != cols()) {
    throw std::invalid_argument("feature name count does not match feature count");
  }
  std::set<std::string> seen(feature_names.begin(), feature_names.end());
  if (static_cast<Index>(seen.size()) != cols()) {
    throw std::invalid_argument("feature names must be unique");
  }
}

Eigen::MatrixXd moving_average(const Eigen::MatrixXd& matrix, int window) {
  if (window < 1) throw std::invalid_argument("window length must be >= 1");
  if (matrix.rows() < window) {
    throw std::invalid_argument("fewer samples than the window length");
  }
  const Index out_rows = matrix.rows() - window + 1;
  Eigen::MatrixXd out(out_rows, matrix.cols());
  Eigen::RowVectorXd running = matrix.topRows(window).colwise().sum();
  out.row(0) = running / static_cast<double>(window);
  for (Index t = 1; t < out_rows; ++t) {
    running += matrix.row(t + window - 1) - matrix.row(t - 1);
    out.row(t) = running / static_cast<double>(window);
  }
  return out;
}

Dataset moving_average(const Dataset& dataset, int window, LabelAggregation aggregation) {
  Dataset out;
  out.features = moving_average(dataset.features, window);
  out.feature_names = dataset.feature_names;
  const Index out_rows = out.features.rows();
  out.labels.resize(static_cast<std::size_t>(out_rows));
  long anomalies = 0;
  for (int i = 0; i < window; ++i) anomalies += dataset.labels[static_cast<std::size_t>(i)];
  for (Index t = 0; t < out_rows; ++t) {
    if (t > 0) {
      anomalies += dataset.labels[static_cast<std::size_t>(t + window - 1)] -
                   dataset.labels[static_cast<std::size_t>(t - 1)];
    }
    const bool anomalous = aggregation == LabelAggregation::AnyAnomaly
                               ? anomalies > 0
                               : 2 * anomalies > window;
    out.labels[static_cast<std::size_t>(t)] = anomalous ? 1 : 0;
  }
  return out;
}

ZScoreScaler ZScoreScaler::fit(const Eigen::MatrixXd& matrix) {
  if (matrix.rows() < 2) throw std::invalid_argument("z-score fit needs at least two rows");
  ZScoreScaler scaler;
  const double m = static_cast<double>(matrix.rows());
  scaler.mean = matrix.colwise().mean();
  scaler.stddev.resize(matrix.cols());
  scaler.constant.resize(static_cast<std::size_t>(matrix.cols()));
  for (Index k = 0; k < matrix.cols(); ++k) {
    const double var = (matrix.col(k).array() - scaler.mean[k]).square().sum() / m;
    const double sd = std::sqrt(var);
    scaler.constant[static_cast<std::size_t>(k)] = !(sd > 0.0);
    scaler.stddev[k] = sd > 0.0 ? sd : 1.0;
  }
  return scaler;
}

Eigen::MatrixXd ZScoreScaler::apply(const Eigen::MatrixXd& matrix) const {
  if (matrix.cols() != mean.size()) throw std::invalid_argument("feature count mismatch");
  Eigen::MatrixXd out(matrix.rows(), matrix.cols());
  for (Index k = 0; k < matrix.cols(); ++k) {
    if (constant[static_cast<std::size_t>(k)]) {
      out.col(k).setZero();
    } else {
      out.col(k) = (matrix.col(k).array() - mean[k]) / stddev[k];
    }
  }
  return out;
}

Eigen::VectorXd tree_importance(const Eigen::MatrixXd& matrix, const std::vector<int>& labels,
                                const TreeOptions& options) {
  if (static_cast<Index>(labels.size()) != matrix.rows()) {
    throw std::invalid_argument("label count does not match sample count");
  }
  long ones = 0;
  for (int label : labels) ones += label;
  if (ones == 0 || ones == static_cast<long>(labels.size())) {
    throw std::invalid_argument("tree importance needs both classes present");
  }
  TreeBuilder builder(matrix, labels, options);
  std::vector<Index> rows(static_cast<std::size_t>(matrix.rows()));
  std::iota(rows.begin(), rows.end(), Index{0});
  builder.split(rows, 0);
  const double total = builder.importance.sum();
  if (total > 0.0) return builder.importance / total;
  // No split cleared the thresholds; report indifference.
  return Eigen::VectorXd::Constant(matrix.cols(), 1.0 / static_cast<double>(matrix.cols()));
}

PcaModel PcaModel::fit(const Eigen::MatrixXd& matrix, int n_components) {
  if (n_components < 1 || n_components > std::min(matrix.rows(), matrix.cols())) {
    throw std::invalid_argument("PCA component count out of range");
  }
  PcaModel model;
  model.mean = matrix.colwise().mean();
  const Eigen::MatrixXd centered = matrix.rowwise() - model.mean;
  Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
  model.components = svd.matrixV().leftCols(n_components);
  model.explained_variance =
      svd.singularValues().head(n_components).array().square() /
      static_cast<double>(matrix.rows());
  return model;
}

Eigen::MatrixXd PcaModel::apply(const Eigen::MatrixXd& matrix) const {
  if (matrix.cols() != mean.size()) throw std::invalid_argument("feature count mismatch");
  return (matrix.rowwise() - mean) * components;
}

namespace {

constexpr double kNmfEps = 1e-12;

Eigen::MatrixXd random_factor(Index rows, Index cols, double scale, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  Eigen::MatrixXd m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) m(i, j) = scale * uniform(rng);
  }
  return m;
}

double nmf_objective(const Eigen::MatrixXd& x, const Eigen::MatrixXd& w,
                     const Eigen::MatrixXd& h) {
  return 0.5 * (x - w * h).squaredNorm();
}

void update_w(const Eigen::MatrixXd& x, Eigen::MatrixXd& w, const Eigen::MatrixXd& h) {
  const Eigen::MatrixXd numer = x * h.transpose();
  const Eigen::MatrixXd denom = w * (h * h.transpose());
  w = w.cwiseProduct(numer.cwiseQuotient(denom.array().max(kNmfEps).matrix()));
}

}  // namespace

NmfModel NmfModel::fit(const Eigen::MatrixXd& matrix, int n_components,
                       const NmfOptions& options) {
  if (n_components < 1 || n_components > matrix.cols()) {
    throw std::invalid_argument("NMF component count out of range");
  }
  if (matrix.rows() < 1) throw std::invalid_argument("NMF fit needs data");
  NmfModel model;
  model.options = options;
  model.shift = matrix.colwise().minCoeff().cwiseMin(0.0);
  Eigen::MatrixXd x = matrix.rowwise() - model.shift;
  if (x.minCoeff() < 0.0) throw std::invalid_argument("NMF input is negative after shift");

  std::mt19937_64 rng(options.seed);
  const double scale = std::sqrt(std::max(x.mean(), kNmfEps) / static_cast<double>(n_components));
  Eigen::MatrixXd w = random_factor(x.rows(), n_components, scale, rng);
  model.basis = random_factor(n_components, x.cols(), scale, rng);

  model.objective_history.reserve(static_cast<std::size_t>(options.iterations) + 1);
  model.objective_history.push_back(nmf_objective(x, w, model.basis));
  for (int it = 0; it < options.iterations; ++it) {
    const Eigen::MatrixXd numer = w.transpose() * x;
    const Eigen::MatrixXd denom = (w.transpose() * w) * model.basis;
    model.basis = model.basis.cwiseProduct(
        numer.cwiseQuotient(denom.array().max(kNmfEps).matrix()));
    update_w(x, w, model.basis);
    model.objective_history.push_back(nmf_objective(x, w, model.basis));
  }
  model.coefficients = std::move(w);
  return model;
}

Eigen::MatrixXd NmfModel::apply(const Eigen::MatrixXd& matrix) const {
  if (matrix.cols() != shift.size()) throw std::invalid_argument("feature count mismatch");
  // Values below the training minimum would turn negative; clamp like the
  // angle scaler does rather than leak test statistics into the shift.
  const Eigen::MatrixXd x =
      (matrix.rowwise() - shift).array().max(0.0).matrix();
  std::mt19937_64 rng(options.seed + 1);
  const double scale =
      std::sqrt(std::max(x.mean(), kNmfEps) / static_cast<double>(basis.rows()));
  Eigen::MatrixXd w = random_factor(x.rows(), basis.rows(), scale, rng);
  for (int it = 0; it < options.iterations; ++it) update_w(x, w, basis);
  return w;
}

ReducerKind reducer_kind_from_string(const std::string& name) {
  if (name == "tree") return ReducerKind::Tree;
  if (name == "pca") return ReducerKind::Pca;
  if (name == "nmf") return ReducerKind::Nmf;
  throw std::invalid_argument("unknown reducer: " + name);
}

const char* to_string(ReducerKind kind) {
  switch (kind) {
    case ReducerKind::Tree: return "tree";
    case ReducerKind::Pca: return "pca";
    case ReducerKind::Nmf: return "nmf";
  }
  return "?";
}

Eigen::MatrixXd FittedPreprocessor::reduce(const Eigen::MatrixXd& zscored) const {
  switch (reducer) {
    case ReducerKind::Tree: {
      if (zscored.cols() != importances.size()) {
        throw std::invalid_argument("feature count does not match the fitted reducer");
      }
      Eigen::MatrixXd out(zscored.rows(), static_cast<Index>(selected_columns.size()));
      for (std::size_t k = 0; k < selected_columns.size(); ++k) {
        out.col(static_cast<Index>(k)) = zscored.col(selected_columns[k]);
      }
      return out;
    }
    case ReducerKind::Pca:
      return pca.apply(zscored);
    case ReducerKind::Nmf:
      return nmf.apply(zscored);
  }
  throw std::logic_error("unknown reducer kind");
}

Eigen::MatrixXd FittedPreprocessor::transform(const Eigen::MatrixXd& raw) const {
  return reduce(zscore.apply(raw));
}

std::vector<std::string> FittedPreprocessor::output_names(
    const std::vector<std::string>& input_names) const {
  std::vector<std::string> names;
  names.reserve(static_cast<std::size_t>(target_features));
  if (reducer == ReducerKind::Tree) {
    for (int col : selected_columns) names.push_back(input_names.at(static_cast<std::size_t>(col)));
  } else {
    const char* prefix = reducer == ReducerKind::Pca ? "pc" : "nmf";
    for (int k = 0; k < target_features; ++k) names.push_back(prefix + std::to_string(k));
  }
  return names;
}

FittedPreprocessor fit_preprocessor(const Eigen::MatrixXd& train,
                                    const Eigen::MatrixXd& calibration,
                                    const std::vector<int>& calibration_labels,
                                    ReducerKind reducer, int target_features, int window,
                                    LabelAggregation aggregation,
                                    const TreeOptions& tree_options,
                                    const NmfOptions& nmf_options) {
  if (target_features < 1 || target_features > train.cols()) {
    throw std::invalid_argument("target feature count out of range");
  }
  FittedPreprocessor pre;
  pre.window = window;
  pre.aggregation = aggregation;
  pre.reducer = reducer;
  pre.target_features = target_features;
  pre.zscore = ZScoreScaler::fit(train);
  switch (reducer) {
    case ReducerKind::Tree: {
      pre.importances =
          tree_importance(pre.zscore.apply(calibration), calibration_labels, tree_options);
      std::vector<int> order(static_cast<std::size_t>(train.cols()));
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return pre.importances[a] > pre.importances[b];
      });
      pre.selected_columns.assign(order.begin(), order.begin() + target_features);
      break;
    }
    case ReducerKind::Pca:
      pre.pca = PcaModel::fit(pre.zscore.apply(train), target_features);
      break;
    case ReducerKind::Nmf:
      pre.nmf = NmfModel::fit(pre.zscore.apply(train), target_features, nmf_options);
      break;
  }
  return pre;
}

}  // namespace qkad
