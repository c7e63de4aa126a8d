#include "qkad/ocsvm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <json.hpp>

#include "qkad/util.hpp"

namespace qkad {

namespace {

using Index = Eigen::Index;

const char* stage_name(KernelStage stage) {
  return stage == KernelStage::Raw ? "raw" : "exponentiated";
}

KernelStage stage_from_name(const std::string& name) {
  if (name == "raw") return KernelStage::Raw;
  if (name == "exponentiated") return KernelStage::Exponentiated;
  throw std::runtime_error("unknown kernel stage: " + name);
}

}  // namespace

OcsvmModel fit_ocsvm(const KernelMatrix& train, double nu, const FitOptions& options) {
  const Eigen::MatrixXd& k = train.values;
  if (k.rows() != k.cols()) throw std::invalid_argument("training kernel must be square");
  const Index m = k.rows();
  if (m < 1) throw std::invalid_argument("training kernel is empty");
  if ((k - k.transpose()).cwiseAbs().maxCoeff() > 1e-8) {
    throw std::invalid_argument("training kernel is not symmetric");
  }
  if (!(nu > 0.0 && nu <= 1.0)) throw std::invalid_argument("nu must be in (0,1]");
  const double c = 1.0 / (nu * static_cast<double>(m));
  if (nu * static_cast<double>(m) < 1.0) {
    throw std::invalid_argument("nu*m must be at least 1");
  }

  // Uniform start: feasible for every nu, and degenerate duals (constant
  // objective) resolve to the symmetric solution instead of an arbitrary
  // vertex of the feasible set.
  Eigen::VectorXd alpha = Eigen::VectorXd::Constant(m, 1.0 / static_cast<double>(m));
  Eigen::VectorXd grad = k * alpha;

  long iterations = 0;
  double violation = 0.0;
  for (; iterations < options.max_iter; ++iterations) {
    // Most violating pair: raise the smallest gradient below the box cap,
    // drain the largest gradient with mass left to give.
    Index up = -1, down = -1;
    double g_up = std::numeric_limits<double>::infinity();
    double g_down = -std::numeric_limits<double>::infinity();
    for (Index i = 0; i < m; ++i) {
      if (alpha[i] < c && grad[i] < g_up) {
        g_up = grad[i];
        up = i;
      }
      if (alpha[i] > 0.0 && grad[i] > g_down) {
        g_down = grad[i];
        down = i;
      }
    }
    violation = (up >= 0 && down >= 0) ? g_down - g_up : 0.0;
    if (violation < options.tol) break;

    const double room = std::min(c - alpha[up], alpha[down]);
    const double curvature = k(up, up) + k(down, down) - 2.0 * k(up, down);
    double step = room;
    if (curvature > 1e-15) step = std::min(room, (g_down - g_up) / curvature);
    if (!(step > 0.0)) break;

    alpha[up] = std::min(alpha[up] + step, c);
    alpha[down] = std::max(alpha[down] - step, 0.0);
    grad += step * (k.col(up) - k.col(down));
  }

  OcsvmModel model;
  model.alpha = std::move(alpha);
  model.nu = nu;
  model.kernel_stage = train.stage;
  model.kernel_source = train.provenance.describe();
  model.iterations = iterations;
  model.kkt_residual = std::max(violation, 0.0);

  const double theta_low = 1e-8 / static_cast<double>(m);
  double rho_sum = 0.0;
  long margin_count = 0;
  double support_sum = 0.0;
  for (Index i = 0; i < m; ++i) {
    if (model.alpha[i] > theta_low) {
      model.support_indices.push_back(static_cast<int>(i));
      support_sum += grad[i];
      if (model.alpha[i] < c - theta_low) {
        rho_sum += grad[i];
        ++margin_count;
      }
    }
  }
  if (margin_count > 0) {
    model.rho = rho_sum / static_cast<double>(margin_count);
  } else if (!model.support_indices.empty()) {
    model.rho = support_sum / static_cast<double>(model.support_indices.size());
  }
  return model;
}

Eigen::VectorXd decision_scores(const OcsvmModel& model, const KernelMatrix& cross) {
  if (cross.cols() != model.alpha.size()) {
    throw std::invalid_argument("cross kernel columns must match the training size");
  }
  if (cross.stage != model.kernel_stage) {
    throw std::invalid_argument(std::string("kernel stage mismatch: model trained on ") +
                                stage_name(model.kernel_stage) + ", scoring " +
                                stage_name(cross.stage));
  }
  return (cross.values * model.alpha).array() - model.rho;
}

std::vector<int> predict(const Eigen::VectorXd& scores) {
  std::vector<int> labels(static_cast<std::size_t>(scores.size()));
  for (Index i = 0; i < scores.size(); ++i) {
    labels[static_cast<std::size_t>(i)] = scores[i] >= 0.0 ? 0 : 1;
  }
  return labels;
}

EvalMetrics evaluate(const std::vector<int>& predicted, const std::vector<int>& truth) {
  if (predicted.size() != truth.size()) throw std::invalid_argument("label length mismatch");
  EvalMetrics m;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool pred_anomaly = predicted[i] == 1;
    const bool true_anomaly = truth[i] == 1;
    if (pred_anomaly && true_anomaly) ++m.tp;
    else if (pred_anomaly && !true_anomaly) ++m.fp;
    else if (!pred_anomaly && true_anomaly) ++m.fn;
    else ++m.tn;
  }
  const long total = m.tp + m.fp + m.tn + m.fn;
  m.precision = (m.tp + m.fp) > 0 ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp) : 0.0;
  m.recall = (m.tp + m.fn) > 0 ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn) : 0.0;
  m.f1 = (m.precision + m.recall) > 0.0
             ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
             : 0.0;
  m.accuracy = total > 0 ? static_cast<double>(m.tp + m.tn) / static_cast<double>(total) : 0.0;
  return m;
}

SweepResult sweep(const KernelMatrix& train, const KernelMatrix& cross,
                  const std::vector<int>& truth, const SweepConfig& config) {
  if (config.nu_grid.empty() || config.tol_grid.empty()) {
    throw std::invalid_argument("sweep grids must be non-empty");
  }
  if (static_cast<Index>(truth.size()) != cross.rows()) {
    throw std::invalid_argument("truth length must match cross-kernel rows");
  }

  std::vector<SweepCell> cells(config.nu_grid.size() * config.tol_grid.size());
  std::vector<OcsvmModel> models(cells.size());
  for (std::size_t a = 0; a < config.nu_grid.size(); ++a) {
    for (std::size_t b = 0; b < config.tol_grid.size(); ++b) {
      auto& cell = cells[a * config.tol_grid.size() + b];
      cell.nu = config.nu_grid[a];
      cell.tol = config.tol_grid[b];
    }
  }
  parallel_for(cells.size(), config.workers, [&](std::size_t idx) {
    SweepCell& cell = cells[idx];
    try {
      FitOptions fit{cell.tol, config.max_iter};
      models[idx] = fit_ocsvm(train, cell.nu, fit);
      cell.metrics = evaluate(predict(decision_scores(models[idx], cross)), truth);
      cell.ok = true;
    } catch (const std::exception& e) {
      cell.error = e.what();
    }
  });

  long best = -1;
  for (std::size_t idx = 0; idx < cells.size(); ++idx) {
    if (!cells[idx].ok) continue;
    if (best < 0) {
      best = static_cast<long>(idx);
      continue;
    }
    const SweepCell& cand = cells[idx];
    const SweepCell& incumbent = cells[static_cast<std::size_t>(best)];
    if (cand.metrics.f1 > incumbent.metrics.f1 ||
        (cand.metrics.f1 == incumbent.metrics.f1 &&
         (cand.nu < incumbent.nu ||
          (cand.nu == incumbent.nu && cand.tol < incumbent.tol)))) {
      best = static_cast<long>(idx);
    }
  }
  if (best < 0) {
    std::string detail = cells.empty() ? "" : ": " + cells.front().error;
    throw std::runtime_error("every sweep cell failed" + detail);
  }

  SweepResult result;
  result.nu = cells[static_cast<std::size_t>(best)].nu;
  result.tol = cells[static_cast<std::size_t>(best)].tol;
  result.metrics = cells[static_cast<std::size_t>(best)].metrics;
  result.model = std::move(models[static_cast<std::size_t>(best)]);
  result.cells = std::move(cells);
  return result;
}

void save_model(const OcsvmModel& model, const std::filesystem::path& path) {
  nlohmann::json doc;
  doc["alpha"] = std::vector<double>(model.alpha.begin(), model.alpha.end());
  doc["rho"] = model.rho;
  doc["nu"] = model.nu;
  doc["support_indices"] = model.support_indices;
  doc["kernel_stage"] = stage_name(model.kernel_stage);
  doc["kernel_source"] = model.kernel_source;
  doc["provenance_hash"] = fnv1a64(model.kernel_source);
  doc["iterations"] = model.iterations;
  doc["kkt_residual"] = model.kkt_residual;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << doc.dump(2) << '\n';
}

OcsvmModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open model file " + path.string());
  nlohmann::json doc = nlohmann::json::parse(in);
  OcsvmModel model;
  const auto alpha = doc.at("alpha").get<std::vector<double>>();
  model.alpha = Eigen::Map<const Eigen::VectorXd>(alpha.data(), static_cast<Index>(alpha.size()));
  model.rho = doc.at("rho").get<double>();
  model.nu = doc.at("nu").get<double>();
  model.support_indices = doc.at("support_indices").get<std::vector<int>>();
  model.kernel_stage = stage_from_name(doc.at("kernel_stage").get<std::string>());
  model.kernel_source = doc.value("kernel_source", std::string{});
  model.iterations = doc.value("iterations", 0L);
  model.kkt_residual = doc.value("kkt_residual", 0.0);
  return model;
}

}  // namespace qkad
