#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "oracle.hpp"
#include "qkad/ocsvm.hpp"

using namespace qkad;

namespace {

KernelMatrix wrap(const Eigen::MatrixXd& values, KernelStage stage = KernelStage::Raw) {
  KernelMatrix k;
  k.values = values;
  k.stage = stage;
  return k;
}

double dual_objective(const Eigen::MatrixXd& k, const Eigen::VectorXd& alpha) {
  return -0.5 * alpha.dot(k * alpha);
}

Eigen::VectorXd random_feasible(Eigen::Index m, double c, std::mt19937_64& rng) {
  // Rejection-free: draw uniform, project onto the simplex, then push box
  // violations back down until the vector is feasible.
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::VectorXd alpha(m);
  for (Eigen::Index i = 0; i < m; ++i) alpha[i] = u(rng);
  alpha /= alpha.sum();
  for (int pass = 0; pass < 200; ++pass) {
    double excess = 0.0;
    double headroom = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (alpha[i] > c) {
        excess += alpha[i] - c;
        alpha[i] = c;
      } else {
        headroom += c - alpha[i];
      }
    }
    if (excess <= 0.0) break;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (alpha[i] < c) alpha[i] += excess * (c - alpha[i]) / headroom;
    }
  }
  return alpha;
}

}  // namespace

TEST_CASE("two identical points split the mass evenly") {
  const OcsvmModel model = fit_ocsvm(wrap(Eigen::MatrixXd::Ones(2, 2)), 0.5);
  CHECK(model.alpha[0] == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(model.alpha[1] == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(model.rho == doctest::Approx(1.0).epsilon(1e-9));

  // a third identical point scores exactly on the boundary
  KernelMatrix cross = wrap(Eigen::MatrixXd::Ones(1, 2));
  const Eigen::VectorXd scores = decision_scores(model, cross);
  CHECK(scores[0] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("nu = 1 forces the uniform dual point") {
  std::mt19937_64 rng(3);
  const Eigen::MatrixXd k = oracle::random_psd(10, rng);
  const OcsvmModel model = fit_ocsvm(wrap(k), 1.0);
  CHECK((model.alpha.array() - 0.1).abs().maxCoeff() < 1e-12);
}

TEST_CASE("fit validates nu and kernel shape") {
  std::mt19937_64 rng(5);
  const Eigen::MatrixXd k = oracle::random_psd(8, rng);
  CHECK_THROWS_AS(fit_ocsvm(wrap(k), 0.0), std::invalid_argument);
  CHECK_THROWS_AS(fit_ocsvm(wrap(k), 1.5), std::invalid_argument);
  CHECK_THROWS_AS(fit_ocsvm(wrap(k), 0.05), std::invalid_argument);  // nu*m < 1
  Eigen::MatrixXd asym = k;
  asym(0, 1) += 1.0;
  CHECK_THROWS_AS(fit_ocsvm(wrap(asym), 0.5), std::invalid_argument);
}

TEST_CASE("solver beats ten thousand random feasible points") {
  std::mt19937_64 rng(7);
  const Eigen::Index m = 40;
  const Eigen::MatrixXd k = oracle::random_psd(m, rng);
  const double nu = 0.3;
  const OcsvmModel model = fit_ocsvm(wrap(k), nu, {1e-6, 2000000});
  const double solver_objective = dual_objective(k, model.alpha);
  const double c = 1.0 / (nu * static_cast<double>(m));
  for (int trial = 0; trial < 10000; ++trial) {
    const Eigen::VectorXd alpha = random_feasible(m, c, rng);
    CHECK(solver_objective >= dual_objective(k, alpha) - 1e-9);
  }
}

TEST_CASE("fitted duals are feasible with small KKT residual") {
  std::mt19937_64 rng(9);
  for (double nu : {0.1, 0.3, 0.7}) {
    const Eigen::Index m = 60;
    const Eigen::MatrixXd k = oracle::random_psd(m, rng);
    const double tol = 1e-5;
    const OcsvmModel model = fit_ocsvm(wrap(k), nu, {tol, 2000000});
    const double c = 1.0 / (nu * static_cast<double>(m));
    CHECK(model.alpha.minCoeff() >= -1e-9);
    CHECK(model.alpha.maxCoeff() <= c + 1e-9);
    CHECK(model.alpha.sum() == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(model.kkt_residual < tol);
  }
}

TEST_CASE("nu bounds outliers and supports on the training set") {
  std::mt19937_64 rng(11);
  for (const Eigen::Index m : {50, 200}) {
    for (const double nu : {0.05, 0.1, 0.3}) {
      if (nu * static_cast<double>(m) < 1.0) continue;
      const Eigen::MatrixXd k = oracle::random_psd(m, rng);
      const KernelMatrix kernel = wrap(k);
      const OcsvmModel model = fit_ocsvm(kernel, nu, {1e-6, 4000000});
      const Eigen::VectorXd scores = decision_scores(model, kernel);
      const double outliers =
          static_cast<double>((scores.array() < 0.0).count()) / static_cast<double>(m);
      const double supports = static_cast<double>(model.support_indices.size()) /
                              static_cast<double>(m);
      const double slack = 2.0 / static_cast<double>(m);
      CHECK(outliers <= nu + slack);
      CHECK(supports >= nu - slack);
    }
  }
}

TEST_CASE("determinism: identical inputs give identical duals") {
  std::mt19937_64 rng(13);
  const Eigen::MatrixXd k = oracle::random_psd(30, rng);
  const OcsvmModel a = fit_ocsvm(wrap(k), 0.2);
  const OcsvmModel b = fit_ocsvm(wrap(k), 0.2);
  CHECK((a.alpha - b.alpha).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.rho == b.rho);
}

TEST_CASE("kernel scaling leaves predicted labels unchanged") {
  std::mt19937_64 rng(17);
  const Eigen::Index m = 50;
  const Eigen::MatrixXd k = oracle::random_psd(m, rng);
  const Eigen::MatrixXd cross = k.topRows(20);
  const OcsvmModel base = fit_ocsvm(wrap(k), 0.2, {1e-6, 2000000});
  const OcsvmModel scaled = fit_ocsvm(wrap(4.0 * k), 0.2, {1e-6, 2000000});
  const std::vector<int> base_labels = predict(decision_scores(base, wrap(cross)));
  const std::vector<int> scaled_labels = predict(decision_scores(scaled, wrap(4.0 * cross)));
  CHECK(base_labels == scaled_labels);
}

TEST_CASE("decision scores are linear in the kernel row") {
  Eigen::MatrixXd k = Eigen::MatrixXd::Identity(3, 3);
  OcsvmModel model;
  model.alpha = Eigen::VectorXd::Zero(3);
  model.alpha[1] = 1.0;  // one-hot
  model.rho = 0.25;
  model.kernel_stage = KernelStage::Raw;
  Eigen::MatrixXd cross(1, 3);
  cross << 0.1, 0.6, 0.9;
  const Eigen::VectorXd scores = decision_scores(model, wrap(cross));
  CHECK(scores[0] == doctest::Approx(0.6 - 0.25).epsilon(1e-12));
}

TEST_CASE("scoring refuses mismatched kernel stages and shapes") {
  std::mt19937_64 rng(19);
  const Eigen::MatrixXd k = oracle::random_psd(10, rng);
  const OcsvmModel model = fit_ocsvm(wrap(k, KernelStage::Exponentiated), 0.5);
  CHECK_THROWS_AS(decision_scores(model, wrap(k, KernelStage::Raw)), std::invalid_argument);
  CHECK_THROWS_AS(decision_scores(model, wrap(Eigen::MatrixXd::Ones(2, 5),
                                              KernelStage::Exponentiated)),
                  std::invalid_argument);
}

TEST_CASE("margin supports score near zero") {
  std::mt19937_64 rng(23);
  const Eigen::Index m = 80;
  const Eigen::MatrixXd k = oracle::random_psd(m, rng);
  const KernelMatrix kernel = wrap(k);
  const OcsvmModel model = fit_ocsvm(kernel, 0.25, {1e-8, 4000000});
  const Eigen::VectorXd scores = decision_scores(model, kernel);
  const double c = 1.0 / (0.25 * static_cast<double>(m));
  for (int idx : model.support_indices) {
    if (model.alpha[idx] > 1e-6 && model.alpha[idx] < c - 1e-6) {
      CHECK(std::abs(scores[idx]) < 1e-6);
    }
  }
}

TEST_CASE("predict maps the boundary to normal") {
  Eigen::VectorXd scores(3);
  scores << 0.0, -0.3, 0.2;
  CHECK(predict(scores) == std::vector<int>{0, 1, 0});
}

TEST_CASE("lowering a score never flips anomaly to normal") {
  Eigen::VectorXd scores(4);
  scores << 0.5, 0.01, -0.2, -3.0;
  const std::vector<int> before = predict(scores);
  const std::vector<int> after = predict(scores.array() - 0.05);
  for (std::size_t i = 0; i < before.size(); ++i) CHECK(after[i] >= before[i]);
}

TEST_CASE("evaluate counts with anomaly as the positive class") {
  CHECK(evaluate({1, 0, 1}, {1, 0, 1}).f1 == doctest::Approx(1.0));
  const EvalMetrics all_normal = evaluate({0, 0, 0, 0}, {0, 1, 1, 0});
  CHECK(all_normal.recall == 0.0);
  CHECK(all_normal.precision == 0.0);
  CHECK(all_normal.f1 == 0.0);

  std::vector<int> pred, truth;
  for (int i = 0; i < 8; ++i) { pred.push_back(1); truth.push_back(1); }    // TP
  for (int i = 0; i < 2; ++i) { pred.push_back(1); truth.push_back(0); }    // FP
  for (int i = 0; i < 2; ++i) { pred.push_back(0); truth.push_back(1); }    // FN
  const EvalMetrics m = evaluate(pred, truth);
  CHECK(m.precision == doctest::Approx(0.8));
  CHECK(m.recall == doctest::Approx(0.8));
  CHECK(m.f1 == doctest::Approx(0.8));
  CHECK(m.tp + m.fp + m.tn + m.fn == 12);
  CHECK_THROWS_AS(evaluate({0}, {0, 1}), std::invalid_argument);
}

TEST_CASE("singleton sweep equals a direct fit") {
  std::mt19937_64 rng(29);
  const Eigen::Index m = 40;
  const Eigen::MatrixXd k = oracle::random_psd(m, rng);
  const Eigen::MatrixXd cross = k.topRows(15);
  std::vector<int> truth(15);
  for (int i = 0; i < 15; ++i) truth[static_cast<std::size_t>(i)] = i % 3 == 0 ? 1 : 0;

  SweepConfig config;
  config.nu_grid = {0.2};
  config.tol_grid = {1e-4};
  const SweepResult swept = sweep(wrap(k), wrap(cross), truth, config);
  const OcsvmModel direct = fit_ocsvm(wrap(k), 0.2, {1e-4, config.max_iter});
  const EvalMetrics direct_metrics =
      evaluate(predict(decision_scores(direct, wrap(cross))), truth);
  CHECK(swept.metrics.f1 == doctest::Approx(direct_metrics.f1));
  CHECK(swept.nu == 0.2);
  CHECK((swept.model.alpha - direct.alpha).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("adding grid points never lowers the best F1") {
  std::mt19937_64 rng(31);
  const Eigen::Index m = 60;
  const Eigen::MatrixXd k = oracle::random_psd(m, rng);
  const Eigen::MatrixXd cross = k.topRows(30);
  std::vector<int> truth(30);
  for (int i = 0; i < 30; ++i) truth[static_cast<std::size_t>(i)] = i % 4 == 0 ? 1 : 0;

  SweepConfig small;
  small.nu_grid = {0.1, 0.3};
  small.tol_grid = {1e-4};
  SweepConfig large = small;
  large.nu_grid.push_back(0.5);
  const double small_f1 = sweep(wrap(k), wrap(cross), truth, small).metrics.f1;
  const double large_f1 = sweep(wrap(k), wrap(cross), truth, large).metrics.f1;
  CHECK(large_f1 >= small_f1);
}

TEST_CASE("sweep records failing cells and keeps going") {
  std::mt19937_64 rng(37);
  const Eigen::MatrixXd k = oracle::random_psd(10, rng);
  const Eigen::MatrixXd cross = k.topRows(4);
  const std::vector<int> truth = {0, 1, 0, 0};
  SweepConfig config;
  config.nu_grid = {0.05, 0.5};  // nu*m < 1 for the first point
  config.tol_grid = {1e-4};
  const SweepResult result = sweep(wrap(k), wrap(cross), truth, config);
  CHECK(result.nu == 0.5);
  REQUIRE(result.cells.size() == 2);
  CHECK_FALSE(result.cells[0].ok);
  CHECK(!result.cells[0].error.empty());
  CHECK(result.cells[1].ok);
}

TEST_CASE("models round-trip through JSON") {
  std::mt19937_64 rng(41);
  const Eigen::MatrixXd k = oracle::random_psd(12, rng);
  KernelMatrix kernel = wrap(k, KernelStage::Exponentiated);
  kernel.provenance = {"test-kernel", "pure", ""};
  const OcsvmModel model = fit_ocsvm(kernel, 0.25);
  const auto path = std::filesystem::temp_directory_path() / "qkad_model.json";
  save_model(model, path);
  const OcsvmModel loaded = load_model(path);
  CHECK((loaded.alpha - model.alpha).cwiseAbs().maxCoeff() == 0.0);
  CHECK(loaded.rho == model.rho);
  CHECK(loaded.nu == model.nu);
  CHECK(loaded.kernel_stage == model.kernel_stage);
  CHECK(loaded.support_indices == model.support_indices);
  std::filesystem::remove(path);
}
