#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qkad/sim.hpp"

namespace qkad {

enum class FeatureMapFamily { Belis, Simple2DoF, Sakhnenko10, ZZ };

FeatureMapFamily feature_map_family_from_string(const std::string& name);
const char* to_string(FeatureMapFamily family);

/// Encoding-circuit configuration. Two-degree-of-freedom families pack two
/// features per qubit (n = N/2); ZZ uses one qubit per feature (n = N).
struct FeatureMapSpec {
  FeatureMapFamily family = FeatureMapFamily::Simple2DoF;
  int repetitions = 1;
  double bandwidth = 1.0;
  int feature_count = 0;

  int qubit_count() const;
  void validate() const;
  std::string describe() const;
};

/// Affine min-max map of each feature onto [-pi*c, pi*c], fit on training
/// data only. Test values beyond the training range are clamped rather than
/// rescaled; constant training features map to 0.
struct FeatureScaler {
  struct Range {
    double min = 0.0;
    double max = 0.0;
    bool degenerate = false;
  };

  std::vector<Range> ranges;
  double bandwidth = 1.0;

  static FeatureScaler fit(const Eigen::MatrixXd& train, double bandwidth);
  Eigen::VectorXd scale(const Eigen::VectorXd& x) const;
  Eigen::MatrixXd scale_rows(const Eigen::MatrixXd& x) const;
};

/// (pi - a)(pi - b), the pair interaction angle of the ZZ map.
double phi_pair(double a, double b);

/// Encoding circuit U(x) for a scaled feature vector.
Circuit build_feature_map(const FeatureMapSpec& spec, const Eigen::VectorXd& scaled);

}  // namespace qkad
