#include "qkad/featuremap.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace qkad {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kHalfPi = std::numbers::pi / 2.0;

void append_simple2dof_layer(Circuit& circuit, const Eigen::VectorXd& x) {
  for (int q = 0; q < circuit.width; ++q) {
    circuit.append(Gate::u3(q, kHalfPi, x[2 * q], x[2 * q + 1]));
  }
}

void append_belis_rep(Circuit& circuit, const Eigen::VectorXd& x) {
  const int n = circuit.width;
  append_simple2dof_layer(circuit, x);               // S_x
  for (int q = 0; q + 1 < n; ++q) {                  // G(x): nearest-neighbour chain
    circuit.append(Gate::cnot(q, q + 1));
  }
  for (int q = 0; q < n; ++q) {                      // S'_x on different axes
    circuit.append(Gate::rz(q, x[2 * q]));
    circuit.append(Gate::rx(q, x[2 * q + 1]));
  }
}

void append_sakhnenko_rep(Circuit& circuit, const Eigen::VectorXd& x) {
  const int n = circuit.width;
  for (int q = 0; q < n; ++q) circuit.append(Gate::ry(q, x[2 * q]));
  for (int q = 0; q < n; ++q) circuit.append(Gate::rx(q, x[2 * q + 1]));
  if (n == 2) {
    // A two-qubit "ring" would duplicate the pair; keep the single link.
    circuit.append(Gate::cnot(0, 1));
  } else if (n >= 3) {
    for (int q = 0; q < n; ++q) circuit.append(Gate::cnot(q, (q + 1) % n));
  }
  for (int q = 0; q < n; ++q) circuit.append(Gate::ry(q, kHalfPi));
}

void append_zz_rep(Circuit& circuit, const Eigen::VectorXd& x) {
  const int n = circuit.width;
  for (int q = 0; q < n; ++q) circuit.append(Gate::h(q));
  for (int q = 0; q < n; ++q) circuit.append(Gate::p(q, 2.0 * x[q]));
  for (int q = 0; q + 1 < n; ++q) {
    circuit.append(Gate::cnot(q, q + 1));
    circuit.append(Gate::p(q + 1, 2.0 * phi_pair(x[q], x[q + 1])));
    circuit.append(Gate::cnot(q, q + 1));
  }
}

}  // namespace

FeatureMapFamily feature_map_family_from_string(const std::string& name) {
  std::string s;
  for (char c : name) s.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (s == "belis") return FeatureMapFamily::Belis;
  if (s == "simple2dof" || s == "2dof") return FeatureMapFamily::Simple2DoF;
  if (s == "sakhnenko10" || s == "sakhnenko") return FeatureMapFamily::Sakhnenko10;
  if (s == "zz" || s == "zzfm") return FeatureMapFamily::ZZ;
  throw std::invalid_argument("unknown feature-map family: " + name);
}

const char* to_string(FeatureMapFamily family) {
  switch (family) {
    case FeatureMapFamily::Belis: return "belis";
    case FeatureMapFamily::Simple2DoF: return "simple2dof";
    case FeatureMapFamily::Sakhnenko10: return "sakhnenko10";
    case FeatureMapFamily::ZZ: return "zz";
  }
  return "?";
}

int FeatureMapSpec::qubit_count() const {
  return family == FeatureMapFamily::ZZ ? feature_count : feature_count / 2;
}

void FeatureMapSpec::validate() const {
  if (repetitions < 1 || repetitions > 3) {
    throw std::invalid_argument("feature-map repetitions must be 1..3");
  }
  if (!(bandwidth > 0.0 && bandwidth <= 1.0)) {
    throw std::invalid_argument("bandwidth must be in (0,1]");
  }
  if (family == FeatureMapFamily::ZZ) {
    if (feature_count < 1 || feature_count > 14) {
      throw std::invalid_argument("ZZ map supports 1..14 features");
    }
  } else {
    if (feature_count < 2 || feature_count % 2 != 0) {
      throw std::invalid_argument("two-DoF families need an even feature count >= 2");
    }
  }
  if (family == FeatureMapFamily::Sakhnenko10 && repetitions != 1) {
    throw std::invalid_argument("Sakhnenko10 map is not repeated");
  }
}

std::string FeatureMapSpec::describe() const {
  return std::string(to_string(family)) + "(N=" + std::to_string(feature_count) +
         ",r=" + std::to_string(repetitions) + ",c=" + std::to_string(bandwidth) + ")";
}

FeatureScaler FeatureScaler::fit(const Eigen::MatrixXd& train, double bandwidth) {
  if (train.rows() < 2) throw std::invalid_argument("scaler needs at least two rows");
  if (!(bandwidth > 0.0 && bandwidth <= 1.0)) {
    throw std::invalid_argument("bandwidth must be in (0,1]");
  }
  FeatureScaler scaler;
  scaler.bandwidth = bandwidth;
  scaler.ranges.resize(static_cast<std::size_t>(train.cols()));
  for (Eigen::Index k = 0; k < train.cols(); ++k) {
    Range& r = scaler.ranges[static_cast<std::size_t>(k)];
    r.min = train.col(k).minCoeff();
    r.max = train.col(k).maxCoeff();
    r.degenerate = !(r.max > r.min);
  }
  return scaler;
}

Eigen::VectorXd FeatureScaler::scale(const Eigen::VectorXd& x) const {
  if (static_cast<std::size_t>(x.size()) != ranges.size()) {
    throw std::invalid_argument("feature length does not match scaler");
  }
  Eigen::VectorXd out(x.size());
  const double bound = kPi * bandwidth;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const Range& r = ranges[static_cast<std::size_t>(k)];
    if (r.degenerate) {
      out[k] = 0.0;
      continue;
    }
    const double unit = 2.0 * (x[k] - r.min) / (r.max - r.min) - 1.0;
    out[k] = std::clamp(unit * bound, -bound, bound);
  }
  return out;
}

Eigen::MatrixXd FeatureScaler::scale_rows(const Eigen::MatrixXd& x) const {
  Eigen::MatrixXd out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    out.row(i) = scale(x.row(i).transpose()).transpose();
  }
  return out;
}

double phi_pair(double a, double b) { return (kPi - a) * (kPi - b); }

Circuit build_feature_map(const FeatureMapSpec& spec, const Eigen::VectorXd& scaled) {
  spec.validate();
  if (scaled.size() != spec.feature_count) {
    throw std::invalid_argument("feature vector length does not match spec");
  }
  const double bound = kPi * spec.bandwidth + 1e-9;
  for (Eigen::Index k = 0; k < scaled.size(); ++k) {
    if (std::abs(scaled[k]) > bound) {
      throw std::invalid_argument("feature value outside the scaled interval");
    }
  }
  Circuit circuit(spec.qubit_count());
  for (int rep = 0; rep < spec.repetitions; ++rep) {
    switch (spec.family) {
      case FeatureMapFamily::Simple2DoF: append_simple2dof_layer(circuit, scaled); break;
      case FeatureMapFamily::Belis: append_belis_rep(circuit, scaled); break;
      case FeatureMapFamily::Sakhnenko10: append_sakhnenko_rep(circuit, scaled); break;
      case FeatureMapFamily::ZZ: append_zz_rep(circuit, scaled); break;
    }
  }
  return circuit;
}

}  // namespace qkad
