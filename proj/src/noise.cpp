#include "qkad/noise.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace qkad {

namespace {

constexpr double kNsPerUs = 1000.0;

void check_probability(double p, const char* what) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw std::invalid_argument(std::string(what) + " must be in [0,1]");
  }
}

NoiseModel make_model(double p1q, double p2q, double readout, double t1, double t2) {
  NoiseModel m;
  m.p1q = p1q;
  m.p2q = p2q;
  m.readout_flip = readout;
  m.t1_us = t1;
  m.t2_us = t2;
  return m;
}

}  // namespace

bool NoiseModel::ideal() const {
  return p1q == 0.0 && p2q == 0.0 && readout_flip == 0.0 && std::isinf(t1_us) &&
         std::isinf(t2_us);
}

void NoiseModel::validate() const {
  check_probability(p1q, "p1q");
  check_probability(p2q, "p2q");
  check_probability(readout_flip, "readout_flip");
  if (!(t1_us > 0.0) || !(t2_us > 0.0)) {
    throw std::invalid_argument("T1 and T2 must be positive");
  }
  if (t2_us > 2.0 * t1_us) {
    throw std::invalid_argument("T2 must not exceed 2*T1");
  }
  if (!(d1q_ns > 0.0) || !(d2q_ns > 0.0) || !(d_meas_ns > 0.0)) {
    throw std::invalid_argument("gate durations must be positive");
  }
}

const std::vector<NoisePreset>& noise_presets() {
  // Median hardware snapshot values; readout column is "Readout Asgmt.".
  static const std::vector<NoisePreset> presets = {
      {"Torino", 1.08e-3, make_model(3.149e-4, 2.936e-3, 2.6e-2, 177.93, 137.79)},
      {"Sherbrooke", 2.39e-3, make_model(2.582e-4, 7.726e-3, 1.39e-2, 262.43, 164.33)},
      {"Kyiv", 4.33e-3, make_model(2.779e-4, 1.208e-2, 8.2e-3, 265.84, 101.59)},
      {"Ideal", 0.0, NoiseModel{}},
  };
  return presets;
}

const NoisePreset& noise_preset(const std::string& name) {
  for (const NoisePreset& preset : noise_presets()) {
    if (preset.name == name) return preset;
  }
  throw std::invalid_argument("unknown noise preset: " + name);
}

double amplitude_damping_gamma(const NoiseModel& model, double duration_ns) {
  if (std::isinf(model.t1_us)) return 0.0;
  return 1.0 - std::exp(-duration_ns / (model.t1_us * kNsPerUs));
}

double dephasing_lambda(const NoiseModel& model, double duration_ns) {
  double rate = 0.0;  // 1/T_phi in 1/us
  if (!std::isinf(model.t2_us)) rate += 1.0 / model.t2_us;
  if (!std::isinf(model.t1_us)) rate -= 1.0 / (2.0 * model.t1_us);
  rate = std::max(rate, 0.0);
  return 1.0 - std::exp(-duration_ns / kNsPerUs * rate);
}

std::vector<QuantumChannel> channels_for(const Gate& gate, const NoiseModel& model) {
  model.validate();
  std::vector<int> qubits;
  if (gate.two_qubit()) qubits = {gate.control, gate.target};
  else qubits = {gate.target};

  const double p_depol = gate.two_qubit() ? model.p2q : model.p1q;
  const double duration = gate.two_qubit() ? model.d2q_ns : model.d1q_ns;

  std::vector<QuantumChannel> channels;
  if (p_depol > 0.0) {
    QuantumChannel depol;
    depol.kind = QuantumChannel::Kind::Depolarizing;
    depol.label = "depolarizing";
    depol.qubits = qubits;
    depol.probability = p_depol;
    channels.push_back(std::move(depol));
  }

  const double gamma = amplitude_damping_gamma(model, duration);
  const double lambda = dephasing_lambda(model, duration);
  for (int q : qubits) {
    if (gamma > 0.0) {
      QuantumChannel damp;
      damp.label = "amplitude_damping";
      damp.qubits = {q};
      damp.kraus.resize(2);
      damp.kraus[0] << 1.0, 0.0, 0.0, std::sqrt(1.0 - gamma);
      damp.kraus[1] << 0.0, std::sqrt(gamma), 0.0, 0.0;
      channels.push_back(std::move(damp));
    }
    if (lambda > 0.0) {
      QuantumChannel dephase;
      dephase.label = "dephasing";
      dephase.qubits = {q};
      dephase.kraus.resize(2);
      dephase.kraus[0] = std::sqrt(1.0 - lambda) * Eigen::Matrix2cd::Identity();
      dephase.kraus[1] = Eigen::Matrix2cd::Zero();
      dephase.kraus[1](0, 0) = std::sqrt(lambda);
      dephase.kraus[1](1, 1) = -std::sqrt(lambda);
      channels.push_back(std::move(dephase));
    }
  }
  return channels;
}

namespace {

void apply_kraus_1q(DensityMatrix& rho, const std::vector<Eigen::Matrix2cd>& kraus,
                    int target) {
  Eigen::Matrix2cd completeness = Eigen::Matrix2cd::Zero();
  for (const auto& k : kraus) completeness += k.adjoint() * k;
  if ((completeness - Eigen::Matrix2cd::Identity()).cwiseAbs().maxCoeff() > 1e-10) {
    throw std::invalid_argument("Kraus operators do not sum to identity");
  }
  Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(rho.entries.rows(), rho.entries.cols());
  for (const auto& k : kraus) {
    Eigen::MatrixXcd term = rho.entries;
    detail::mix_rows(term, k, target);
    detail::mix_cols_adjoint(term, k, target);
    out += term;
  }
  rho.entries = std::move(out);
}

// rho <- (1-p) rho + p (I/2^k (x) Tr_sub rho) on the qubits in `sub`.
void apply_depolarizing(DensityMatrix& rho, const std::vector<int>& sub, double p) {
  const int n = rho.width;
  std::vector<int> rest;
  for (int q = 0; q < n; ++q) {
    if (std::find(sub.begin(), sub.end(), q) == sub.end()) rest.push_back(q);
  }
  const std::size_t subdim = std::size_t{1} << sub.size();
  const std::size_t restdim = std::size_t{1} << rest.size();

  std::vector<std::size_t> sub_bits(subdim, 0);
  for (std::size_t s = 0; s < subdim; ++s) {
    for (std::size_t b = 0; b < sub.size(); ++b) {
      if ((s >> b) & 1u) sub_bits[s] |= std::size_t{1} << sub[b];
    }
  }
  std::vector<std::size_t> rest_bits(restdim, 0);
  for (std::size_t r = 0; r < restdim; ++r) {
    for (std::size_t b = 0; b < rest.size(); ++b) {
      if ((r >> b) & 1u) rest_bits[r] |= std::size_t{1} << rest[b];
    }
  }

  Eigen::MatrixXcd out = (1.0 - p) * rho.entries;
  const double mix = p / static_cast<double>(subdim);
  for (std::size_t ri = 0; ri < restdim; ++ri) {
    for (std::size_t rj = 0; rj < restdim; ++rj) {
      Complex tau = 0.0;
      for (std::size_t s = 0; s < subdim; ++s) {
        tau += rho.entries(static_cast<Eigen::Index>(sub_bits[s] | rest_bits[ri]),
                           static_cast<Eigen::Index>(sub_bits[s] | rest_bits[rj]));
      }
      const Complex add = mix * tau;
      for (std::size_t s = 0; s < subdim; ++s) {
        out(static_cast<Eigen::Index>(sub_bits[s] | rest_bits[ri]),
            static_cast<Eigen::Index>(sub_bits[s] | rest_bits[rj])) += add;
      }
    }
  }
  rho.entries = std::move(out);
}

}  // namespace

void apply_channel(DensityMatrix& rho, const QuantumChannel& channel) {
  for (int q : channel.qubits) {
    if (q < 0 || q >= rho.width) throw std::out_of_range("channel qubit out of range");
  }
  if (channel.kind == QuantumChannel::Kind::Depolarizing) {
    check_probability(channel.probability, "depolarizing probability");
    apply_depolarizing(rho, channel.qubits, channel.probability);
    return;
  }
  if (channel.qubits.size() != 1) {
    throw std::invalid_argument("Kraus-list channels are single-qubit");
  }
  apply_kraus_1q(rho, channel.kraus, channel.qubits.front());
}

std::vector<Eigen::Matrix2d> readout_confusion(const NoiseModel& model, int qubits) {
  check_probability(model.readout_flip, "readout_flip");
  Eigen::Matrix2d c;
  c << 1.0 - model.readout_flip, model.readout_flip,
       model.readout_flip, 1.0 - model.readout_flip;
  return std::vector<Eigen::Matrix2d>(static_cast<std::size_t>(qubits), c);
}

}  // namespace qkad
