#pragma once

#include <limits>
#include <string>
#include <vector>

#include "qkad/sim.hpp"

namespace qkad {

/// Parametric NISQ noise: uniform per-qubit medians, not per-qubit
/// calibration maps. T1/T2 in microseconds, gate durations in nanoseconds.
struct NoiseModel {
  double p1q = 0.0;
  double p2q = 0.0;
  double t1_us = std::numeric_limits<double>::infinity();
  double t2_us = std::numeric_limits<double>::infinity();
  double d1q_ns = 50.0;
  double d2q_ns = 300.0;
  double d_meas_ns = 1000.0;
  double readout_flip = 0.0;

  bool ideal() const;
  /// Throws std::invalid_argument on probabilities outside [0,1],
  /// non-positive durations, or T2 > 2*T1.
  void validate() const;
};

/// Named hardware snapshot. `best_2q_eplg` is recorded from the snapshot but
/// feeds no channel (it is a layered-gate benchmark, not a per-gate rate).
struct NoisePreset {
  std::string name;
  double best_2q_eplg = 0.0;
  NoiseModel model;
};

const std::vector<NoisePreset>& noise_presets();
const NoisePreset& noise_preset(const std::string& name);

struct QuantumChannel {
  enum class Kind { Depolarizing, KrausList };

  Kind kind = Kind::KrausList;
  std::string label;
  std::vector<int> qubits;
  double probability = 0.0;                // Depolarizing mixing weight
  std::vector<Eigen::Matrix2cd> kraus;     // KrausList, single-qubit operators
};

/// Channels to apply after `gate`: a depolarizing channel on the gate's
/// qubits (p1q or p2q) plus per-qubit amplitude damping and pure dephasing
/// for the gate duration. Zero-strength channels are omitted, so an ideal
/// model yields an empty list.
std::vector<QuantumChannel> channels_for(const Gate& gate, const NoiseModel& model);

/// rho <- sum_k K rho K^dag on the touched subsystem. Kraus lists are checked
/// for completeness (sum K^dag K = I within 1e-10); depolarizing channels use
/// rho <- (1-p) rho + p (I/2^k (x) Tr_sub rho).
void apply_channel(DensityMatrix& rho, const QuantumChannel& channel);

/// Symmetric per-qubit confusion matrices [[1-p, p], [p, 1-p]].
std::vector<Eigen::Matrix2d> readout_confusion(const NoiseModel& model, int qubits);

double amplitude_damping_gamma(const NoiseModel& model, double duration_ns);
double dephasing_lambda(const NoiseModel& model, double duration_ns);

}  // namespace qkad
