#pragma once

#include <complex>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace qkad {

using Complex = std::complex<double>;

// Desk-scale simulation caps. Statevectors hold 2^n amplitudes, density
// matrices 4^n entries, so the two backends get separate limits.
inline constexpr int kMaxPureQubits = 14;
inline constexpr int kMaxDensityQubits = 10;

enum class GateKind { U3, RX, RY, RZ, H, P, CNOT, CZ };

const char* gate_name(GateKind kind);

/// One gate in a circuit. Angles are radians; `control` is used only by
/// CNOT/CZ and stays -1 otherwise.
struct Gate {
  GateKind kind = GateKind::H;
  int target = 0;
  int control = -1;
  double theta = 0.0;
  double phi = 0.0;
  double lambda = 0.0;

  static Gate u3(int target, double theta, double phi, double lambda);
  static Gate rx(int target, double theta);
  static Gate ry(int target, double theta);
  static Gate rz(int target, double theta);
  static Gate h(int target);
  static Gate p(int target, double theta);
  static Gate cnot(int control, int target);
  static Gate cz(int control, int target);

  bool two_qubit() const { return kind == GateKind::CNOT || kind == GateKind::CZ; }
  Gate inverse() const;
  bool operator==(const Gate&) const = default;
};

/// Ordered gate list over `width` qubits; gates apply left to right.
struct Circuit {
  int width = 1;
  std::vector<Gate> gates;

  Circuit() = default;
  explicit Circuit(int width);

  void append(const Gate& gate);
  /// Gate-by-gate inverse (reversed order, per-gate adjoint). Keeps the
  /// compute-uncompute circuit structurally a gate list, so noise channels
  /// attach to the inverse half exactly as to the forward half.
  Circuit inverse() const;
};

/// Pure state: 2^width amplitudes, qubit 0 = least-significant index bit.
struct QuantumState {
  int width = 0;
  Eigen::VectorXcd amplitudes;

  static QuantumState zero(int width);
  double norm() const { return amplitudes.norm(); }
};

struct DensityMatrix {
  int width = 0;
  Eigen::MatrixXcd entries;

  static DensityMatrix zero_state(int width);
};

/// Unitary of a single gate: 2x2 for one-qubit kinds, 4x4 for CNOT/CZ with
/// basis index 2*control_bit + target_bit.
Eigen::MatrixXcd gate_matrix(const Gate& gate);
Eigen::Matrix2cd gate_matrix_1q(const Gate& gate);

namespace detail {
// m <- (A on target) m  and  m <- m (A on target)^dag, for arbitrary 2x2 A.
// Shared by unitary conjugation and Kraus-operator application.
void mix_rows(Eigen::MatrixXcd& m, const Eigen::Matrix2cd& a, int target);
void mix_cols_adjoint(Eigen::MatrixXcd& m, const Eigen::Matrix2cd& a, int target);
}  // namespace detail

void apply_gate(QuantumState& state, const Gate& gate);
void apply_gate(DensityMatrix& rho, const Gate& gate);

QuantumState run_pure(const Circuit& circuit);

/// |<a|b>|^2 in [0,1].
double overlap_probability(const QuantumState& a, const QuantumState& b);

struct NoiseModel;

/// Evolves |0..0><0..0| through the circuit, applying the noise model's
/// channels after every gate.
DensityMatrix run_density(const Circuit& circuit, const NoiseModel& noise);

/// Probability of reading the all-zeros bitstring from rho's diagonal under
/// per-qubit readout confusion (row-stochastic 2x2; entry (0, z) is the
/// probability of reading 0 when the true bit is z).
double zero_outcome_probability(const DensityMatrix& rho,
                                const std::vector<Eigen::Matrix2d>& readout);

}  // namespace qkad
