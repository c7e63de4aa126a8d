#include "qkad/sim.hpp"

#include <cmath>
#include <stdexcept>

#include "qkad/noise.hpp"

namespace qkad {

namespace {

using Index = Eigen::Index;

std::size_t dim_of(int width) { return std::size_t{1} << width; }

void check_qubit(int qubit, int width, const char* what) {
  if (qubit < 0 || qubit >= width) {
    throw std::out_of_range(std::string(what) + " qubit index out of range");
  }
}

void check_gate_indices(const Gate& gate, int width) {
  check_qubit(gate.target, width, "target");
  if (gate.two_qubit()) {
    check_qubit(gate.control, width, "control");
    if (gate.control == gate.target) {
      throw std::invalid_argument("control and target must differ");
    }
  }
}

}  // namespace

namespace detail {

// A m: mixes row pairs of `m` that differ in the target bit.
void mix_rows(Eigen::MatrixXcd& m, const Eigen::Matrix2cd& a, int target) {
  const std::size_t mask = std::size_t{1} << target;
  const std::size_t lo = mask - 1;
  const std::size_t hi = ~lo;
  const std::size_t half = static_cast<std::size_t>(m.rows()) >> 1;
  for (Index col = 0; col < m.cols(); ++col) {
    for (std::size_t i = 0; i < half; ++i) {
      const std::size_t r0 = ((i & hi) << 1) | (i & lo);
      const std::size_t r1 = r0 | mask;
      const Complex t0 = m(static_cast<Index>(r0), col);
      const Complex t1 = m(static_cast<Index>(r1), col);
      m(static_cast<Index>(r0), col) = a(0, 0) * t0 + a(0, 1) * t1;
      m(static_cast<Index>(r1), col) = a(1, 0) * t0 + a(1, 1) * t1;
    }
  }
}

// m A^dag: columns combine with conj(a) in the same pattern as rows under A.
void mix_cols_adjoint(Eigen::MatrixXcd& m, const Eigen::Matrix2cd& a, int target) {
  const std::size_t mask = std::size_t{1} << target;
  const std::size_t lo = mask - 1;
  const std::size_t hi = ~lo;
  const std::size_t half = static_cast<std::size_t>(m.cols()) >> 1;
  for (std::size_t i = 0; i < half; ++i) {
    const std::size_t c0 = ((i & hi) << 1) | (i & lo);
    const std::size_t c1 = c0 | mask;
    for (Index row = 0; row < m.rows(); ++row) {
      const Complex t0 = m(row, static_cast<Index>(c0));
      const Complex t1 = m(row, static_cast<Index>(c1));
      m(row, static_cast<Index>(c0)) = std::conj(a(0, 0)) * t0 + std::conj(a(0, 1)) * t1;
      m(row, static_cast<Index>(c1)) = std::conj(a(1, 0)) * t0 + std::conj(a(1, 1)) * t1;
    }
  }
}

}  // namespace detail

const char* gate_name(GateKind kind) {
  switch (kind) {
    case GateKind::U3: return "U3";
    case GateKind::RX: return "RX";
    case GateKind::RY: return "RY";
    case GateKind::RZ: return "RZ";
    case GateKind::H: return "H";
    case GateKind::P: return "P";
    case GateKind::CNOT: return "CNOT";
    case GateKind::CZ: return "CZ";
  }
  return "?";
}

Gate Gate::u3(int target, double theta, double phi, double lambda) {
  return Gate{GateKind::U3, target, -1, theta, phi, lambda};
}
Gate Gate::rx(int target, double theta) { return Gate{GateKind::RX, target, -1, theta}; }
Gate Gate::ry(int target, double theta) { return Gate{GateKind::RY, target, -1, theta}; }
Gate Gate::rz(int target, double theta) { return Gate{GateKind::RZ, target, -1, theta}; }
Gate Gate::h(int target) { return Gate{GateKind::H, target}; }
Gate Gate::p(int target, double theta) { return Gate{GateKind::P, target, -1, theta}; }
Gate Gate::cnot(int control, int target) { return Gate{GateKind::CNOT, target, control}; }
Gate Gate::cz(int control, int target) { return Gate{GateKind::CZ, target, control}; }

Gate Gate::inverse() const {
  switch (kind) {
    case GateKind::U3:
      // U3(t,p,l)^dag = U3(-t,-l,-p); phi and lambda swap roles.
      return Gate::u3(target, -theta, -lambda, -phi);
    case GateKind::RX:
    case GateKind::RY:
    case GateKind::RZ:
    case GateKind::P: {
      Gate g = *this;
      g.theta = -theta;
      return g;
    }
    case GateKind::H:
    case GateKind::CNOT:
    case GateKind::CZ:
      return *this;
  }
  throw std::logic_error("unknown gate kind");
}

Circuit::Circuit(int width_in) : width(width_in) {
  if (width < 1) throw std::invalid_argument("circuit width must be >= 1");
}

void Circuit::append(const Gate& gate) {
  check_gate_indices(gate, width);
  gates.push_back(gate);
}

Circuit Circuit::inverse() const {
  Circuit inv(width);
  inv.gates.reserve(gates.size());
  for (auto it = gates.rbegin(); it != gates.rend(); ++it) {
    inv.gates.push_back(it->inverse());
  }
  return inv;
}

QuantumState QuantumState::zero(int width) {
  if (width < 1) throw std::invalid_argument("state width must be >= 1");
  QuantumState s;
  s.width = width;
  s.amplitudes = Eigen::VectorXcd::Zero(static_cast<Index>(dim_of(width)));
  s.amplitudes[0] = 1.0;
  return s;
}

DensityMatrix DensityMatrix::zero_state(int width) {
  if (width < 1) throw std::invalid_argument("density width must be >= 1");
  DensityMatrix rho;
  rho.width = width;
  const Index d = static_cast<Index>(dim_of(width));
  rho.entries = Eigen::MatrixXcd::Zero(d, d);
  rho.entries(0, 0) = 1.0;
  return rho;
}

Eigen::Matrix2cd gate_matrix_1q(const Gate& gate) {
  const Complex i(0.0, 1.0);
  Eigen::Matrix2cd m;
  switch (gate.kind) {
    case GateKind::U3: {
      const double c = std::cos(gate.theta / 2.0);
      const double s = std::sin(gate.theta / 2.0);
      m << c, -std::exp(i * gate.lambda) * s,
           std::exp(i * gate.phi) * s, std::exp(i * (gate.phi + gate.lambda)) * c;
      return m;
    }
    case GateKind::RX: {
      const double c = std::cos(gate.theta / 2.0);
      const double s = std::sin(gate.theta / 2.0);
      m << c, -i * s, -i * s, c;
      return m;
    }
    case GateKind::RY: {
      const double c = std::cos(gate.theta / 2.0);
      const double s = std::sin(gate.theta / 2.0);
      m << c, -s, s, c;
      return m;
    }
    case GateKind::RZ:
      m << std::exp(-i * (gate.theta / 2.0)), 0.0, 0.0, std::exp(i * (gate.theta / 2.0));
      return m;
    case GateKind::H: {
      const double r = 1.0 / std::sqrt(2.0);
      m << r, r, r, -r;
      return m;
    }
    case GateKind::P:
      m << 1.0, 0.0, 0.0, std::exp(i * gate.theta);
      return m;
    default:
      throw std::invalid_argument("not a one-qubit gate");
  }
}

Eigen::MatrixXcd gate_matrix(const Gate& gate) {
  if (!gate.two_qubit()) return gate_matrix_1q(gate);
  Eigen::Matrix4cd m = Eigen::Matrix4cd::Identity();
  if (gate.kind == GateKind::CNOT) {
    m.setZero();
    // basis index 2*control_bit + target_bit
    m(0, 0) = 1.0;
    m(1, 1) = 1.0;
    m(2, 3) = 1.0;
    m(3, 2) = 1.0;
  } else {
    m(3, 3) = -1.0;
  }
  return m;
}

void apply_gate(QuantumState& state, const Gate& gate) {
  check_gate_indices(gate, state.width);
  auto& a = state.amplitudes;
  const std::size_t dim = static_cast<std::size_t>(a.size());
  if (!gate.two_qubit()) {
    const Eigen::Matrix2cd u = gate_matrix_1q(gate);
    const std::size_t mask = std::size_t{1} << gate.target;
    const std::size_t lo = mask - 1;
    const std::size_t hi = ~lo;
    for (std::size_t i = 0; i < dim / 2; ++i) {
      const std::size_t i0 = ((i & hi) << 1) | (i & lo);
      const std::size_t i1 = i0 | mask;
      const Complex t0 = a[static_cast<Index>(i0)];
      const Complex t1 = a[static_cast<Index>(i1)];
      a[static_cast<Index>(i0)] = u(0, 0) * t0 + u(0, 1) * t1;
      a[static_cast<Index>(i1)] = u(1, 0) * t0 + u(1, 1) * t1;
    }
    return;
  }
  const std::size_t cmask = std::size_t{1} << gate.control;
  const std::size_t tmask = std::size_t{1} << gate.target;
  if (gate.kind == GateKind::CNOT) {
    for (std::size_t z = 0; z < dim; ++z) {
      if ((z & cmask) && !(z & tmask)) {
        std::swap(a[static_cast<Index>(z)], a[static_cast<Index>(z | tmask)]);
      }
    }
  } else {  // CZ
    for (std::size_t z = 0; z < dim; ++z) {
      if ((z & cmask) && (z & tmask)) a[static_cast<Index>(z)] = -a[static_cast<Index>(z)];
    }
  }
}

void apply_gate(DensityMatrix& rho, const Gate& gate) {
  check_gate_indices(gate, rho.width);
  auto& m = rho.entries;
  const std::size_t dim = static_cast<std::size_t>(m.rows());
  if (!gate.two_qubit()) {
    const Eigen::Matrix2cd u = gate_matrix_1q(gate);
    detail::mix_rows(m, u, gate.target);
    detail::mix_cols_adjoint(m, u, gate.target);
    return;
  }
  const std::size_t cmask = std::size_t{1} << gate.control;
  const std::size_t tmask = std::size_t{1} << gate.target;
  if (gate.kind == GateKind::CNOT) {
    for (std::size_t z = 0; z < dim; ++z) {
      if ((z & cmask) && !(z & tmask)) {
        m.row(static_cast<Index>(z)).swap(m.row(static_cast<Index>(z | tmask)));
      }
    }
    for (std::size_t z = 0; z < dim; ++z) {
      if ((z & cmask) && !(z & tmask)) {
        m.col(static_cast<Index>(z)).swap(m.col(static_cast<Index>(z | tmask)));
      }
    }
  } else {  // CZ: conjugation flips the sign wherever exactly one index hits |11>
    for (std::size_t z = 0; z < dim; ++z) {
      if ((z & cmask) && (z & tmask)) m.row(static_cast<Index>(z)) *= -1.0;
    }
    for (std::size_t z = 0; z < dim; ++z) {
      if ((z & cmask) && (z & tmask)) m.col(static_cast<Index>(z)) *= -1.0;
    }
  }
}

QuantumState run_pure(const Circuit& circuit) {
  if (circuit.width > kMaxPureQubits) {
    throw std::invalid_argument("circuit width exceeds pure-state cap of " +
                                std::to_string(kMaxPureQubits));
  }
  QuantumState state = QuantumState::zero(circuit.width);
  for (const Gate& gate : circuit.gates) apply_gate(state, gate);
  return state;
}

double overlap_probability(const QuantumState& a, const QuantumState& b) {
  if (a.width != b.width) throw std::invalid_argument("state width mismatch");
  const Complex inner = a.amplitudes.dot(b.amplitudes);
  return std::norm(inner);
}

DensityMatrix run_density(const Circuit& circuit, const NoiseModel& noise) {
  if (circuit.width > kMaxDensityQubits) {
    throw std::invalid_argument("circuit width exceeds density-matrix cap of " +
                                std::to_string(kMaxDensityQubits));
  }
  noise.validate();
  DensityMatrix rho = DensityMatrix::zero_state(circuit.width);
  for (const Gate& gate : circuit.gates) {
    apply_gate(rho, gate);
    for (const QuantumChannel& channel : channels_for(gate, noise)) {
      apply_channel(rho, channel);
    }
  }
  return rho;
}

double zero_outcome_probability(const DensityMatrix& rho,
                                const std::vector<Eigen::Matrix2d>& readout) {
  if (static_cast<int>(readout.size()) != rho.width) {
    throw std::invalid_argument("one confusion matrix per qubit required");
  }
  for (const auto& c : readout) {
    for (int r = 0; r < 2; ++r) {
      if (c(r, 0) < -1e-12 || c(r, 1) < -1e-12 || std::abs(c(r, 0) + c(r, 1) - 1.0) > 1e-9) {
        throw std::invalid_argument("confusion matrix is not row-stochastic");
      }
    }
  }
  const std::size_t dim = static_cast<std::size_t>(rho.entries.rows());
  double total = 0.0;
  for (std::size_t z = 0; z < dim; ++z) {
    double weight = 1.0;
    for (int q = 0; q < rho.width; ++q) {
      weight *= readout[static_cast<std::size_t>(q)](0, (z >> q) & 1u);
    }
    total += weight * rho.entries(static_cast<Index>(z), static_cast<Index>(z)).real();
  }
  return total;
}

}  // namespace qkad
