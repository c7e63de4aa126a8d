#include "qkad/kernel.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <stdexcept>

#include "qkad/util.hpp"

namespace qkad {

namespace {

using Index = Eigen::Index;

void check_finite(const Eigen::MatrixXd& m, const char* what) {
  if (!m.allFinite()) throw std::invalid_argument(std::string(what) + " contains non-finite values");
}

double sampled(double probability, long shots, std::uint64_t seed, std::size_t i,
               std::size_t j) {
  if (shots <= 0) return probability;
  const double p = std::clamp(probability, 0.0, 1.0);
  std::mt19937_64 rng(mix_seed(seed, i, j));
  std::binomial_distribution<long> draw(shots, p);
  return static_cast<double>(draw(rng)) / static_cast<double>(shots);
}

Circuit fidelity_circuit(const FeatureMapSpec& spec, const Eigen::VectorXd& xi,
                         const Eigen::VectorXd& xj) {
  Circuit circuit = build_feature_map(spec, xi);
  const Circuit uncompute = build_feature_map(spec, xj).inverse();
  circuit.gates.insert(circuit.gates.end(), uncompute.gates.begin(), uncompute.gates.end());
  return circuit;
}

}  // namespace

const char* to_string(Backend backend) {
  return backend == Backend::Pure ? "pure" : "density";
}

std::string KernelProvenance::describe() const {
  std::string out = source + "|" + backend;
  if (!noise_preset.empty()) out += "|" + noise_preset;
  return out;
}

std::uint64_t KernelProvenance::hash() const { return fnv1a64(describe()); }

KernelMatrix quantum_gram(const Eigen::MatrixXd& rows, const Eigen::MatrixXd& cols,
                          const FeatureMapSpec& spec, Backend backend,
                          const NoiseModel* noise, const GramOptions& options) {
  spec.validate();
  check_finite(rows, "row features");
  check_finite(cols, "col features");
  if (rows.cols() != spec.feature_count || cols.cols() != spec.feature_count) {
    throw std::invalid_argument("feature length does not match the feature-map spec");
  }
  if (options.symmetric &&
      (rows.rows() != cols.rows() || rows != cols)) {
    throw std::invalid_argument("symmetric gram requires identical row and col points");
  }
  const int n = spec.qubit_count();
  if (backend == Backend::Pure && n > kMaxPureQubits) {
    throw std::invalid_argument("feature map exceeds the pure-state qubit cap");
  }
  if (backend == Backend::Density && n > kMaxDensityQubits) {
    throw std::invalid_argument("feature map exceeds the density-matrix qubit cap");
  }

  const std::size_t nrows = static_cast<std::size_t>(rows.rows());
  const std::size_t ncols = static_cast<std::size_t>(cols.rows());
  KernelMatrix out;
  out.values.resize(rows.rows(), cols.rows());
  out.stage = KernelStage::Raw;
  out.provenance = {spec.describe(), to_string(backend), options.noise_label};

  if (backend == Backend::Pure) {
    std::vector<QuantumState> row_states(nrows);
    parallel_for(nrows, options.workers, [&](std::size_t i) {
      row_states[i] = run_pure(build_feature_map(spec, rows.row(static_cast<Index>(i))));
    });
    std::vector<QuantumState> col_states;
    const std::vector<QuantumState>& cs = options.symmetric ? row_states : col_states;
    if (!options.symmetric) {
      col_states.resize(ncols);
      parallel_for(ncols, options.workers, [&](std::size_t j) {
        col_states[j] = run_pure(build_feature_map(spec, cols.row(static_cast<Index>(j))));
      });
    }
    parallel_for(nrows, options.workers, [&](std::size_t i) {
      const std::size_t j0 = options.symmetric ? i : 0;
      for (std::size_t j = j0; j < ncols; ++j) {
        const double k = overlap_probability(row_states[i], cs[j]);
        out.values(static_cast<Index>(i), static_cast<Index>(j)) =
            sampled(k, options.shots, options.seed, i, j);
      }
    });
  } else {
    if (noise == nullptr) throw std::invalid_argument("density backend requires a noise model");
    noise->validate();
    const auto readout = readout_confusion(*noise, n);
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    pairs.reserve(nrows * ncols);
    for (std::size_t i = 0; i < nrows; ++i) {
      for (std::size_t j = options.symmetric ? i : 0; j < ncols; ++j) pairs.emplace_back(i, j);
    }
    parallel_for(pairs.size(), options.workers, [&](std::size_t p) {
      const auto [i, j] = pairs[p];
      const Circuit circuit = fidelity_circuit(spec, rows.row(static_cast<Index>(i)),
                                               cols.row(static_cast<Index>(j)));
      const DensityMatrix rho = run_density(circuit, *noise);
      const double k = zero_outcome_probability(rho, readout);
      out.values(static_cast<Index>(i), static_cast<Index>(j)) =
          sampled(k, options.shots, options.seed, i, j);
    });
  }

  if (options.symmetric) {
    for (Index i = 0; i < out.values.rows(); ++i) {
      for (Index j = 0; j < i; ++j) out.values(i, j) = out.values(j, i);
    }
  }
  return out;
}

void ClassicalKernel::validate() const {
  if (kind == Kind::Rbf && !(gamma > 0.0)) {
    throw std::invalid_argument("RBF gamma must be positive");
  }
  if (kind == Kind::Poly) {
    if (degree < 1) throw std::invalid_argument("polynomial degree must be >= 1");
    if (!std::isfinite(coef0) || !std::isfinite(scale)) {
      throw std::invalid_argument("polynomial coefficients must be finite");
    }
  }
}

std::string ClassicalKernel::describe() const {
  switch (kind) {
    case Kind::Rbf: return "rbf(gamma=" + std::to_string(gamma) + ")";
    case Kind::Poly:
      return "poly(degree=" + std::to_string(degree) + ",coef0=" + std::to_string(coef0) +
             ",scale=" + std::to_string(scale) + ")";
    case Kind::Linear: return "linear";
  }
  return "?";
}

ClassicalKernel::Kind classical_kind_from_string(const std::string& name) {
  std::string s;
  for (char c : name) s.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (s == "rbf") return ClassicalKernel::Kind::Rbf;
  if (s == "poly" || s == "polynomial") return ClassicalKernel::Kind::Poly;
  if (s == "linear") return ClassicalKernel::Kind::Linear;
  throw std::invalid_argument("unknown classical kernel: " + name);
}

KernelMatrix classical_gram(const Eigen::MatrixXd& rows, const Eigen::MatrixXd& cols,
                            const ClassicalKernel& kernel, const GramOptions& options) {
  kernel.validate();
  check_finite(rows, "row features");
  check_finite(cols, "col features");
  if (rows.cols() != cols.cols()) throw std::invalid_argument("feature dimension mismatch");

  KernelMatrix out;
  out.values.resize(rows.rows(), cols.rows());
  out.stage = KernelStage::Raw;
  out.provenance = {kernel.describe(), "classical", ""};
  parallel_for(static_cast<std::size_t>(rows.rows()), options.workers, [&](std::size_t ii) {
    const Index i = static_cast<Index>(ii);
    for (Index j = 0; j < cols.rows(); ++j) {
      double k = 0.0;
      switch (kernel.kind) {
        case ClassicalKernel::Kind::Rbf:
          k = std::exp(-kernel.gamma * (rows.row(i) - cols.row(j)).squaredNorm());
          break;
        case ClassicalKernel::Kind::Poly:
          k = std::pow(kernel.scale * rows.row(i).dot(cols.row(j)) + kernel.coef0,
                       kernel.degree);
          break;
        case ClassicalKernel::Kind::Linear:
          k = rows.row(i).dot(cols.row(j));
          break;
      }
      out.values(i, j) = k;
    }
  });
  return out;
}

KernelMatrix exponentiate(const KernelMatrix& kernel) {
  if (kernel.stage == KernelStage::Exponentiated) {
    throw std::invalid_argument("kernel is already exponentiated");
  }
  KernelMatrix out = kernel;
  out.values = kernel.values.array().exp();
  out.stage = KernelStage::Exponentiated;
  return out;
}

double kernel_alignment(const Eigen::MatrixXd& k1, const Eigen::MatrixXd& k2) {
  if (k1.rows() != k1.cols() || k2.rows() != k2.cols() || k1.rows() != k2.rows()) {
    throw std::invalid_argument("kernel alignment needs equal square matrices");
  }
  // Tr(A B) = sum_ij A_ij B_ji, evaluated entrywise.
  const double cross = k1.cwiseProduct(k2.transpose()).sum();
  const double n1 = k1.cwiseProduct(k1.transpose()).sum();
  const double n2 = k2.cwiseProduct(k2.transpose()).sum();
  if (!(n1 > 0.0) || !(n2 > 0.0)) {
    throw std::invalid_argument("kernel alignment needs nonzero Frobenius norms");
  }
  return cross / std::sqrt(n1 * n2);
}

double kernel_target_alignment(const Eigen::MatrixXd& kernel, const std::vector<int>& labels) {
  if (kernel.rows() != kernel.cols() ||
      kernel.rows() != static_cast<Index>(labels.size())) {
    throw std::invalid_argument("kernel/label shape mismatch");
  }
  const Index m = kernel.rows();
  Eigen::VectorXd y(m);
  for (Index i = 0; i < m; ++i) {
    const int label = labels[static_cast<std::size_t>(i)];
    if (label != 0 && label != 1) throw std::invalid_argument("labels must be 0 or 1");
    y[i] = label == 0 ? 1.0 : -1.0;
  }
  const double trace_sq = kernel.cwiseProduct(kernel.transpose()).sum();
  if (!(trace_sq > 0.0)) throw std::invalid_argument("kernel has zero Frobenius norm");
  return y.dot(kernel * y) / (std::sqrt(trace_sq) * static_cast<double>(m));
}

double dissimilarity_error(const Eigen::MatrixXd& ideal, const Eigen::MatrixXd& noisy) {
  return 1.0 - kernel_alignment(ideal, noisy);
}

PsdFloorResult psd_floor(const Eigen::MatrixXd& kernel, bool clip) {
  if (kernel.rows() != kernel.cols()) throw std::invalid_argument("psd_floor needs a square matrix");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(kernel);
  if (solver.info() != Eigen::Success) throw std::runtime_error("eigendecomposition failed");
  PsdFloorResult result;
  result.min_eigenvalue = solver.eigenvalues().minCoeff();
  if (clip && result.min_eigenvalue < 0.0) {
    const Eigen::VectorXd floored = solver.eigenvalues().cwiseMax(0.0);
    result.clipped =
        solver.eigenvectors() * floored.asDiagonal() * solver.eigenvectors().transpose();
  } else {
    result.clipped = kernel;
  }
  return result;
}

namespace {

void write_u16(std::ostream& out, std::uint16_t v) {
  const unsigned char bytes[2] = {static_cast<unsigned char>(v & 0xff),
                                  static_cast<unsigned char>(v >> 8)};
  out.write(reinterpret_cast<const char*>(bytes), 2);
}

void write_u32(std::ostream& out, std::uint32_t v) {
  unsigned char bytes[4];
  for (int b = 0; b < 4; ++b) bytes[b] = static_cast<unsigned char>((v >> (8 * b)) & 0xff);
  out.write(reinterpret_cast<const char*>(bytes), 4);
}

void write_f64(std::ostream& out, double v) {
  const std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
  unsigned char bytes[8];
  for (int b = 0; b < 8; ++b) bytes[b] = static_cast<unsigned char>((bits >> (8 * b)) & 0xff);
  out.write(reinterpret_cast<const char*>(bytes), 8);
}

std::uint16_t read_u16(std::istream& in) {
  unsigned char bytes[2];
  in.read(reinterpret_cast<char*>(bytes), 2);
  return static_cast<std::uint16_t>(bytes[0] | (bytes[1] << 8));
}

std::uint32_t read_u32(std::istream& in) {
  unsigned char bytes[4];
  in.read(reinterpret_cast<char*>(bytes), 4);
  std::uint32_t v = 0;
  for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(bytes[b]) << (8 * b);
  return v;
}

double read_f64(std::istream& in) {
  unsigned char bytes[8];
  in.read(reinterpret_cast<char*>(bytes), 8);
  std::uint64_t bits = 0;
  for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[b]) << (8 * b);
  return std::bit_cast<double>(bits);
}

constexpr std::uint16_t kKernelFormatVersion = 1;

}  // namespace

void save_kernel(const KernelMatrix& kernel, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write("QKAD", 4);
  write_u16(out, kKernelFormatVersion);
  write_u32(out, static_cast<std::uint32_t>(kernel.rows()));
  write_u32(out, static_cast<std::uint32_t>(kernel.cols()));
  const unsigned char stage = static_cast<unsigned char>(kernel.stage);
  out.write(reinterpret_cast<const char*>(&stage), 1);
  for (Index i = 0; i < kernel.rows(); ++i) {
    for (Index j = 0; j < kernel.cols(); ++j) write_f64(out, kernel.values(i, j));
  }
  if (!out) throw std::runtime_error("failed writing kernel file " + path.string());
}

KernelMatrix load_kernel(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open kernel file " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "QKAD", 4) != 0) {
    throw std::runtime_error("not a QKAD kernel file: " + path.string());
  }
  const std::uint16_t version = read_u16(in);
  if (version != kKernelFormatVersion) {
    throw std::runtime_error("unsupported kernel format version " + std::to_string(version));
  }
  const std::uint32_t rows = read_u32(in);
  const std::uint32_t cols = read_u32(in);
  unsigned char stage = 0;
  in.read(reinterpret_cast<char*>(&stage), 1);
  if (stage > 1) throw std::runtime_error("invalid kernel stage byte");
  KernelMatrix kernel;
  kernel.stage = static_cast<KernelStage>(stage);
  kernel.values.resize(static_cast<Index>(rows), static_cast<Index>(cols));
  for (std::uint32_t i = 0; i < rows; ++i) {
    for (std::uint32_t j = 0; j < cols; ++j) {
      kernel.values(static_cast<Index>(i), static_cast<Index>(j)) = read_f64(in);
    }
  }
  if (!in) throw std::runtime_error("truncated kernel file " + path.string());
  kernel.provenance = {"file:" + path.filename().string(), "", ""};
  return kernel;
}

void export_kernel_csv(const KernelMatrix& kernel, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.precision(17);
  for (Index i = 0; i < kernel.rows(); ++i) {
    for (Index j = 0; j < kernel.cols(); ++j) {
      if (j > 0) out << ',';
      out << kernel.values(i, j);
    }
    out << '\n';
  }
}

}  // namespace qkad
