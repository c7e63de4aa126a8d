#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qkad/featuremap.hpp"
#include "qkad/noise.hpp"

namespace qkad {

enum class KernelStage : std::uint8_t { Raw = 0, Exponentiated = 1 };
enum class Backend { Pure, Density };

const char* to_string(Backend backend);

struct KernelProvenance {
  std::string source;        // feature-map or classical-kernel description
  std::string backend;       // "pure", "density" or "classical"
  std::string noise_preset;  // empty when noiseless

  std::string describe() const;
  std::uint64_t hash() const;
};

/// Real Gram matrix plus where it came from. Raw fidelity entries live in
/// [0,1]; exponentiated ones in [1,e].
struct KernelMatrix {
  Eigen::MatrixXd values;
  KernelStage stage = KernelStage::Raw;
  KernelProvenance provenance;

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }
};

struct GramOptions {
  bool symmetric = false;  // rows and cols hold the same points
  int workers = 1;
  long shots = 0;          // 0 = exact probabilities
  std::uint64_t seed = 0;  // shot-sampling seed
  std::string noise_label;
};

/// Fidelity Gram matrix between two point sets of scaled features. The pure
/// backend evaluates state overlaps; the density backend simulates the
/// compute-uncompute circuit U(x_i) followed by inverse(U(x_j)) under the
/// noise model and reads the all-zeros probability through the readout
/// confusion. Symmetric grams compute the upper triangle once and mirror it;
/// the diagonal is always computed explicitly.
KernelMatrix quantum_gram(const Eigen::MatrixXd& rows, const Eigen::MatrixXd& cols,
                          const FeatureMapSpec& spec, Backend backend,
                          const NoiseModel* noise = nullptr,
                          const GramOptions& options = {});

struct ClassicalKernel {
  enum class Kind { Rbf, Poly, Linear };

  Kind kind = Kind::Rbf;
  double gamma = 1.0;   // RBF
  int degree = 3;       // Poly
  double coef0 = 0.0;   // Poly
  double scale = 1.0;   // Poly

  void validate() const;
  std::string describe() const;
};

ClassicalKernel::Kind classical_kind_from_string(const std::string& name);

KernelMatrix classical_gram(const Eigen::MatrixXd& rows, const Eigen::MatrixXd& cols,
                            const ClassicalKernel& kernel, const GramOptions& options = {});

/// Entrywise e^k post-processing; refuses a second application.
KernelMatrix exponentiate(const KernelMatrix& kernel);

/// Normalized Frobenius inner product Tr(K1 K2)/sqrt(Tr(K1^2) Tr(K2^2)).
double kernel_alignment(const Eigen::MatrixXd& k1, const Eigen::MatrixXd& k2);

/// y^T K y / (sqrt(Tr(K^2)) m) with labels mapped normal(0) -> +1,
/// anomaly(1) -> -1. Equals kernel_alignment(K, y y^T).
double kernel_target_alignment(const Eigen::MatrixXd& kernel, const std::vector<int>& labels);

/// 1 - KA(K_ideal, K_noisy); 0 means the noisy kernel matches the ideal one.
double dissimilarity_error(const Eigen::MatrixXd& ideal, const Eigen::MatrixXd& noisy);

struct PsdFloorResult {
  double min_eigenvalue = 0.0;
  Eigen::MatrixXd clipped;
};

/// Reports the smallest eigenvalue; when `clip` is set, negative eigenvalues
/// are floored at zero in the returned matrix.
PsdFloorResult psd_floor(const Eigen::MatrixXd& kernel, bool clip);

// Binary persistence: magic "QKAD", u16 version, u32 rows, u32 cols,
// u8 stage, then row-major little-endian doubles.
void save_kernel(const KernelMatrix& kernel, const std::filesystem::path& path);
KernelMatrix load_kernel(const std::filesystem::path& path);
void export_kernel_csv(const KernelMatrix& kernel, const std::filesystem::path& path);

}  // namespace qkad
