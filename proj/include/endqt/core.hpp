// Dense complex linear algebra over small labeled composite Hilbert spaces:
// states, observables, unitary evolution, partial trace, entropy and
// Born-rule sampling.
#pragma once

#include <Eigen/Dense>
#include <complex>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace endqt {

using Complex = std::complex<double>;
using Mat = Eigen::MatrixXcd;
using Vec = Eigen::VectorXcd;

// Tolerances used across the library.
constexpr double kHermTol = 1e-9;
constexpr double kTraceTol = 1e-9;
constexpr double kNormTol = 1e-9;
constexpr double kUnitaryTol = 1e-8;
constexpr double kEntropyFloor = 1e-12;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct LabelClash : Error { using Error::Error; };
struct InvalidPartition : Error { using Error::Error; };
struct SpaceMismatch : Error { using Error::Error; };
struct NumericalDegeneracy : Error { using Error::Error; };
struct InvalidState : Error { using Error::Error; };

struct Subsystem {
  std::string label;
  int dim = 0;
  bool operator==(const Subsystem&) const = default;
};

// Ordered sequence of labeled subsystems. Basis ordering is row-major over
// the sequence: the first subsystem is the most significant index.
class HilbertSpace {
 public:
  static constexpr int kDefaultDimCap = 4096;

  HilbertSpace() = default;
  explicit HilbertSpace(std::vector<Subsystem> subsystems,
                        int dim_cap = kDefaultDimCap);

  const std::vector<Subsystem>& subsystems() const { return subsystems_; }
  int total_dim() const { return total_dim_; }
  std::size_t size() const { return subsystems_.size(); }

  bool has_label(const std::string& label) const;
  std::size_t index_of(const std::string& label) const;
  std::vector<int> dims() const;

  // Concatenation of subsystem sequences; throws LabelClash on collision.
  HilbertSpace tensor_with(const HilbertSpace& other) const;
  // Subspace keeping only the named labels, in this space's order.
  HilbertSpace keep(const std::vector<std::string>& labels) const;

  bool operator==(const HilbertSpace&) const = default;

 private:
  std::vector<Subsystem> subsystems_;
  int total_dim_ = 1;
};

class PureState {
 public:
  PureState(HilbertSpace space, Vec amplitudes);
  const HilbertSpace& space() const { return space_; }
  const Vec& amplitudes() const { return amplitudes_; }

 private:
  HilbertSpace space_;
  Vec amplitudes_;
};

class DensityOperator {
 public:
  DensityOperator(HilbertSpace space, Mat matrix);
  const HilbertSpace& space() const { return space_; }
  const Mat& matrix() const { return matrix_; }

 private:
  HilbertSpace space_;
  Mat matrix_;
};

// Hermitian observable with a non-degenerate eigensystem, computed at
// construction. Degenerate spectra are rejected.
class Observable {
 public:
  Observable(HilbertSpace space, Mat matrix);
  const HilbertSpace& space() const { return space_; }
  const Mat& matrix() const { return matrix_; }
  const Eigen::VectorXd& eigenvalues() const { return eigenvalues_; }
  const Mat& eigenvectors() const { return eigenvectors_; }

 private:
  HilbertSpace space_;
  Mat matrix_;
  Eigen::VectorXd eigenvalues_;
  Mat eigenvectors_;  // orthonormal columns
};

class UnitaryEvolution {
 public:
  UnitaryEvolution(HilbertSpace space, Mat matrix);
  // exp(-i H t) via eigendecomposition of the Hermitian generator.
  static UnitaryEvolution from_generator(const Observable& hamiltonian,
                                         double duration);
  const HilbertSpace& space() const { return space_; }
  const Mat& matrix() const { return matrix_; }
  UnitaryEvolution adjoint() const;

 private:
  HilbertSpace space_;
  Mat matrix_;
};

// Kronecker products; operand labels must be disjoint.
PureState tensor(const PureState& a, const PureState& b);
DensityOperator tensor(const DensityOperator& a, const DensityOperator& b);
Observable tensor(const Observable& a, const Observable& b);

// Trace out everything not in `keep`; `keep` must be a non-empty proper
// subset of the labels.
DensityOperator partial_trace(const DensityOperator& rho,
                              const std::vector<std::string>& keep);

PureState evolve(const PureState& psi, const UnitaryEvolution& u);
DensityOperator evolve(const DensityOperator& rho, const UnitaryEvolution& u);

double von_neumann_entropy(const DensityOperator& rho);

DensityOperator as_density(const PureState& psi);
double fidelity(const PureState& a, const PureState& b);

// Seeded RNG stream. Per-trial streams derive from (master seed, index).
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed);
  static RngStream derive(std::uint64_t master_seed, std::uint64_t index);
  double uniform();            // [0,1)
  std::uint64_t next_u64();

 private:
  std::mt19937_64 engine_;
};

struct BornResult {
  double eigenvalue = 0.0;
  DensityOperator updated;
};

// Draws eigenvalue q_i with probability tr(Pi_i rho) and projects.
BornResult born_sample(const DensityOperator& rho, const Observable& obs,
                       RngStream& rng);

// Outcome probabilities tr(Pi_i rho) for every eigenvalue of obs.
Eigen::VectorXd born_probabilities(const DensityOperator& rho,
                                   const Observable& obs);

// JSON export: matrices/vectors as nested arrays of [re, im] pairs plus
// the subsystem label sequence.
nlohmann::ordered_json to_json(const PureState& psi);
nlohmann::ordered_json to_json(const DensityOperator& rho);
nlohmann::ordered_json matrix_to_json(const Mat& m);
nlohmann::ordered_json vector_to_json(const Vec& v);

}  // namespace endqt
