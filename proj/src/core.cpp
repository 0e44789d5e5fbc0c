#include "endqt/core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

namespace endqt {

namespace {

void check_same_space(const HilbertSpace& a, const HilbertSpace& b,
                      const char* what) {
  if (!(a == b)) {
    throw SpaceMismatch(std::string(what) + ": spaces differ");
  }
}

Mat kron(const Mat& a, const Mat& b) {
  Mat out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    }
  }
  return out;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

HilbertSpace::HilbertSpace(std::vector<Subsystem> subsystems, int dim_cap)
    : subsystems_(std::move(subsystems)) {
  std::set<std::string> seen;
  long long dim = 1;
  for (const auto& s : subsystems_) {
    if (s.dim < 2) {
      throw InvalidState("subsystem '" + s.label + "' has dimension " +
                         std::to_string(s.dim) + "; minimum is 2");
    }
    if (!seen.insert(s.label).second) {
      throw LabelClash("duplicate subsystem label '" + s.label + "'");
    }
    dim *= s.dim;
    if (dim > dim_cap) {
      throw InvalidState("total dimension exceeds cap of " +
                         std::to_string(dim_cap));
    }
  }
  total_dim_ = static_cast<int>(dim);
}

bool HilbertSpace::has_label(const std::string& label) const {
  return std::any_of(subsystems_.begin(), subsystems_.end(),
                     [&](const Subsystem& s) { return s.label == label; });
}

std::size_t HilbertSpace::index_of(const std::string& label) const {
  for (std::size_t i = 0; i < subsystems_.size(); ++i) {
    if (subsystems_[i].label == label) return i;
  }
  throw InvalidState("unknown subsystem label '" + label + "'");
}

std::vector<int> HilbertSpace::dims() const {
  std::vector<int> d;
  d.reserve(subsystems_.size());
  for (const auto& s : subsystems_) d.push_back(s.dim);
  return d;
}

HilbertSpace HilbertSpace::tensor_with(const HilbertSpace& other) const {
  for (const auto& s : other.subsystems_) {
    if (has_label(s.label)) {
      throw LabelClash("label '" + s.label + "' present in both operands");
    }
  }
  std::vector<Subsystem> merged = subsystems_;
  merged.insert(merged.end(), other.subsystems_.begin(),
                other.subsystems_.end());
  return HilbertSpace(std::move(merged));
}

HilbertSpace HilbertSpace::keep(const std::vector<std::string>& labels) const {
  std::vector<Subsystem> kept;
  for (const auto& s : subsystems_) {
    if (std::find(labels.begin(), labels.end(), s.label) != labels.end()) {
      kept.push_back(s);
    }
  }
  return HilbertSpace(std::move(kept));
}

PureState::PureState(HilbertSpace space, Vec amplitudes)
    : space_(std::move(space)), amplitudes_(std::move(amplitudes)) {
  if (amplitudes_.size() != space_.total_dim()) {
    throw SpaceMismatch("amplitude vector length does not match space");
  }
  if (std::abs(amplitudes_.norm() - 1.0) > kNormTol) {
    throw InvalidState("pure state is not normalized");
  }
}

DensityOperator::DensityOperator(HilbertSpace space, Mat matrix)
    : space_(std::move(space)), matrix_(std::move(matrix)) {
  const int d = space_.total_dim();
  if (matrix_.rows() != d || matrix_.cols() != d) {
    throw SpaceMismatch("density matrix size does not match space");
  }
  if ((matrix_ - matrix_.adjoint()).cwiseAbs().maxCoeff() > kHermTol) {
    throw InvalidState("density matrix is not Hermitian");
  }
  if (std::abs(matrix_.trace().real() - 1.0) > kTraceTol ||
      std::abs(matrix_.trace().imag()) > kTraceTol) {
    throw InvalidState("density matrix trace is not 1");
  }
  Eigen::SelfAdjointEigenSolver<Mat> es(matrix_, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() < -kHermTol) {
    throw InvalidState("density matrix has a negative eigenvalue");
  }
}

Observable::Observable(HilbertSpace space, Mat matrix)
    : space_(std::move(space)), matrix_(std::move(matrix)) {
  const int d = space_.total_dim();
  if (matrix_.rows() != d || matrix_.cols() != d) {
    throw SpaceMismatch("observable size does not match space");
  }
  if ((matrix_ - matrix_.adjoint()).cwiseAbs().maxCoeff() > kHermTol) {
    throw InvalidState("observable is not Hermitian");
  }
  Eigen::SelfAdjointEigenSolver<Mat> es(matrix_);
  eigenvalues_ = es.eigenvalues();
  eigenvectors_ = es.eigenvectors();
  for (Eigen::Index i = 1; i < eigenvalues_.size(); ++i) {
    if (eigenvalues_[i] - eigenvalues_[i - 1] < kHermTol) {
      throw InvalidState("observable has a degenerate spectrum");
    }
  }
}

UnitaryEvolution::UnitaryEvolution(HilbertSpace space, Mat matrix)
    : space_(std::move(space)), matrix_(std::move(matrix)) {
  const int d = space_.total_dim();
  if (matrix_.rows() != d || matrix_.cols() != d) {
    throw SpaceMismatch("unitary size does not match space");
  }
  Mat err = matrix_.adjoint() * matrix_ - Mat::Identity(d, d);
  if (err.cwiseAbs().maxCoeff() > kUnitaryTol) {
    throw InvalidState("matrix is not unitary");
  }
}

UnitaryEvolution UnitaryEvolution::from_generator(const Observable& hamiltonian,
                                                 double duration) {
  const Eigen::VectorXd& ev = hamiltonian.eigenvalues();
  const Mat& v = hamiltonian.eigenvectors();
  Vec phases(ev.size());
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    phases[i] = std::exp(Complex(0.0, -ev[i] * duration));
  }
  Mat u = v * phases.asDiagonal() * v.adjoint();
  return UnitaryEvolution(hamiltonian.space(), std::move(u));
}

UnitaryEvolution UnitaryEvolution::adjoint() const {
  return UnitaryEvolution(space_, matrix_.adjoint());
}

PureState tensor(const PureState& a, const PureState& b) {
  HilbertSpace space = a.space().tensor_with(b.space());
  Vec amps(a.amplitudes().size() * b.amplitudes().size());
  for (Eigen::Index i = 0; i < a.amplitudes().size(); ++i) {
    for (Eigen::Index j = 0; j < b.amplitudes().size(); ++j) {
      amps[i * b.amplitudes().size() + j] =
          a.amplitudes()[i] * b.amplitudes()[j];
    }
  }
  return PureState(std::move(space), std::move(amps));
}

DensityOperator tensor(const DensityOperator& a, const DensityOperator& b) {
  return DensityOperator(a.space().tensor_with(b.space()),
                         kron(a.matrix(), b.matrix()));
}

Observable tensor(const Observable& a, const Observable& b) {
  return Observable(a.space().tensor_with(b.space()),
                    kron(a.matrix(), b.matrix()));
}

DensityOperator partial_trace(const DensityOperator& rho,
                              const std::vector<std::string>& keep) {
  const auto& subs = rho.space().subsystems();
  if (keep.empty()) {
    throw InvalidPartition("keep set is empty");
  }
  std::vector<bool> kept(subs.size(), false);
  for (const auto& label : keep) {
    kept[rho.space().index_of(label)] = true;
  }
  if (std::all_of(kept.begin(), kept.end(), [](bool k) { return k; })) {
    throw InvalidPartition("keep set covers the full space");
  }

  const std::vector<int> dims = rho.space().dims();
  const std::size_t n = dims.size();
  int keep_dim = 1, trace_dim = 1;
  for (std::size_t i = 0; i < n; ++i) {
    (kept[i] ? keep_dim : trace_dim) *= dims[i];
  }

  // Row-major strides of each subsystem in the full index.
  std::vector<long long> stride(n, 1);
  for (std::size_t i = n; i-- > 1;) {
    stride[i - 1] = stride[i] * dims[i];
  }

  std::vector<std::size_t> keep_idx, trace_idx;
  for (std::size_t i = 0; i < n; ++i) {
    (kept[i] ? keep_idx : trace_idx).push_back(i);
  }

  auto full_index = [&](long long packed, const std::vector<std::size_t>& sel,
                        long long base) {
    long long idx = base;
    for (std::size_t i = sel.size(); i-- > 0;) {
      std::size_t s = sel[i];
      idx += (packed % dims[s]) * stride[s];
      packed /= dims[s];
    }
    return idx;
  };

  Mat out = Mat::Zero(keep_dim, keep_dim);
  for (int a = 0; a < keep_dim; ++a) {
    for (int b = 0; b < keep_dim; ++b) {
      long long ra = full_index(a, keep_idx, 0);
      long long rb = full_index(b, keep_idx, 0);
      Complex sum = 0.0;
      for (int k = 0; k < trace_dim; ++k) {
        long long ia = full_index(k, trace_idx, ra);
        long long ib = full_index(k, trace_idx, rb);
        sum += rho.matrix()(ia, ib);
      }
      out(a, b) = sum;
    }
  }

  std::vector<std::string> kept_labels;
  for (std::size_t i : keep_idx) kept_labels.push_back(subs[i].label);
  return DensityOperator(rho.space().keep(kept_labels), std::move(out));
}

PureState evolve(const PureState& psi, const UnitaryEvolution& u) {
  check_same_space(psi.space(), u.space(), "evolve");
  return PureState(psi.space(), u.matrix() * psi.amplitudes());
}

DensityOperator evolve(const DensityOperator& rho, const UnitaryEvolution& u) {
  check_same_space(rho.space(), u.space(), "evolve");
  return DensityOperator(rho.space(),
                         u.matrix() * rho.matrix() * u.matrix().adjoint());
}

double von_neumann_entropy(const DensityOperator& rho) {
  Eigen::SelfAdjointEigenSolver<Mat> es(rho.matrix(), Eigen::EigenvaluesOnly);
  double s = 0.0;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
    double p = es.eigenvalues()[i];
    if (p > kEntropyFloor) {
      s -= p * std::log(p);
    }
  }
  return std::max(s, 0.0);
}

DensityOperator as_density(const PureState& psi) {
  return DensityOperator(psi.space(),
                         psi.amplitudes() * psi.amplitudes().adjoint());
}

double fidelity(const PureState& a, const PureState& b) {
  check_same_space(a.space(), b.space(), "fidelity");
  return std::norm(a.amplitudes().dot(b.amplitudes()));
}

RngStream::RngStream(std::uint64_t seed) : engine_(splitmix64(seed)) {}

RngStream RngStream::derive(std::uint64_t master_seed, std::uint64_t index) {
  return RngStream(splitmix64(master_seed) ^ splitmix64(index * 0x2545f4914f6cdd1dULL + 1));
}

double RngStream::uniform() {
  return std::uniform_real_distribution<double>(0.0, 1.0)(engine_);
}

std::uint64_t RngStream::next_u64() { return engine_(); }

Eigen::VectorXd born_probabilities(const DensityOperator& rho,
                                   const Observable& obs) {
  check_same_space(rho.space(), obs.space(), "born_probabilities");
  const Mat& v = obs.eigenvectors();
  Eigen::VectorXd p(v.cols());
  for (Eigen::Index i = 0; i < v.cols(); ++i) {
    p[i] = std::max(0.0, (v.col(i).adjoint() * rho.matrix() * v.col(i))(0, 0).real());
  }
  return p;
}

BornResult born_sample(const DensityOperator& rho, const Observable& obs,
                       RngStream& rng) {
  Eigen::VectorXd p = born_probabilities(rho, obs);
  if (p.maxCoeff() < 1e-12) {
    throw NumericalDegeneracy("all outcome probabilities are below 1e-12");
  }
  double r = rng.uniform() * p.sum();
  Eigen::Index pick = p.size() - 1;
  double acc = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    acc += p[i];
    if (r < acc) {
      pick = i;
      break;
    }
  }
  const Mat& v = obs.eigenvectors();
  Mat proj = v.col(pick) * v.col(pick).adjoint();
  Mat updated = proj * rho.matrix() * proj / p[pick];
  // Round off the projection noise so the result revalidates.
  updated = 0.5 * (updated + updated.adjoint().eval());
  updated /= updated.trace().real();
  return BornResult{obs.eigenvalues()[pick],
                    DensityOperator(rho.space(), std::move(updated))};
}

nlohmann::ordered_json vector_to_json(const Vec& v) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    arr.push_back({v[i].real(), v[i].imag()});
  }
  return arr;
}

nlohmann::ordered_json matrix_to_json(const Mat& m) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::ordered_json row = nlohmann::ordered_json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      row.push_back({m(i, j).real(), m(i, j).imag()});
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace {
nlohmann::ordered_json labels_json(const HilbertSpace& space) {
  nlohmann::ordered_json labels = nlohmann::ordered_json::array();
  for (const auto& s : space.subsystems()) {
    labels.push_back({{"label", s.label}, {"dim", s.dim}});
  }
  return labels;
}
}  // namespace

nlohmann::ordered_json to_json(const PureState& psi) {
  return {{"subsystems", labels_json(psi.space())},
          {"amplitudes", vector_to_json(psi.amplitudes())}};
}

nlohmann::ordered_json to_json(const DensityOperator& rho) {
  return {{"subsystems", labels_json(rho.space())},
          {"matrix", matrix_to_json(rho.matrix())}};
}

}  // namespace endqt
