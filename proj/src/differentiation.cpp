#include "endqt/differentiation.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace endqt {

namespace {

constexpr double kAmplitudeFloor = 1e-12;
constexpr double kMonotoneTol = 1e-9;
constexpr double kZeroOverlapTol = 1e-6;
constexpr double kEigenstateTol = 1e-9;

// Pointer observable on the system factor, padded with identities to the
// joint space.
Mat embed_on_label(const HilbertSpace& joint, const std::string& label,
                   const Mat& m) {
  const std::vector<int> dims = joint.dims();
  const std::size_t pos = joint.index_of(label);
  int pre = 1, post = 1;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i < pos) pre *= dims[i];
    if (i > pos) post *= dims[i];
  }
  Mat out = Mat::Zero(joint.total_dim(), joint.total_dim());
  const int d = dims[pos];
  for (int a = 0; a < pre; ++a) {
    for (int i = 0; i < d; ++i) {
      for (int j = 0; j < d; ++j) {
        if (m(i, j) == Complex(0.0)) continue;
        for (int b = 0; b < post; ++b) {
          out((a * d + i) * post + b, (a * d + j) * post + b) = m(i, j);
        }
      }
    }
  }
  return out;
}

}  // namespace

const char* to_string(InteractionRole role) {
  switch (role) {
    case InteractionRole::ValueDetermining: return "value-determining";
    case InteractionRole::StableDifferentiator: return "stable-differentiator";
    case InteractionRole::UnstableDifferentiator:
      return "unstable-differentiator";
    case InteractionRole::Undifferentiator: return "undifferentiator";
    case InteractionRole::SecondOrderUnstableDifferentiator:
      return "second-order-unstable-differentiator";
    case InteractionRole::SecondOrderUnstableUndifferentiator:
      return "second-order-unstable-undifferentiator";
  }
  return "?";
}

double OverlapMatrix::max_off_diagonal() const {
  double m = 0.0;
  for (Eigen::Index i = 0; i < overlaps.rows(); ++i) {
    for (Eigen::Index j = 0; j < overlaps.cols(); ++j) {
      if (i == j) continue;
      if (!defined[i] || !defined[j]) continue;
      m = std::max(m, std::abs(overlaps(i, j)));
    }
  }
  return m;
}

OverlapMatrix coherence_overlaps(const PureState& joint,
                                 const std::string& system_label,
                                 const Observable& pointer) {
  const HilbertSpace& space = joint.space();
  const std::vector<int> dims = space.dims();
  const std::size_t pos = space.index_of(system_label);
  const int d = dims[pos];
  if (pointer.space().total_dim() != d) {
    throw SpaceMismatch("pointer observable does not match system factor");
  }
  int pre = 1, post = 1;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i < pos) pre *= dims[i];
    if (i > pos) post *= dims[i];
  }
  const int env_dim = pre * post;

  // Conditional (unnormalized) environment vectors E_i = <s_i|psi>.
  std::vector<Vec> env(d, Vec::Zero(env_dim));
  const Mat& vecs = pointer.eigenvectors();
  for (int i = 0; i < d; ++i) {
    for (int a = 0; a < pre; ++a) {
      for (int s = 0; s < d; ++s) {
        const Complex c = std::conj(vecs(s, i));
        if (c == Complex(0.0)) continue;
        for (int b = 0; b < post; ++b) {
          env[i][a * post + b] +=
              c * joint.amplitudes()[(a * d + s) * post + b];
        }
      }
    }
  }

  OverlapMatrix out;
  out.overlaps = Mat::Zero(d, d);
  out.defined.assign(d, false);
  out.amplitude_moduli = Eigen::VectorXd::Zero(d);
  for (int i = 0; i < d; ++i) {
    out.amplitude_moduli[i] = env[i].norm();
    out.defined[i] = out.amplitude_moduli[i] > kAmplitudeFloor;
  }
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) {
      if (out.defined[i] && out.defined[j]) {
        out.overlaps(j, i) = env[j].dot(env[i]) /
                             (out.amplitude_moduli[i] * out.amplitude_moduli[j]);
      }
    }
  }
  return out;
}

double degree_of_differentiation(const DensityOperator& rho_s,
                                 const Observable& pointer) {
  if (!(rho_s.space() == pointer.space())) {
    throw SpaceMismatch("degree_of_differentiation: spaces differ");
  }
  const double n = static_cast<double>(rho_s.space().total_dim());
  double d = von_neumann_entropy(rho_s) / std::log(n);
  return std::clamp(d, 0.0, 1.0);
}

DifferentiationRun run_differentiation(const QuantumProperty& system,
                                       const PointerCoupling& coupling,
                                       const std::string& system_label,
                                       bool env_chain_connected,
                                       double duration, int steps,
                                       RngStream& rng,
                                       double completion_threshold) {
  if (steps < 1) {
    throw InvalidState("run_differentiation needs at least one step");
  }
  const PureState* joint = std::get_if<PureState>(&system.carrier);
  if (joint == nullptr) {
    throw InvalidState("run_differentiation needs a joint pure-state carrier");
  }
  const Observable& pointer = coupling.system_observable;

  // Strong-measurement regime: the coupling must be diagonal in the
  // pointer eigenbasis on the system factor.
  const UnitaryEvolution u_full = coupling.unitary_family(duration);
  Mat padded_pointer =
      embed_on_label(joint->space(), system_label, pointer.matrix());
  Mat comm = u_full.matrix() * padded_pointer - padded_pointer * u_full.matrix();
  if (comm.cwiseAbs().maxCoeff() > kUnitaryTol) {
    throw NotPointerDiagonal("coupling does not commute with the pointer");
  }

  DifferentiationRun run;
  for (int k = 0; k <= steps; ++k) {
    const double t = duration * k / steps;
    PureState psi = k == 0 ? *joint : evolve(*joint, coupling.unitary_family(t));
    DensityOperator rho_s = partial_trace(as_density(psi), {system_label});
    const double degree = degree_of_differentiation(rho_s, pointer);
    const double overlap =
        coherence_overlaps(psi, system_label, pointer).max_off_diagonal();

    ValueProperty value = ValueProperty::indeterminate(0.0);
    if (env_chain_connected) {
      if (!run.determined_value) {
        Eigen::VectorXd p = born_probabilities(rho_s, pointer);
        Eigen::Index imax;
        if (p.maxCoeff(&imax) >= 1.0 - kEigenstateTol) {
          // Already-differentiated property: value-determining process.
          run.determined_value = pointer.eigenvalues()[imax];
        } else if (degree >= completion_threshold) {
          run.determined_value = born_sample(rho_s, pointer, rng).eigenvalue;
        }
      }
      value = run.determined_value
                  ? ValueProperty::determinate(*run.determined_value)
                  : ValueProperty::indeterminate(degree);
    }
    run.trajectory.push_back({t, degree, overlap, value});
  }
  return run;
}

InteractionRole classify_role(const std::vector<double>& overlap_trajectory,
                              bool env_chain_connected) {
  if (overlap_trajectory.empty()) {
    throw InvalidState("classify_role needs a non-empty trajectory");
  }
  bool non_increasing = true, non_decreasing = true;
  for (std::size_t i = 1; i < overlap_trajectory.size(); ++i) {
    const double step = overlap_trajectory[i] - overlap_trajectory[i - 1];
    if (step > kMonotoneTol) non_increasing = false;
    if (step < -kMonotoneTol) non_decreasing = false;
  }
  const double first = overlap_trajectory.front();
  const double last = overlap_trajectory.back();
  const bool all_zero = *std::max_element(overlap_trajectory.begin(),
                                          overlap_trajectory.end()) <
                        kZeroOverlapTol;

  if (env_chain_connected && all_zero) {
    return InteractionRole::ValueDetermining;
  }
  if (non_increasing) {
    if (!env_chain_connected) return InteractionRole::UnstableDifferentiator;
    if (last < first - kMonotoneTol) {
      return InteractionRole::StableDifferentiator;
    }
    throw AmbiguousRole("overlaps neither decrease nor stay at zero",
                        overlap_trajectory);
  }
  if (non_decreasing && last > first + kMonotoneTol) {
    return InteractionRole::Undifferentiator;
  }
  throw AmbiguousRole("non-monotone overlap trajectory", overlap_trajectory);
}

PureState reverse(const PureState& joint, const UnitaryEvolution& forward) {
  if (!(joint.space() == forward.space())) {
    throw IrreversibleContext(
        "environment degrees of freedom are no longer retained");
  }
  return evolve(joint, forward.adjoint());
}

std::string trajectory_to_csv(const DifferentiationRun& run) {
  std::ostringstream os;
  os << "time,degree,value_kind,value\n";
  os.precision(17);
  for (const auto& p : run.trajectory) {
    const bool det = p.value.kind == ValueProperty::Kind::Determinate;
    os << p.time << ',' << p.degree << ','
       << (det ? "determinate" : "indeterminate") << ','
       << (det ? p.value.value : p.value.degree) << '\n';
  }
  return os.str();
}

nlohmann::ordered_json to_json(const OverlapMatrix& m) {
  nlohmann::ordered_json defined = nlohmann::ordered_json::array();
  for (bool b : m.defined) defined.push_back(b);
  return {{"overlaps", matrix_to_json(m.overlaps)},
          {"defined", defined}};
}

}  // namespace endqt
