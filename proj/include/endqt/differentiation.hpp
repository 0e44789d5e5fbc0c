// Degrees of differentiation and determinacy: environment-overlap
// coherences, the normalized-entropy measure, interaction-role
// classification and reversal of system-environment entanglement.
#pragma once

#include <functional>
#include <optional>
#include <variant>
#include <vector>

#include "endqt/core.hpp"

namespace endqt {

struct NotPointerDiagonal : Error { using Error::Error; };
struct IrreversibleContext : Error { using Error::Error; };

// Thrown by classify_role on a non-monotone overlap trajectory.
struct AmbiguousRole : Error {
  AmbiguousRole(const std::string& msg, std::vector<double> trajectory)
      : Error(msg), trajectory(std::move(trajectory)) {}
  std::vector<double> trajectory;
};

enum class InteractionRole {
  ValueDetermining,
  StableDifferentiator,
  UnstableDifferentiator,
  Undifferentiator,
  SecondOrderUnstableDifferentiator,
  SecondOrderUnstableUndifferentiator,
};

const char* to_string(InteractionRole role);

// Outcome-side of the ontology: either a determinate eigenvalue or an
// indeterminate value with a degree in [0,1).
struct ValueProperty {
  enum class Kind { Determinate, Indeterminate };
  Kind kind = Kind::Indeterminate;
  double value = 0.0;   // eigenvalue when Determinate
  double degree = 0.0;  // degree of determinacy when Indeterminate

  static ValueProperty determinate(double eigenvalue) {
    return {Kind::Determinate, eigenvalue, 1.0};
  }
  static ValueProperty indeterminate(double degree) {
    return {Kind::Indeterminate, 0.0, degree};
  }
};

// The (state, observable, degree) triple. The carrier is either a system
// pure state, a joint system-environment pure state, or a reduced density
// operator.
struct QuantumProperty {
  std::variant<PureState, DensityOperator> carrier;
  Observable observable;
  double degree = 0.0;
};

// Pointer-monitoring coupling: a family of joint unitaries, diagonal in
// the pointer eigenbasis on the system factor (system self-dynamics
// neglected).
struct PointerCoupling {
  Observable system_observable;  // on the system factor alone
  std::vector<std::string> environment_labels;
  std::function<UnitaryEvolution(double)> unitary_family;
};

// Normalized conditional-environment overlaps <E_j|E_i>. Entries where an
// amplitude vanishes are undefined and flagged.
struct OverlapMatrix {
  Mat overlaps;
  std::vector<bool> defined;  // per pointer index; amplitude != 0
  Eigen::VectorXd amplitude_moduli;

  // Largest defined off-diagonal overlap modulus; 0 if none is defined.
  double max_off_diagonal() const;
};

OverlapMatrix coherence_overlaps(const PureState& joint,
                                 const std::string& system_label,
                                 const Observable& pointer);

// D* = S(rho_S) / ln N.
double degree_of_differentiation(const DensityOperator& rho_s,
                                 const Observable& pointer);

struct TrajectoryPoint {
  double time = 0.0;
  double degree = 0.0;
  double overlap = 0.0;  // max off-diagonal overlap modulus at this step
  ValueProperty value;
};

struct DifferentiationRun {
  std::vector<TrajectoryPoint> trajectory;
  std::optional<double> determined_value;  // set once sampled
};

constexpr double kDefaultCompletionThreshold = 1.0 - 1e-6;

// Evolves the joint carrier under the coupling and reports the degree
// trajectory together with per-step value assignment. Values are
// indeterminate with degree 0 whenever the environment is not
// chain-connected; otherwise the degree of determinacy equals D* until
// the completion threshold, at which point an eigenvalue is sampled.
DifferentiationRun run_differentiation(
    const QuantumProperty& system, const PointerCoupling& coupling,
    const std::string& system_label, bool env_chain_connected,
    double duration, int steps, RngStream& rng,
    double completion_threshold = kDefaultCompletionThreshold);

InteractionRole classify_role(const std::vector<double>& overlap_trajectory,
                              bool env_chain_connected);

// Applies the countertransformation to a fully retained joint state.
// A state whose space no longer matches the forward unitary (environment
// traced out) cannot be reversed.
PureState reverse(const PureState& joint, const UnitaryEvolution& forward);

// CSV rows (time, degree, value_kind, value) for trajectory export.
std::string trajectory_to_csv(const DifferentiationRun& run);
nlohmann::ordered_json to_json(const OverlapMatrix& m);

}  // namespace endqt
