// Quantum causal models: Choi representations of channels and
// instruments, process operators over DAGs, the quantum Markov condition,
// the classical-limit recovery and the no-influence check.
#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "endqt/core.hpp"

namespace endqt::qcm {

struct IncompleteInterventionSet : Error { using Error::Error; };

struct NotDiagonal : Error {
  NotDiagonal(const std::string& msg, double max_off_diagonal)
      : Error(msg), max_off_diagonal(max_off_diagonal) {}
  double max_off_diagonal = 0.0;
};

struct LabeledDim {
  std::string label;
  int dim = 0;
  bool operator==(const LabeledDim&) const = default;
};
using LabelSeq = std::vector<LabeledDim>;

int seq_dim(const LabelSeq& seq);
LabelSeq concat(const LabelSeq& a, const LabelSeq& b);

// Pads an operator with identities onto the labels of `full` (reordering
// as needed). `op_labels` lists the operator's labels in its own basis
// order; they must all occur in `full`.
Mat embed(const Mat& m, const LabelSeq& op_labels, const LabelSeq& full);

// Partial trace over the named labels; result ordered as the remaining
// labels of `op_labels`.
Mat trace_out(const Mat& m, const LabelSeq& op_labels,
              const std::vector<std::string>& remove);

// Positive semi-definite operator on outputs (x) inputs, in the
// convention C = sum_ij eps(|i><j|) (x) |i><j| (unnormalized maximally
// entangled vector sum_i |i>|i>).
struct ChoiMatrix {
  LabelSeq outputs;
  LabelSeq inputs;
  Mat matrix;
  std::string tag;  // "SDC" / "UDC" annotation; metadata only

  LabelSeq labels() const { return concat(outputs, inputs); }
  bool is_psd(double tol = kHermTol) const;
  // CPTP: partial trace over outputs equals the identity on inputs.
  bool is_cptp(double tol = kHermTol) const;
};

ChoiMatrix choi_of_unitary(const UnitaryEvolution& u, LabelSeq input_labels,
                           LabelSeq output_labels);
// A state preparation: channel with trivial input.
ChoiMatrix choi_of_state(const Mat& rho, LabelSeq output_labels);
// Measure-and-discard: trivial output, matrix E^T on the input.
ChoiMatrix choi_of_povm_element(const Mat& effect, LabelSeq input_labels);
// Identity channel between same-dimension spaces.
ChoiMatrix choi_of_identity(LabelSeq input_labels, LabelSeq output_labels);
// Completely dephasing channel (the classical copy wire).
ChoiMatrix choi_of_dephasing(LabelSeq input_labels, LabelSeq output_labels);

// Channel application eps(rho) = Tr_in[C (I (x) rho^T)], for oracles.
Mat apply_choi(const ChoiMatrix& choi, const Mat& rho);

// One element of a quantum instrument at a node: CP and trace
// non-increasing; summed over outcomes it must be CPTP.
struct InterventionMap {
  std::string node;
  std::string setting;
  std::string outcome;
  ChoiMatrix choi;  // on (node outputs) (x) (node inputs)
};

struct QcmNode {
  std::string name;
  LabelSeq inputs;
  LabelSeq outputs;
  std::vector<std::string> parents;
};

// DAG plus per-node Choi factors rho_{A_i|Pa(A_i)}: each factor is a
// channel from (a sector of) the parents' outputs to the node's input.
// sigma is the product of the factors padded onto the total space.
class ProcessOperator {
 public:
  ProcessOperator(std::vector<QcmNode> nodes,
                  std::map<std::string, ChoiMatrix> factors);

  const std::vector<QcmNode>& nodes() const { return nodes_; }
  const std::map<std::string, ChoiMatrix>& factors() const { return factors_; }
  const LabelSeq& total_labels() const { return total_; }
  const Mat& sigma() const { return sigma_; }
  const QcmNode& node(const std::string& name) const;

 private:
  std::vector<QcmNode> nodes_;
  std::map<std::string, ChoiMatrix> factors_;
  LabelSeq total_;
  Mat sigma_;
};

struct QmcReport {
  bool ok = true;
  std::vector<std::string> failures;
};

// Pairwise commutation of the padded factors and sigma = product.
QmcReport check_qmc(const ProcessOperator& p);

// P = Tr[sigma (tensor of interventions)^T]; one intervention per node.
double qcm_born(const ProcessOperator& p,
                const std::map<std::string, InterventionMap>& interventions);

// Trivial do-nothing intervention: identity channel input -> output (the
// input state itself when the node has no output).
InterventionMap identity_intervention(const QcmNode& node);

struct ClassicalTables {
  // Per node: rows = node-input configurations, cols = parent-sector
  // configurations (single column for root nodes). Entries P(row|col).
  std::map<std::string, Eigen::MatrixXd> tables;
};

constexpr double kDiagonalTol = 1e-10;

// Requires every factor diagonal in the declared basis; the diagonals are
// then classical conditional probabilities.
ClassicalTables classical_limit(const ProcessOperator& p);

// For a unitary Choi over outputs (Z,K) and inputs (X,Y): true iff
// Tr_Z C factorizes as rho_{K|Y} (x) I_X, i.e. X does not influence K.
bool no_influence(const ChoiMatrix& u_choi, const std::string& from_input,
                  const std::string& to_output, double tol = 1e-8);

nlohmann::ordered_json to_json(const ChoiMatrix& c);
nlohmann::ordered_json to_json(const ProcessOperator& p);

}  // namespace endqt::qcm
