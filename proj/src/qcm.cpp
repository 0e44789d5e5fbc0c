#include "endqt/qcm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace endqt::qcm {

namespace {

std::vector<long long> strides_of(const std::vector<int>& dims) {
  std::vector<long long> stride(dims.size(), 1);
  for (std::size_t i = dims.size(); i-- > 1;) {
    stride[i - 1] = stride[i] * dims[i];
  }
  return stride;
}

std::vector<int> dims_of(const LabelSeq& seq) {
  std::vector<int> d;
  d.reserve(seq.size());
  for (const auto& s : seq) d.push_back(s.dim);
  return d;
}

std::size_t find_label(const LabelSeq& seq, const std::string& label) {
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (seq[i].label == label) return i;
  }
  throw InvalidState("label '" + label + "' not found");
}

}  // namespace

int seq_dim(const LabelSeq& seq) {
  int d = 1;
  for (const auto& s : seq) d *= s.dim;
  return d;
}

LabelSeq concat(const LabelSeq& a, const LabelSeq& b) {
  LabelSeq out = a;
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

Mat embed(const Mat& m, const LabelSeq& op_labels, const LabelSeq& full) {
  const std::vector<int> full_dims = dims_of(full);
  const std::vector<long long> full_stride = strides_of(full_dims);
  const std::vector<int> op_dims = dims_of(op_labels);
  const std::vector<long long> op_stride = strides_of(op_dims);

  std::vector<std::size_t> op_pos;  // position of each op label in full
  for (const auto& l : op_labels) {
    const std::size_t p = find_label(full, l.label);
    if (full[p].dim != l.dim) {
      throw SpaceMismatch("dimension mismatch on label '" + l.label + "'");
    }
    op_pos.push_back(p);
  }
  std::vector<std::size_t> rest_pos;
  for (std::size_t i = 0; i < full.size(); ++i) {
    if (std::find(op_pos.begin(), op_pos.end(), i) == op_pos.end()) {
      rest_pos.push_back(i);
    }
  }
  long long rest_dim = 1;
  for (std::size_t p : rest_pos) rest_dim *= full_dims[p];

  const int op_dim = seq_dim(op_labels);
  const int D = seq_dim(full);
  Mat out = Mat::Zero(D, D);
  for (int a = 0; a < op_dim; ++a) {
    for (int b = 0; b < op_dim; ++b) {
      const Complex v = m(a, b);
      if (v == Complex(0.0)) continue;
      // Scatter op multi-indices into the full index.
      long long base_a = 0, base_b = 0;
      long long pa = a, pb = b;
      for (std::size_t i = op_labels.size(); i-- > 0;) {
        base_a += (pa % op_dims[i]) * full_stride[op_pos[i]];
        base_b += (pb % op_dims[i]) * full_stride[op_pos[i]];
        pa /= op_dims[i];
        pb /= op_dims[i];
      }
      for (long long r = 0; r < rest_dim; ++r) {
        long long off = 0;
        long long pr = r;
        for (std::size_t i = rest_pos.size(); i-- > 0;) {
          off += (pr % full_dims[rest_pos[i]]) * full_stride[rest_pos[i]];
          pr /= full_dims[rest_pos[i]];
        }
        out(base_a + off, base_b + off) += v;
      }
    }
  }
  return out;
}

Mat trace_out(const Mat& m, const LabelSeq& op_labels,
              const std::vector<std::string>& remove) {
  const std::vector<int> dims = dims_of(op_labels);
  const std::vector<long long> stride = strides_of(dims);
  std::vector<bool> removed(op_labels.size(), false);
  for (const auto& r : remove) removed[find_label(op_labels, r)] = true;

  std::vector<std::size_t> keep_pos, rm_pos;
  for (std::size_t i = 0; i < op_labels.size(); ++i) {
    (removed[i] ? rm_pos : keep_pos).push_back(i);
  }
  long long keep_dim = 1, rm_dim = 1;
  for (std::size_t p : keep_pos) keep_dim *= dims[p];
  for (std::size_t p : rm_pos) rm_dim *= dims[p];

  auto scatter = [&](long long packed, const std::vector<std::size_t>& pos) {
    long long idx = 0;
    for (std::size_t i = pos.size(); i-- > 0;) {
      idx += (packed % dims[pos[i]]) * stride[pos[i]];
      packed /= dims[pos[i]];
    }
    return idx;
  };

  Mat out = Mat::Zero(keep_dim, keep_dim);
  for (long long a = 0; a < keep_dim; ++a) {
    for (long long b = 0; b < keep_dim; ++b) {
      Complex sum = 0.0;
      const long long ia = scatter(a, keep_pos);
      const long long ib = scatter(b, keep_pos);
      for (long long k = 0; k < rm_dim; ++k) {
        const long long off = scatter(k, rm_pos);
        sum += m(ia + off, ib + off);
      }
      out(a, b) = sum;
    }
  }
  return out;
}

bool ChoiMatrix::is_psd(double tol) const {
  if ((matrix - matrix.adjoint()).cwiseAbs().maxCoeff() > tol) return false;
  Eigen::SelfAdjointEigenSolver<Mat> es(matrix, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff() > -tol;
}

bool ChoiMatrix::is_cptp(double tol) const {
  std::vector<std::string> outs;
  for (const auto& o : outputs) outs.push_back(o.label);
  Mat reduced = outs.empty() ? matrix : trace_out(matrix, labels(), outs);
  const int din = seq_dim(inputs);
  return (reduced - Mat::Identity(din, din)).cwiseAbs().maxCoeff() < tol;
}

ChoiMatrix choi_of_unitary(const UnitaryEvolution& u, LabelSeq input_labels,
                           LabelSeq output_labels) {
  const int din = seq_dim(input_labels);
  const int dout = seq_dim(output_labels);
  if (din != u.space().total_dim() || dout != din) {
    throw SpaceMismatch("choi_of_unitary: label dimensions do not match");
  }
  // |v> = sum_i U|i> (x) |i>; C = |v><v| (rank 1).
  Vec v = Vec::Zero(dout * din);
  for (int i = 0; i < din; ++i) {
    for (int k = 0; k < dout; ++k) {
      v[k * din + i] = u.matrix()(k, i);
    }
  }
  return ChoiMatrix{std::move(output_labels), std::move(input_labels),
                    v * v.adjoint(), ""};
}

ChoiMatrix choi_of_state(const Mat& rho, LabelSeq output_labels) {
  if (rho.rows() != seq_dim(output_labels)) {
    throw SpaceMismatch("choi_of_state: dimension mismatch");
  }
  return ChoiMatrix{std::move(output_labels), {}, rho, ""};
}

ChoiMatrix choi_of_povm_element(const Mat& effect, LabelSeq input_labels) {
  if (effect.rows() != seq_dim(input_labels)) {
    throw SpaceMismatch("choi_of_povm_element: dimension mismatch");
  }
  return ChoiMatrix{{}, std::move(input_labels), effect.transpose(), ""};
}

ChoiMatrix choi_of_identity(LabelSeq input_labels, LabelSeq output_labels) {
  const int d = seq_dim(input_labels);
  if (d != seq_dim(output_labels)) {
    throw SpaceMismatch("choi_of_identity: dimension mismatch");
  }
  Mat c = Mat::Zero(d * d, d * d);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) {
      c(i * d + i, j * d + j) = 1.0;
    }
  }
  return ChoiMatrix{std::move(output_labels), std::move(input_labels),
                    std::move(c), ""};
}

ChoiMatrix choi_of_dephasing(LabelSeq input_labels, LabelSeq output_labels) {
  const int d = seq_dim(input_labels);
  if (d != seq_dim(output_labels)) {
    throw SpaceMismatch("choi_of_dephasing: dimension mismatch");
  }
  Mat c = Mat::Zero(d * d, d * d);
  for (int i = 0; i < d; ++i) {
    c(i * d + i, i * d + i) = 1.0;
  }
  return ChoiMatrix{std::move(output_labels), std::move(input_labels),
                    std::move(c), ""};
}

Mat apply_choi(const ChoiMatrix& choi, const Mat& rho) {
  const int din = seq_dim(choi.inputs);
  const int dout = seq_dim(choi.outputs);
  if (rho.rows() != din) {
    throw SpaceMismatch("apply_choi: input dimension mismatch");
  }
  Mat out = Mat::Zero(dout, dout);
  for (int a = 0; a < dout; ++a) {
    for (int b = 0; b < dout; ++b) {
      Complex sum = 0.0;
      for (int i = 0; i < din; ++i) {
        for (int j = 0; j < din; ++j) {
          sum += choi.matrix(a * din + i, b * din + j) * rho(i, j);
        }
      }
      out(a, b) = sum;
    }
  }
  return out;
}

ProcessOperator::ProcessOperator(std::vector<QcmNode> nodes,
                                 std::map<std::string, ChoiMatrix> factors)
    : nodes_(std::move(nodes)), factors_(std::move(factors)) {
  std::set<std::string> names;
  for (const auto& n : nodes_) {
    if (!names.insert(n.name).second) {
      throw InvalidState("duplicate node name '" + n.name + "'");
    }
    total_ = concat(total_, concat(n.inputs, n.outputs));
  }
  for (const auto& n : nodes_) {
    auto it = factors_.find(n.name);
    if (it == factors_.end()) {
      throw InvalidState("missing factor for node '" + n.name + "'");
    }
    const ChoiMatrix& f = it->second;
    if (!(f.outputs == n.inputs)) {
      throw InvalidState("factor for node '" + n.name +
                         "' must output the node's input sector");
    }
    if (!f.is_psd()) {
      throw InvalidState("factor for node '" + n.name + "' is not PSD");
    }
  }
  const int D = seq_dim(total_);
  sigma_ = Mat::Identity(D, D);
  for (const auto& n : nodes_) {
    sigma_ *= embed(factors_.at(n.name).matrix, factors_.at(n.name).labels(),
                    total_);
  }
}

const QcmNode& ProcessOperator::node(const std::string& name) const {
  for (const auto& n : nodes_) {
    if (n.name == name) return n;
  }
  throw InvalidState("unknown node '" + name + "'");
}

QmcReport check_qmc(const ProcessOperator& p) {
  QmcReport report;
  std::vector<std::pair<std::string, Mat>> padded;
  for (const auto& n : p.nodes()) {
    const ChoiMatrix& f = p.factors().at(n.name);
    padded.emplace_back(n.name, embed(f.matrix, f.labels(), p.total_labels()));
  }
  for (std::size_t i = 0; i < padded.size(); ++i) {
    for (std::size_t j = i + 1; j < padded.size(); ++j) {
      const double c = (padded[i].second * padded[j].second -
                        padded[j].second * padded[i].second)
                           .cwiseAbs()
                           .maxCoeff();
      if (c > kUnitaryTol) {
        report.ok = false;
        report.failures.push_back("factors for '" + padded[i].first +
                                  "' and '" + padded[j].first +
                                  "' do not commute (max |[.,.]| = " +
                                  std::to_string(c) + ")");
      }
    }
  }
  // sigma must equal the factor product in any order; check the reverse.
  const int D = seq_dim(p.total_labels());
  Mat reversed = Mat::Identity(D, D);
  for (auto it = padded.rbegin(); it != padded.rend(); ++it) {
    reversed *= it->second;
  }
  if ((reversed - p.sigma()).cwiseAbs().maxCoeff() > kUnitaryTol) {
    report.ok = false;
    report.failures.push_back("sigma is not the order-independent product of "
                              "its factors");
  }
  return report;
}

double qcm_born(const ProcessOperator& p,
                const std::map<std::string, InterventionMap>& interventions) {
  const int D = seq_dim(p.total_labels());
  Mat taus = Mat::Identity(D, D);
  for (const auto& n : p.nodes()) {
    auto it = interventions.find(n.name);
    if (it == interventions.end()) {
      throw IncompleteInterventionSet("no intervention for node '" + n.name +
                                      "'");
    }
    const ChoiMatrix& tau = it->second.choi;
    if (!(tau.outputs == n.outputs) || !(tau.inputs == n.inputs)) {
      throw SpaceMismatch("intervention for node '" + n.name +
                          "' is on the wrong sector");
    }
    taus *= embed(tau.matrix, tau.labels(), p.total_labels());
  }
  return (p.sigma() * taus.transpose()).trace().real();
}

InterventionMap identity_intervention(const QcmNode& node) {
  ChoiMatrix choi;
  if (node.outputs.empty()) {
    // Measure-everything-and-discard with the unit effect.
    choi = choi_of_povm_element(
        Mat::Identity(seq_dim(node.inputs), seq_dim(node.inputs)),
        node.inputs);
  } else if (node.inputs.empty()) {
    throw InvalidState("root node '" + node.name +
                       "' needs an explicit preparation intervention");
  } else {
    choi = choi_of_identity(node.inputs, node.outputs);
  }
  return InterventionMap{node.name, "id", "", std::move(choi)};
}

ClassicalTables classical_limit(const ProcessOperator& p) {
  for (const auto& [name, f] : p.factors()) {
    double off = 0.0;
    for (Eigen::Index i = 0; i < f.matrix.rows(); ++i) {
      for (Eigen::Index j = 0; j < f.matrix.cols(); ++j) {
        if (i != j) off = std::max(off, std::abs(f.matrix(i, j)));
      }
    }
    if (off > kDiagonalTol) {
      throw NotDiagonal("factor for node '" + name +
                            "' is not diagonal (max off-diagonal " +
                            std::to_string(off) + ")",
                        off);
    }
  }
  ClassicalTables tables;
  for (const auto& n : p.nodes()) {
    const ChoiMatrix& f = p.factors().at(n.name);
    const int rows = seq_dim(f.outputs);  // node-input configurations
    const int cols = seq_dim(f.inputs);   // parent-sector configurations
    Eigen::MatrixXd t(rows, cols);
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) {
        t(r, c) = f.matrix(r * cols + c, r * cols + c).real();
      }
    }
    tables.tables[n.name] = std::move(t);
  }
  return tables;
}

bool no_influence(const ChoiMatrix& u_choi, const std::string& from_input,
                  const std::string& to_output, double tol) {
  // Trace out every output except `to_output`.
  std::vector<std::string> drop;
  for (const auto& o : u_choi.outputs) {
    if (o.label != to_output) drop.push_back(o.label);
  }
  LabelSeq reduced_labels;
  for (const auto& l : u_choi.labels()) {
    if (std::find(drop.begin(), drop.end(), l.label) == drop.end()) {
      reduced_labels.push_back(l);
    }
  }
  Mat reduced = drop.empty() ? u_choi.matrix
                             : trace_out(u_choi.matrix, u_choi.labels(), drop);

  const std::size_t xpos = find_label(reduced_labels, from_input);
  const int dx = reduced_labels[xpos].dim;
  LabeledDim x = reduced_labels[xpos];
  LabelSeq rest;
  for (const auto& l : reduced_labels) {
    if (l.label != from_input) rest.push_back(l);
  }
  Mat marginal = trace_out(reduced, reduced_labels, {from_input}) / dx;
  Mat candidate = embed(marginal, rest, reduced_labels);
  return (reduced - candidate).cwiseAbs().maxCoeff() < tol;
}

nlohmann::ordered_json to_json(const ChoiMatrix& c) {
  auto seq = [](const LabelSeq& s) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& l : s) arr.push_back({{"label", l.label}, {"dim", l.dim}});
    return arr;
  };
  nlohmann::ordered_json j = {{"outputs", seq(c.outputs)},
                              {"inputs", seq(c.inputs)},
                              {"matrix", matrix_to_json(c.matrix)}};
  if (!c.tag.empty()) j["tag"] = c.tag;
  return j;
}

nlohmann::ordered_json to_json(const ProcessOperator& p) {
  nlohmann::ordered_json nodes = nlohmann::ordered_json::array();
  for (const auto& n : p.nodes()) {
    nlohmann::ordered_json parents = nlohmann::ordered_json::array();
    for (const auto& q : n.parents) parents.push_back(q);
    nodes.push_back({{"name", n.name}, {"parents", parents}});
  }
  nlohmann::ordered_json factors;
  for (const auto& [name, f] : p.factors()) factors[name] = to_json(f);
  return {{"nodes", nodes}, {"factors", factors}};
}

}  // namespace endqt::qcm
