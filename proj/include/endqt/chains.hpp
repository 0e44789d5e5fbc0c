// SDC/UDC bookkeeping: a timestamped DAG of value-determination edges
// with stability windows, membership rules and the determinacy gate.
#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "endqt/core.hpp"

namespace endqt::chains {

using SystemId = std::string;

struct UnknownSystem : Error { using Error::Error; };
struct CycleRejected : Error { using Error::Error; };
struct StructureRejected : Error { using Error::Error; };

enum class RoleClass { PrimeInitiator, SubordinateInitiator, NonInitiator };

struct ChainNode {
  SystemId system;
  std::optional<std::string> position;
  RoleClass role_class = RoleClass::NonInitiator;
};

struct ValueDeterminationEdge {
  SystemId from;
  SystemId to;
  double t_start = 0.0;
  // Edge stops accruing ticks from this instant once a boundary cuts it.
  std::optional<double> severed_at;
  std::vector<double> tick_times;  // sorted
  bool blueprint = false;
};

// Operationalizes "frequently value-determined": at least min_ticks per
// trailing window of length window_length.
struct StabilityParams {
  double window_length = 1.0;
  int min_ticks = 1;
};

enum class Membership { SDC, UDC };

struct MembershipResult {
  Membership kind = Membership::UDC;
  std::optional<SystemId> chain_id;  // prime initiator rooting the SDC
};

struct Violation {
  std::string kind;  // "cycle" | "edge-into-prime" | "disconnected-member"
  std::string description;
  std::vector<SystemId> systems;
};

struct ChainEvent {
  std::string kind;  // "tick" | "unstable" | "blocked" | "isolate" | "reopen"
  SystemId from;
  SystemId to;
  double time = 0.0;
};

struct IsolationResult;

// Persistent value: mutations return updated copies.
class ChainGraph {
 public:
  ChainGraph() = default;
  explicit ChainGraph(StabilityParams stability) : stability_(stability) {}

  ChainGraph with_node(ChainNode node) const;
  const std::map<SystemId, ChainNode>& nodes() const { return nodes_; }
  const std::vector<ValueDeterminationEdge>& edges() const { return edges_; }
  const std::vector<ChainEvent>& events() const { return events_; }
  const StabilityParams& stability() const { return stability_; }

  bool has_system(const SystemId& id) const;

 private:
  friend ChainGraph record_value_determination(const ChainGraph&,
                                               const SystemId&,
                                               const SystemId&, double, bool);
  friend struct IsolationResult;
  friend IsolationResult isolate(const ChainGraph&,
                                 const std::set<SystemId>&, double);
  friend ChainGraph reopen(const ChainGraph&, const std::set<SystemId>&,
                           double);

  std::map<SystemId, ChainNode> nodes_;
  std::vector<ValueDeterminationEdge> edges_;
  std::vector<ChainEvent> events_;
  StabilityParams stability_;
};

std::vector<Violation> validate(const ChainGraph& graph);

MembershipResult membership(const ChainGraph& graph, const SystemId& system,
                            double t);

// Appends a tick (creating the edge if absent). A tick from a UDC system
// is logged as unstable differentiation, not recorded as an edge. A tick
// that would close a cycle throws CycleRejected; one into a prime
// initiator throws StructureRejected.
ChainGraph record_value_determination(const ChainGraph& graph,
                                      const SystemId& from, const SystemId& to,
                                      double t, bool blueprint = false);

struct IsolationResult {
  ChainGraph graph;
  double lapse_time = 0.0;  // when inside memberships can first lapse
};

// Severs tick accrual on every edge crossing the boundary from t on.
IsolationResult isolate(const ChainGraph& graph,
                        const std::set<SystemId>& boundary, double t);

// Restores tick accrual on edges crossing the boundary.
ChainGraph reopen(const ChainGraph& graph, const std::set<SystemId>& boundary,
                  double t);

enum class Gate { Permit, Deny };

// Permit iff env is an SDC member at t; consumed by run_differentiation as
// env_chain_connected, and the license for post-interaction state updates.
Gate determinacy_gate(const ChainGraph& graph, const SystemId& system,
                      const SystemId& env, double t);

// DOT rendering of the time slice at t: SDC nodes filled black, UDC grey,
// edges labeled with tick counts.
std::string to_dot(const ChainGraph& graph, double t);

nlohmann::ordered_json events_to_json(const ChainGraph& graph);

}  // namespace endqt::chains
