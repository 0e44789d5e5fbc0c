#include "endqt/chains.hpp"

#include <algorithm>
#include <deque>
#include <functional>
#include <sstream>

namespace endqt::chains {

namespace {

const ValueDeterminationEdge* find_edge(
    const std::vector<ValueDeterminationEdge>& edges, const SystemId& from,
    const SystemId& to) {
  for (const auto& e : edges) {
    if (e.from == from && e.to == to) return &e;
  }
  return nullptr;
}

// Ticks within the trailing window (t - dt, t], capped by severance.
int ticks_in_window(const ValueDeterminationEdge& e, double t, double dt) {
  int n = 0;
  for (double tick : e.tick_times) {
    if (tick > t - dt && tick <= t) ++n;
  }
  return n;
}

bool edge_active(const ValueDeterminationEdge& e, double t,
                 const StabilityParams& p) {
  return ticks_in_window(e, t, p.window_length) >= p.min_ticks;
}

// Does a directed path to -> ... -> from exist in the edge set?
bool path_exists(const std::vector<ValueDeterminationEdge>& edges,
                 const SystemId& src, const SystemId& dst) {
  std::deque<SystemId> queue{src};
  std::set<SystemId> seen{src};
  while (!queue.empty()) {
    SystemId cur = queue.front();
    queue.pop_front();
    if (cur == dst) return true;
    for (const auto& e : edges) {
      if (e.from == cur && seen.insert(e.to).second) queue.push_back(e.to);
    }
  }
  return false;
}

}  // namespace

ChainGraph ChainGraph::with_node(ChainNode node) const {
  ChainGraph next = *this;
  next.nodes_[node.system] = std::move(node);
  return next;
}

bool ChainGraph::has_system(const SystemId& id) const {
  return nodes_.count(id) > 0;
}

std::vector<Violation> validate(const ChainGraph& graph) {
  std::vector<Violation> out;

  // Cycles, via DFS over the edge set.
  {
    std::map<SystemId, int> state;  // 0 unseen, 1 in stack, 2 done
    std::function<bool(const SystemId&)> dfs = [&](const SystemId& v) {
      state[v] = 1;
      for (const auto& e : graph.edges()) {
        if (e.from != v) continue;
        if (state[e.to] == 1) {
          out.push_back({"cycle", "directed cycle through " + e.to,
                         {v, e.to}});
          return true;
        }
        if (state[e.to] == 0 && dfs(e.to)) return true;
      }
      state[v] = 2;
      return false;
    };
    for (const auto& [id, node] : graph.nodes()) {
      if (state[id] == 0) dfs(id);
    }
  }

  for (const auto& e : graph.edges()) {
    auto it = graph.nodes().find(e.to);
    if (it != graph.nodes().end() &&
        it->second.role_class == RoleClass::PrimeInitiator) {
      out.push_back({"edge-into-prime",
                     "edge " + e.from + " -> " + e.to +
                         " terminates at a prime initiator",
                     {e.from, e.to}});
    }
  }

  // Every node touched by edges must reach back to some prime initiator.
  std::vector<SystemId> primes;
  for (const auto& [id, node] : graph.nodes()) {
    if (node.role_class == RoleClass::PrimeInitiator) primes.push_back(id);
  }
  for (const auto& e : graph.edges()) {
    for (const SystemId& id : {e.from, e.to}) {
      bool rooted = std::any_of(primes.begin(), primes.end(),
                                [&](const SystemId& p) {
                                  return p == id ||
                                         path_exists(graph.edges(), p, id);
                                });
      if (!rooted) {
        out.push_back({"disconnected-member",
                       id + " has value-determination edges but no path from "
                            "a prime initiator",
                       {id}});
      }
    }
  }
  return out;
}

MembershipResult membership(const ChainGraph& graph, const SystemId& system,
                            double t) {
  auto it = graph.nodes().find(system);
  if (it == graph.nodes().end()) {
    throw UnknownSystem("unknown system '" + system + "'");
  }
  if (it->second.role_class != RoleClass::NonInitiator) {
    // Initiators are members by declaration.
    if (it->second.role_class == RoleClass::PrimeInitiator) {
      return {Membership::SDC, system};
    }
    // Subordinate initiators root back to their prime if one reaches them,
    // otherwise they stand as declared members of their own pair.
    for (const auto& [pid, pnode] : graph.nodes()) {
      if (pnode.role_class == RoleClass::PrimeInitiator &&
          path_exists(graph.edges(), pid, system)) {
        return {Membership::SDC, pid};
      }
    }
    return {Membership::SDC, std::nullopt};
  }

  // Non-initiators: a chain of active edges from a prime initiator.
  std::deque<SystemId> queue;
  std::set<SystemId> seen;
  std::map<SystemId, SystemId> root;
  for (const auto& [id, node] : graph.nodes()) {
    if (node.role_class == RoleClass::PrimeInitiator) {
      queue.push_back(id);
      seen.insert(id);
      root[id] = id;
    }
  }
  while (!queue.empty()) {
    SystemId cur = queue.front();
    queue.pop_front();
    if (cur == system) return {Membership::SDC, root[cur]};
    for (const auto& e : graph.edges()) {
      if (e.from != cur || !edge_active(e, t, graph.stability())) continue;
      if (seen.insert(e.to).second) {
        root[e.to] = root[cur];
        queue.push_back(e.to);
      }
    }
  }
  return {Membership::UDC, std::nullopt};
}

ChainGraph record_value_determination(const ChainGraph& graph,
                                      const SystemId& from, const SystemId& to,
                                      double t, bool blueprint) {
  if (!graph.has_system(from) || !graph.has_system(to)) {
    throw UnknownSystem("record_value_determination: unknown system");
  }
  ChainGraph next = graph;

  if (membership(graph, from, t).kind != Membership::SDC) {
    // The quantum dynamics still happened, but only as unstable
    // differentiation; no chain edge is created.
    next.events_.push_back({"unstable", from, to, t});
    return next;
  }
  if (graph.nodes().at(to).role_class == RoleClass::PrimeInitiator) {
    throw StructureRejected("no system can value-determine prime initiator '" +
                            to + "'");
  }
  const ValueDeterminationEdge* existing = find_edge(graph.edges(), from, to);
  if (existing == nullptr && path_exists(graph.edges(), to, from)) {
    throw CycleRejected("tick " + from + " -> " + to + " would close a cycle");
  }
  if (existing != nullptr && existing->severed_at &&
      t >= *existing->severed_at) {
    next.events_.push_back({"blocked", from, to, t});
    return next;
  }

  if (existing == nullptr) {
    next.edges_.push_back({from, to, t, std::nullopt, {t}, blueprint});
  } else {
    for (auto& e : next.edges_) {
      if (e.from == from && e.to == to) {
        e.tick_times.insert(
            std::upper_bound(e.tick_times.begin(), e.tick_times.end(), t), t);
        break;
      }
    }
  }
  next.events_.push_back({"tick", from, to, t});
  return next;
}

IsolationResult isolate(const ChainGraph& graph,
                        const std::set<SystemId>& boundary, double t) {
  if (boundary.empty()) {
    throw InvalidState("isolate: boundary is empty");
  }
  ChainGraph next = graph;
  for (auto& e : next.edges_) {
    const bool from_in = boundary.count(e.from) > 0;
    const bool to_in = boundary.count(e.to) > 0;
    if (from_in != to_in) {
      if (!e.severed_at || *e.severed_at > t) e.severed_at = t;
    }
  }
  next.events_.push_back({"isolate", "", "", t});
  return {next, t + graph.stability().window_length};
}

ChainGraph reopen(const ChainGraph& graph, const std::set<SystemId>& boundary,
                  double t) {
  ChainGraph next = graph;
  for (auto& e : next.edges_) {
    const bool from_in = boundary.count(e.from) > 0;
    const bool to_in = boundary.count(e.to) > 0;
    if (from_in != to_in) e.severed_at.reset();
  }
  next.events_.push_back({"reopen", "", "", t});
  return next;
}

Gate determinacy_gate(const ChainGraph& graph, const SystemId& system,
                      const SystemId& env, double t) {
  if (!graph.has_system(system) || !graph.has_system(env)) {
    throw UnknownSystem("determinacy_gate: unknown system");
  }
  return membership(graph, env, t).kind == Membership::SDC ? Gate::Permit
                                                           : Gate::Deny;
}

std::string to_dot(const ChainGraph& graph, double t) {
  std::ostringstream os;
  os << "digraph chains {\n";
  for (const auto& [id, node] : graph.nodes()) {
    const bool sdc = membership(graph, id, t).kind == Membership::SDC;
    os << "  \"" << id << "\" [style=filled, fillcolor="
       << (sdc ? "black, fontcolor=white" : "grey") << "];\n";
  }
  for (const auto& e : graph.edges()) {
    int n = 0;
    for (double tick : e.tick_times) {
      if (tick <= t) ++n;
    }
    if (n == 0) continue;
    os << "  \"" << e.from << "\" -> \"" << e.to << "\" [label=\"" << n
       << "\"];\n";
  }
  os << "}\n";
  return os.str();
}

nlohmann::ordered_json events_to_json(const ChainGraph& graph) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& e : graph.events()) {
    arr.push_back({{"kind", e.kind},
                   {"from", e.from},
                   {"to", e.to},
                   {"time", e.time}});
  }
  return arr;
}

}  // namespace endqt::chains
