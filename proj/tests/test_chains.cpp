#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <vector>

#include "endqt/chains.hpp"

using namespace endqt;
using namespace endqt::chains;

namespace {

ChainGraph base_pair() {
  ChainGraph g(StabilityParams{1.0, 1});
  g = g.with_node({"A", std::nullopt, RoleClass::PrimeInitiator});
  g = g.with_node({"B", std::nullopt, RoleClass::SubordinateInitiator});
  g = g.with_node({"C", std::nullopt, RoleClass::NonInitiator});
  g = g.with_node({"D", std::nullopt, RoleClass::NonInitiator});
  return g;
}

// A -> B -> C -> D, all ticked at t.
ChainGraph ticked_chain(double t) {
  ChainGraph g = base_pair();
  g = record_value_determination(g, "A", "B", t, true);
  g = record_value_determination(g, "B", "C", t);
  g = record_value_determination(g, "C", "D", t);
  return g;
}

}  // namespace

TEST_CASE("a linear chain from the initiator pair validates cleanly") {
  CHECK(validate(ticked_chain(0.0)).empty());
}

TEST_CASE("ticks into a prime initiator are rejected") {
  ChainGraph g = ticked_chain(0.0);
  CHECK_THROWS_AS(record_value_determination(g, "B", "A", 0.5),
                  StructureRejected);
}

TEST_CASE("ticks that would close a cycle are rejected") {
  ChainGraph g = ticked_chain(0.0);
  CHECK_THROWS_AS(record_value_determination(g, "D", "B", 0.5), CycleRejected);
  CHECK(validate(g).empty());
}

TEST_CASE("edges without a rooting prime are reported") {
  ChainGraph g(StabilityParams{1.0, 1});
  g = g.with_node({"B", std::nullopt, RoleClass::SubordinateInitiator});
  g = g.with_node({"C", std::nullopt, RoleClass::NonInitiator});
  g = record_value_determination(g, "B", "C", 0.0);
  auto violations = validate(g);
  REQUIRE_FALSE(violations.empty());
  CHECK(violations.front().kind == "disconnected-member");
}

TEST_CASE("prime initiators are members by declaration") {
  ChainGraph g = base_pair();
  MembershipResult m = membership(g, "A", 0.0);
  CHECK(m.kind == Membership::SDC);
  CHECK(m.chain_id == "A");
  CHECK_THROWS_AS(membership(g, "nope", 0.0), UnknownSystem);
}

TEST_CASE("non-initiators need an active chain back to a prime") {
  ChainGraph g = base_pair();
  CHECK(membership(g, "C", 0.0).kind == Membership::UDC);
  g = ticked_chain(0.0);
  MembershipResult m = membership(g, "C", 0.5);
  CHECK(m.kind == Membership::SDC);
  CHECK(m.chain_id == "A");
  // The trailing window (t - 1, t] empties at t = 1.
  CHECK(membership(g, "C", 1.5).kind == Membership::UDC);
}

TEST_CASE("a tick from a UDC system is logged, not recorded") {
  ChainGraph g = base_pair();  // C is UDC: no edges yet
  ChainGraph after = record_value_determination(g, "C", "D", 0.0);
  CHECK(after.edges().empty());
  REQUIRE_FALSE(after.events().empty());
  CHECK(after.events().back().kind == "unstable");
  CHECK(membership(after, "D", 0.0).kind == Membership::UDC);
}

TEST_CASE("a tick from a member recruits the target") {
  ChainGraph g = base_pair();
  g = record_value_determination(g, "A", "B", 0.0, true);
  g = record_value_determination(g, "B", "C", 0.0);
  CHECK(membership(g, "C", 0.0).kind == Membership::SDC);
  g = record_value_determination(g, "C", "D", 0.1);
  CHECK(membership(g, "D", 0.1).kind == Membership::SDC);
}

TEST_CASE("isolation severs crossing edges and membership lapses") {
  ChainGraph g = ticked_chain(0.0);
  IsolationResult iso = isolate(g, {"C", "D"}, 0.2);
  CHECK(iso.lapse_time == doctest::Approx(1.2));
  // Ticks after severance are blocked.
  ChainGraph blocked = record_value_determination(iso.graph, "B", "C", 0.5);
  CHECK(blocked.events().back().kind == "blocked");
  // Membership holds while the trailing window still has the old tick.
  CHECK(membership(blocked, "C", 0.9).kind == Membership::SDC);
  CHECK(membership(blocked, "C", 1.25).kind == Membership::UDC);
}

TEST_CASE("reopening before the window empties preserves membership") {
  ChainGraph g = ticked_chain(0.0);
  IsolationResult iso = isolate(g, {"C", "D"}, 0.2);
  ChainGraph open = reopen(iso.graph, {"C", "D"}, 0.6);
  open = record_value_determination(open, "A", "B", 0.8, true);
  open = record_value_determination(open, "B", "C", 0.8);
  open = record_value_determination(open, "C", "D", 0.8);
  CHECK(membership(open, "C", 1.5).kind == Membership::SDC);
  CHECK(membership(open, "D", 1.5).kind == Membership::SDC);
}

TEST_CASE("isolating a boundary that cuts no edges changes nothing") {
  ChainGraph g = ticked_chain(0.0);
  IsolationResult iso = isolate(g, {"A", "B", "C", "D"}, 0.2);
  for (const auto& e : iso.graph.edges()) CHECK_FALSE(e.severed_at.has_value());
  CHECK(membership(iso.graph, "D", 0.5).kind == Membership::SDC);
}

TEST_CASE("the determinacy gate mirrors environment membership") {
  ChainGraph g = ticked_chain(0.0);
  CHECK(determinacy_gate(g, "D", "C", 0.5) == Gate::Permit);
  CHECK(determinacy_gate(g, "D", "C", 1.5) == Gate::Deny);
  // Even a system in an eigenstate gets no determinate value from a UDC
  // environment.
  ChainGraph bare = base_pair();
  CHECK(determinacy_gate(bare, "D", "C", 0.0) == Gate::Deny);
}

TEST_CASE("gate permit implies SDC membership across random graphs") {
  std::mt19937_64 rng(404);
  ChainGraph g = ticked_chain(0.0);
  for (double t : {0.1, 0.6, 1.1, 2.0}) {
    for (const auto& [id, node] : g.nodes()) {
      for (const auto& [env, envnode] : g.nodes()) {
        if (determinacy_gate(g, id, env, t) == Gate::Permit) {
          CHECK(membership(g, env, t).kind == Membership::SDC);
        }
      }
    }
  }
}

TEST_CASE("membership is monotone in tick evidence") {
  ChainGraph g = ticked_chain(0.0);
  ChainGraph more = record_value_determination(g, "B", "C", 0.4);
  for (double t : {0.0, 0.4, 0.9, 1.3}) {
    for (const auto& [id, node] : g.nodes()) {
      if (membership(g, id, t).kind == Membership::SDC) {
        CHECK(membership(more, id, t).kind == Membership::SDC);
      }
    }
  }
}

TEST_CASE("membership is invariant under relabeling and insertion order") {
  ChainGraph g1(StabilityParams{1.0, 1});
  g1 = g1.with_node({"A", std::nullopt, RoleClass::PrimeInitiator});
  g1 = g1.with_node({"X", std::nullopt, RoleClass::NonInitiator});
  g1 = g1.with_node({"Y", std::nullopt, RoleClass::NonInitiator});
  g1 = record_value_determination(g1, "A", "X", 0.0);
  g1 = record_value_determination(g1, "X", "Y", 0.1);

  ChainGraph g2(StabilityParams{1.0, 1});
  g2 = g2.with_node({"why", std::nullopt, RoleClass::NonInitiator});
  g2 = g2.with_node({"alpha", std::nullopt, RoleClass::PrimeInitiator});
  g2 = g2.with_node({"ex", std::nullopt, RoleClass::NonInitiator});
  g2 = record_value_determination(g2, "alpha", "ex", 0.0);
  g2 = record_value_determination(g2, "ex", "why", 0.1);

  for (double t : {0.05, 0.5, 1.05, 1.2}) {
    CHECK(membership(g1, "X", t).kind == membership(g2, "ex", t).kind);
    CHECK(membership(g1, "Y", t).kind == membership(g2, "why", t).kind);
  }
}

TEST_CASE("invariants hold across a thousand randomized mutations") {
  std::mt19937_64 rng(2024);
  std::vector<SystemId> ids = {"P", "Q", "S1", "N1", "N2", "N3", "N4", "N5"};
  ChainGraph g(StabilityParams{1.0, 1});
  g = g.with_node({"P", std::nullopt, RoleClass::PrimeInitiator});
  g = g.with_node({"Q", std::nullopt, RoleClass::PrimeInitiator});
  g = g.with_node({"S1", std::nullopt, RoleClass::SubordinateInitiator});
  for (int i = 1; i <= 5; ++i) {
    g = g.with_node({"N" + std::to_string(i), std::nullopt,
                     RoleClass::NonInitiator});
  }
  // Blueprint tick pairing the subordinate initiator with its prime, so
  // every later edge out of S1 is rooted.
  g = record_value_determination(g, "P", "S1", 0.0, true);

  std::uniform_int_distribution<int> pick(0, static_cast<int>(ids.size()) - 1);
  std::uniform_int_distribution<int> op(0, 9);
  double t = 0.0;
  int rejected = 0;
  for (int step = 0; step < 1200; ++step) {
    t += 0.01;
    const int o = op(rng);
    try {
      if (o < 7) {
        g = record_value_determination(g, ids[pick(rng)], ids[pick(rng)], t);
      } else if (o < 9) {
        std::set<SystemId> boundary;
        for (const auto& id : ids) {
          if (rng() % 2 == 0) boundary.insert(id);
        }
        if (!boundary.empty()) g = isolate(g, boundary, t).graph;
      } else {
        std::set<SystemId> boundary(ids.begin(), ids.end());
        g = reopen(g, boundary, t);
      }
    } catch (const CycleRejected&) {
      ++rejected;
    } catch (const StructureRejected&) {
      ++rejected;
    }
    // Structure constraints hold after every surviving mutation.
    CHECK(validate(g).empty());
    // Non-initiator members always root back to a prime.
    for (const auto& id : ids) {
      MembershipResult m = membership(g, id, t);
      if (m.kind == Membership::SDC &&
          g.nodes().at(id).role_class == RoleClass::NonInitiator) {
        REQUIRE(m.chain_id.has_value());
        CHECK(g.nodes().at(*m.chain_id).role_class ==
              RoleClass::PrimeInitiator);
      }
      if (determinacy_gate(g, ids[pick(rng)], id, t) == Gate::Permit) {
        CHECK(membership(g, id, t).kind == Membership::SDC);
      }
    }
  }
  CHECK(rejected > 0);  // the generator does exercise the rejection paths
}

TEST_CASE("DOT export colors by membership and counts ticks") {
  ChainGraph g = ticked_chain(0.0);
  std::string dot = to_dot(g, 0.5);
  CHECK(dot.find("digraph") != std::string::npos);
  CHECK(dot.find("fillcolor=black") != std::string::npos);
  CHECK(dot.find("\"A\" -> \"B\" [label=\"1\"]") != std::string::npos);
  std::string late = to_dot(g, 2.0);
  CHECK(late.find("\"C\" [style=filled, fillcolor=grey]") != std::string::npos);
}

TEST_CASE("event log serializes in order") {
  ChainGraph g = base_pair();
  g = record_value_determination(g, "A", "B", 0.0);
  g = record_value_determination(g, "C", "D", 0.1);  // unstable
  auto j = events_to_json(g);
  REQUIRE(j.size() == 2);
  CHECK(j[0]["kind"] == "tick");
  CHECK(j[1]["kind"] == "unstable");
}
