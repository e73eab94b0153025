#include <gtest/gtest.h>

#include <cmath>

#include "almh/particle_sim.hpp"
#include "almh/presets.hpp"

using namespace almh;

TEST(Simulate, SameSeedSameLog) {
  auto s = preset("adaptation-1d");
  auto a = simulate_network(s, 30, 2.0, 42, {1.0, 2.0});
  auto b = simulate_network(s, 30, 2.0, 42, {1.0, 2.0});
  ASSERT_EQ(a.events.size(), b.events.size());
  for (std::size_t i = 0; i < a.events.size(); ++i) {
    EXPECT_EQ(a.events[i].time, b.events[i].time);
    EXPECT_EQ(a.events[i].neuron, b.events[i].neuron);
  }
  auto c = simulate_network(s, 30, 2.0, 43, {1.0, 2.0});
  EXPECT_NE(a.events.size() == c.events.size() && a.events[0].time == c.events[0].time, true);
}

TEST(Simulate, EventsOrderedAndStateConsistent) {
  auto s = preset("stp");
  auto rec = simulate_network(s, 40, 3.0, 1, {3.0});
  double prev = 0.0;
  for (const auto& e : rec.events) {
    EXPECT_GE(e.time, prev);
    EXPECT_LE(e.time, 3.0);
    prev = e.time;
  }
  const auto& sn = rec.snapshots.back();
  ASSERT_EQ(sn.ages.size(), 40u);
  // Memories stay in the unit box under the contraction.
  for (const auto& m : sn.memories) {
    EXPECT_GE(m[0], 0.0);
    EXPECT_LE(m[0], 1.0);
  }
  // A neuron's age at T equals T minus its last event time when it fired.
  std::vector<double> last(40, -1.0);
  for (const auto& e : rec.events) last[e.neuron] = e.time;
  for (int i = 0; i < 40; ++i)
    if (last[i] >= 0) EXPECT_NEAR(sn.ages[i], 3.0 - last[i], 1e-12);
}

TEST(Simulate, TraceRecursionMatchesLazySum) {
  auto s = preset("adaptation-1d");
  SimOptions o;
  o.cross_check = true;
  auto rec = simulate_network(s, 25, 3.0, 8, {}, o);
  EXPECT_LT(rec.max_trace_mismatch, 1e-10);
  EXPECT_EQ(rec.x_bound_violations, 0u);
}

TEST(Simulate, RejectsBadArguments) {
  auto s = preset("plain-hawkes");
  EXPECT_THROW(simulate_network(s, 0, 1.0, 1), std::invalid_argument);
  EXPECT_THROW(simulate_network(s, 5, -1.0, 1), std::invalid_argument);
  SimOptions o;
  o.event_cap = 3;
  EXPECT_THROW(simulate_network(s, 50, 5.0, 1, {}, o), std::runtime_error);
}

TEST(Simulate, ConstantRateCountMean) {
  auto s = preset("plain-hawkes");
  s.f.family = IntensityFamily::constant;
  s.f.f_min = s.f.f_max = 1.3;
  s.h.J = 0.0;
  auto rec = simulate_network(s, 2000, 2.0, 77);
  double mean = rec.events.size() / 2000.0;
  EXPECT_NEAR(mean, 2.6, 4 * std::sqrt(2.6 / 2000.0));
}

TEST(EquivalentHawkes, SameEventsAsMemoryModel) {
  auto s = preset("adaptation-1d");
  s.f.c_a = 0.0;
  auto a = simulate_network(s, 10, 5.0, 5);
  auto b = simulate_equivalent_hawkes(s, 10, 5.0, 5);
  ASSERT_EQ(a.events.size(), b.events.size());
  for (std::size_t i = 0; i < a.events.size(); ++i) {
    EXPECT_EQ(a.events[i].time, b.events[i].time);
    EXPECT_EQ(a.events[i].neuron, b.events[i].neuron);
    EXPECT_NEAR(a.events[i].memory_before[0], b.events[i].memory_before[0], 1e-12);
  }
}

TEST(EquivalentHawkes, RefusesUnsupportedModels) {
  EXPECT_THROW(simulate_equivalent_hawkes(preset("stp"), 5, 1.0, 1), std::invalid_argument);
}

TEST(Coupling, IdenticalWithoutInteraction) {
  // With h = 0 and the exact signal, the two systems coincide.
  auto s = preset("plain-hawkes");
  s.h.J = 0.0;
  auto x = XPath::constant(2.0, 0.01, 0.0);
  auto sum = simulate_coupled_pair(s, 50, 2.0, x, 3, 4);
  EXPECT_EQ(sum.sup_distance, 0.0);
}

TEST(Coupling, DeterministicAcrossCalls) {
  auto s = preset("adaptation-1d");
  auto x = XPath::constant(1.0, 0.01, -0.3);
  auto a = simulate_coupled_pair(s, 60, 1.0, x, 9, 3);
  auto b = simulate_coupled_pair(s, 60, 1.0, x, 9, 3);
  EXPECT_EQ(a.per_replica, b.per_replica);
  EXPECT_GT(a.sup_distance, 0.0);
}
