// Randomized property suites over the runtime's structural laws. The laws
// themselves live in property_laws.hpp so other binaries can re-run them;
// each suite here runs well over a thousand generated cases and a failure
// carries the first violated case for replay from the fixed master seed.
#include "property_laws.hpp"

#include <gtest/gtest.h>

namespace {

constexpr int kCases = 1100;

void expect_clean(const canopy::laws::LawResult& r) {
    EXPECT_GE(r.cases, 1000);
    EXPECT_EQ(r.violations, 0) << r.first;
}

}  // namespace

TEST(Properties, GatePlacementIsLevelMinimal) {
    expect_clean(canopy::laws::gate_level_minimality(kCases));
}

TEST(Properties, BroadcastVersionsAreMonotonePerNode) {
    expect_clean(canopy::laws::broadcast_monotone(kCases));
}

TEST(Properties, LoggerStoresStayFifoUnderFailuresAndHeals) {
    expect_clean(canopy::laws::logger_fifo_under_churn(kCases));
}

TEST(Properties, ExplicitCallsNeverGoUpOrSideways) {
    expect_clean(canopy::laws::upward_call_rejection(kCases));
}

TEST(Properties, FlowsRequireDistinctAppsSharingTheLevel) {
    expect_clean(canopy::laws::flow_restrictions(kCases));
}
