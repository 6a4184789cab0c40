#include <gtest/gtest.h>

#include "compare.hpp"
#include "engine.hpp"

namespace lexeval {
namespace {

FixtureConfig mixed(std::uint64_t seed) {
  FixtureConfig c;
  c.seed = seed;
  c.scenes = 2;
  c.mix = {0.4, 0.15, 0.1, 0.1, 0.1, 0.15};
  return c;
}

TEST(Fixtures, EngineMatchesPlantedExpectation) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const Fixture fx = generate_fixture(mixed(seed));
    EXPECT_EQ(testing::compare_reports(testing::engine_segmentation(fx), fx.expected_segmentation), "")
        << "seed " << seed;
    EXPECT_EQ(testing::compare_reports(testing::engine_retrieval(fx), fx.expected_retrieval), "")
        << "seed " << seed;
  }
}

TEST(Fixtures, OracleMatchesPlantedExpectation) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const Fixture fx = generate_fixture(mixed(seed));
    EXPECT_EQ(testing::compare_reports(testing::oracle_segmentation(fx), fx.expected_segmentation), "")
        << "seed " << seed;
    EXPECT_EQ(testing::compare_reports(testing::oracle_retrieval(fx), fx.expected_retrieval), "")
        << "seed " << seed;
  }
}

}  // namespace
}  // namespace lexeval
