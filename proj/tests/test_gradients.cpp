#include <gtest/gtest.h>

#include "support/model_checks.hpp"
#include "support/primitive_checks.hpp"

namespace {

using namespace egowm;

class PrimitiveGradient : public ::testing::TestWithParam<size_t> {};

TEST_P(PrimitiveGradient, MatchesCentralDifferences) {
  const auto checks = test_support::primitive_checks();
  const auto& check = checks.at(GetParam());
  Rng rng(1000 + GetParam());
  for (int instance = 0; instance < 20; ++instance) {
    auto r = check.run(rng);
    ASSERT_LE(r.max_rel_error, 1e-4) << check.name << " instance " << instance << ": " << r.worst;
  }
}

INSTANTIATE_TEST_SUITE_P(AllPrimitives, PrimitiveGradient,
                         ::testing::Range<size_t>(0, test_support::primitive_checks().size()),
                         [](const ::testing::TestParamInfo<size_t>& info) {
                           return test_support::primitive_checks().at(info.param).name;
                         });

TEST(EndToEndLoss, MatchesCentralDifferences) {
  Rng rng(77);
  for (int instance = 0; instance < 20; ++instance) {
    auto r = test_support::end_to_end_loss_check(rng);
    ASSERT_LE(r.max_rel_error, 1e-4) << "instance " << instance << ": " << r.worst;
  }
}

}  // namespace
