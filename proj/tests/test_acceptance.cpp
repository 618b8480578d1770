#include <gtest/gtest.h>

#include <iostream>

#include "gaplab/acceptance.hpp"

using namespace gaplab;

namespace {

const AcceptanceOptions kOptions{};

CriterionResult run_by_id(const std::string& id) {
  for (const auto& s : criteria())
    if (s.id == id) return run_criterion(s, kOptions);
  throw std::invalid_argument("no criterion " + id);
}

void report(const CriterionResult& r) {
  std::cout << format_line(r) << std::endl;
  for (const auto& f : r.failures) ADD_FAILURE() << "criterion " << r.id << ": " << f;
  EXPECT_TRUE(r.passed);
}

class Criterion : public ::testing::TestWithParam<std::string> {};

}  // namespace

TEST_P(Criterion, Passes) { report(run_by_id(GetParam())); }

INSTANTIATE_TEST_SUITE_P(Acceptance, Criterion, ::testing::Values("1", "2", "3", "4", "5", "6", "7", "8", "9", "10", "11"),
                         [](const auto& info) { return "C" + info.param; });

TEST(Acceptance, C12DeterminismOnRepeat) {
  std::vector<CriterionResult> first;
  for (const char* id : {"5", "8", "9"}) first.push_back(run_by_id(id));
  report(criterion_determinism(first, kOptions));
}

TEST(Acceptance, FaultInjectionNamesMeasurePreservation) {
  const auto r = run_criterion({"F", "fault injection", 0, fault_injection}, kOptions);
  report(r);
  EXPECT_NE(r.summary.find("measure preservation"), std::string::npos);
}

TEST(Acceptance, ReportCarriesNoTimings) {
  AcceptanceRun run;
  run.results.push_back(run_by_id("3"));
  const auto text = acceptance_report(run, kOptions).dump();
  EXPECT_EQ(text.find("seconds"), std::string::npos);
  EXPECT_NE(text.find("\"provenance\":\"oracle\""), std::string::npos);
}
