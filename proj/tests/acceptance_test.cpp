#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

// Acceptance gate: runs the full verification suite and prints one
// ACCEPTANCE line per criterion, in the fixed criterion order. Each suite
// measures its own tolerances; this binary only reports and asserts.

#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "crossview/commands.hpp"
#include "crossview/selfcheck.hpp"

using namespace crossview;

namespace {
// Criterion order is part of the contract: position i in run_selfcheck's
// result maps to acceptance criterion i+1.
const char* kExpectedNames[12] = {
    "projection round-trip", "cross-render consistency", "diffusion inversion",
    "ddim closed form",      "guidance additivity",      "pose score minimality",
    "iha pose recovery",     "gradient oracles",         "text guidance efficacy",
    "aggregation reductions", "metric references",       "sampling determinism",
};
}  // namespace

TEST_CASE("all acceptance criteria hold") {
    const std::vector<CheckResult> results = run_selfcheck();
    REQUIRE(results.size() == 12);
    for (std::size_t i = 0; i < results.size(); ++i) {
        CHECK(results[i].name == kExpectedNames[i]);
        std::printf("ACCEPTANCE %zu: %s — %s: %s\n", i + 1,
                    results[i].pass ? "PASS" : "FAIL", results[i].name.c_str(),
                    results[i].detail.c_str());
        std::fflush(stdout);
        CHECK_MESSAGE(results[i].pass, results[i].name, ": ", results[i].detail);
    }
}

TEST_CASE("fault injection breaks exactly the projection criterion") {
    CHECK(fault_from_name("").projection_offset_px == 0.0);
    CHECK(fault_from_name("none").projection_offset_px == 0.0);
    CHECK(fault_from_name("projection").projection_offset_px == doctest::Approx(0.75));
    CHECK_THROWS_AS((void)fault_from_name("gravity"), std::invalid_argument);

    const std::vector<CheckResult> faulted = run_selfcheck(fault_from_name("projection"));
    REQUIRE(faulted.size() == 12);
    CHECK_FALSE(faulted[0].pass);
    for (std::size_t i = 1; i < faulted.size(); ++i)
        CHECK_MESSAGE(faulted[i].pass, faulted[i].name, " should not be affected");

    std::ostringstream os;
    CHECK(selfcheck_exit(faulted, os) == exit_numeric);
    CHECK(os.str().find("projection round-trip") != std::string::npos);
}
