#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace crossview {

// Test hook for the CLI's fault-demonstration path: a nonzero offset is added
// to the projected satellite coordinate inside the round-trip suite, which
// must then fail and name the broken oracle.
struct FaultInjection {
    double projection_offset_px = 0.0;
};

// "none" -> no fault; "projection" -> 0.75 px projection offset. Throws on
// anything else.
FaultInjection fault_from_name(const std::string& name);

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;   // measured numbers backing the verdict
    double seconds = 0.0;
};

// Runs the twelve verification suites (geometry round-trip, cross-render,
// diffusion algebra, closed-form DDIM, guidance additivity, pose scoring,
// IHA recovery, gradient oracles, text-guidance efficacy, aggregation
// reductions, metric references, end-to-end determinism). When `log` is
// non-null each suite prints its line as it completes.
std::vector<CheckResult> run_selfcheck(const FaultInjection& fault = {},
                                       std::ostream* log = nullptr);

// Prints the summary table plus a soft single-core runtime warning; returns
// exit_ok when every suite passed, exit_numeric otherwise.
int selfcheck_exit(const std::vector<CheckResult>& results, std::ostream& out);

}  // namespace crossview
