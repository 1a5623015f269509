#pragma once

#include <string>
#include <vector>

namespace recast::verify {

struct VerifyOptions {
    bool continue_on_failure = false;
    /// Test hook: added to dro_fuse inside the oracle comparison so the
    /// negative control can prove the suite actually bites.
    double dro_perturb = 0.0;
};

struct SuiteResult {
    std::string name;
    bool passed = false;
    std::string detail;
};

/// Runs every module's invariant checks. Order is cheap-to-expensive; with
/// continue_on_failure=false the run stops at the first failing suite.
std::vector<SuiteResult> run_suites(const VerifyOptions& options);

bool all_passed(const std::vector<SuiteResult>& results);

}  // namespace recast::verify
