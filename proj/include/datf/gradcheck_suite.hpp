#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "datf/grad_check.hpp"

namespace datf {

// One named finite-difference verification; the standard suite covers every
// differentiable operation in the project exactly once plus the full model.
struct SuiteEntry {
    std::string name;
    std::function<GradCheckResult()> run;
};

struct OpCheck {
    std::string name;
    GradCheckResult result;
    double tolerance = 1e-4;
    bool passed() const { return result.pass(tolerance); }
};

std::vector<SuiteEntry> standard_gradcheck_entries();
std::vector<OpCheck> run_gradcheck_entries(const std::vector<SuiteEntry>& entries);

// Prints one line per op (worst relative error, counts, PASS/FAIL) and a
// summary; returns 0 iff everything passed.
int print_gradcheck_report(const std::vector<OpCheck>& checks, std::ostream& out);

}  // namespace datf
