#pragma once

#include <string>
#include <vector>

namespace fscs {

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;  // measured error or failure reason
};

// Runs the operator property suites: finite-difference gradchecks for every
// autograd op and module composition, adjoint identities for the linear ops,
// the exact identities (shuffle round trip, zero-init model, FSIM fixed
// point), DCT/prox properties and a determinism check. 64-bit throughout.
//
// fault_injection is a test hook: "conv2d-backward" corrupts the analytic
// conv2d gradient inside this suite so the negative path is testable.
std::vector<CheckResult> run_verification(const std::string& fault_injection = "");

}  // namespace fscs
