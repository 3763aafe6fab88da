#pragma once

#include <ostream>
#include <vector>

#include "postgl/checks.hpp"

namespace postgl {

struct SelftestOptions {
    /// Test mode: flip the sign of one penalty weight before validation.
    bool inject_negative_lambda = false;
    std::uint64_t seed = 20240607;
};

/// Fast invariant battery. Prints one checklist line per check and returns
/// every result; the run passed iff all of them pass.
std::vector<CheckResult> run_selftest(const SelftestOptions& opts, std::ostream& out);

}  // namespace postgl
