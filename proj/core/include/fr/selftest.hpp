#pragma once

#include <string>
#include <vector>

namespace fr {

struct SelftestGroup {
    std::string name;
    bool passed;
    std::string detail;  // set on failure
};

struct SelftestOptions {
    uint64_t seed = 7;
    // test fixture: evaluates the warp-identity group against a deliberately
    // sign-flipped field so the group must fail
    bool corrupt_warp = false;
};

// Warp identities, gradient checks, loss oracles and metric oracles.
std::vector<SelftestGroup> run_selftest(const SelftestOptions& opt);

}  // namespace fr
