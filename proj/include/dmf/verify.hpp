#pragma once

// Self-contained property suite: every closed-form routine against its
// oracle, on randomized inputs.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace dmf {

enum class SizeClass { Small, Full };

SizeClass parse_size_class(std::string_view name);

struct VerifyOptions {
    std::uint64_t seed = 0;
    SizeClass size = SizeClass::Small;
    /// Negative control: negates the analytic gradient of the first layer
    /// before it is compared with finite differences.
    bool flip_gradient_sign = false;
};

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;
};

std::vector<CheckResult> run_verification(const VerifyOptions& options);

}  // namespace dmf
