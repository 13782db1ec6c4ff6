// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace seqpress::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumerical = 3;

/// Entry point shared by the executable and the tests. `args` excludes the
/// program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace seqpress::cli
