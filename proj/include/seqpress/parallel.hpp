// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>

namespace seqpress {

/// Worker count from SEQPRESS_THREADS; 0 (the default) means run inline.
std::size_t configured_threads();

/// Runs body(i) for i in [0, n). Results must be written to per-index slots;
/// callers reduce them in index order so output does not depend on threads.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& body);

}  // namespace seqpress
