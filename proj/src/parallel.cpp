// SPDX-License-Identifier: Apache-2.0
#include "seqpress/parallel.hpp"

#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace seqpress {

std::size_t configured_threads() {
  const char* env = std::getenv("SEQPRESS_THREADS");
  if (env == nullptr || *env == '\0') return 0;
  try {
    long v = std::stol(env);
    return v > 0 ? static_cast<std::size_t>(v) : 0;
  } catch (const std::exception&) {
    return 0;
  }
}

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& body) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  std::size_t workers = std::min(threads, n);
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace seqpress
