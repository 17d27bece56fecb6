#pragma once

#include <chrono>
#include <cstddef>
#include <thread>

#include "fedit/core.hpp"

namespace fedit {

struct RetryPolicy {
  std::size_t max_retries = 2;
  std::chrono::milliseconds initial_backoff{200};
  double multiplier = 2.0;
};

/// Transport failures, HTTP 429 and 5xx are worth another attempt.
inline bool is_retryable(const Error& e) noexcept {
  if (e.code() == ErrorCode::BackendUnreachable) return true;
  if (auto* be = dynamic_cast<const BackendError*>(&e)) {
    return be->status() == 429 || be->status() >= 500;
  }
  return false;
}

/// Calls fn() up to 1 + max_retries times with exponential backoff between
/// attempts; rethrows the last error.
template <typename Fn>
auto with_retries(const RetryPolicy& policy, Fn&& fn) -> decltype(fn()) {
  auto delay = policy.initial_backoff;
  for (std::size_t attempt = 0;; ++attempt) {
    try {
      return fn();
    } catch (const Error& e) {
      if (attempt >= policy.max_retries || !is_retryable(e)) throw;
    }
    std::this_thread::sleep_for(delay);
    delay = std::chrono::milliseconds(static_cast<long long>(static_cast<double>(delay.count()) * policy.multiplier));
  }
}

}  // namespace fedit
