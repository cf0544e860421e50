#pragma once

#include <chrono>
#include <functional>
#include <string>
#include <thread>
#include <utility>

#include "vfr/error.hpp"

namespace vfr {

/// Retryable failure: connection problems and 5xx responses.
struct TransientFailure {
  std::string message;
};

struct RetryPolicy {
  int max_retries = 3;
  std::chrono::milliseconds base_delay{500};
  std::function<void(std::chrono::milliseconds)> sleep = [](std::chrono::milliseconds d) {
    std::this_thread::sleep_for(d);
  };
};

/// Calls `attempt` until it returns or throws something other than
/// TransientFailure. After max_retries retries the last transient failure is
/// raised as TransportError. Backoff before retry i (0-based) is
/// base_delay * 2^i.
template <typename Fn>
auto with_retry(const RetryPolicy& policy, Fn&& attempt) -> decltype(attempt()) {
  for (int i = 0;; ++i) {
    try {
      return attempt();
    } catch (const TransientFailure& failure) {
      if (i >= policy.max_retries) {
        throw Error(ErrorCode::TransportError,
                    failure.message + " (after " + std::to_string(i + 1) + " attempts)");
      }
      if (policy.sleep) policy.sleep(policy.base_delay * (1 << i));
    }
  }
}

}  // namespace vfr
