#pragma once

#include <functional>

#include <gtest/gtest.h>

#include "oracles.hpp"

namespace vfr::testing {

/// Runs `fn` and checks it throws vfr::Error with the given code.
inline void expect_code(ErrorCode code, const std::function<void()>& fn) {
  try {
    fn();
    ADD_FAILURE() << "expected " << to_string(code);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), code) << e.what();
  }
}

}  // namespace vfr::testing
