#pragma once

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>

namespace crossseg {

// Thrown for malformed inputs (bad shapes, bad config values, bad flags).
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Thrown for runtime failures (I/O, non-finite values, broken files).
class RuntimeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {
[[noreturn]] inline void throw_validation(const std::string& msg) { throw ValidationError(msg); }
[[noreturn]] inline void throw_runtime(const std::string& msg) { throw RuntimeError(msg); }
}  // namespace detail

#define CROSSSEG_CHECK(cond, msg)                                  \
  do {                                                             \
    if (!(cond)) {                                                 \
      std::ostringstream oss_;                                     \
      oss_ << msg;                                                 \
      ::crossseg::detail::throw_validation(oss_.str());            \
    }                                                              \
  } while (0)

#define CROSSSEG_CHECK_RT(cond, msg)                               \
  do {                                                             \
    if (!(cond)) {                                                 \
      std::ostringstream oss_;                                     \
      oss_ << msg;                                                 \
      ::crossseg::detail::throw_runtime(oss_.str());               \
    }                                                              \
  } while (0)

using index_t = std::int64_t;

// Honors the CROSSSEG_NUM_THREADS environment variable. On this artifact all
// hot loops are single-threaded; the cap is applied to Eigen's internal pool.
int configured_num_threads();

}  // namespace crossseg
