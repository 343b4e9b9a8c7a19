#pragma once

#include <functional>
#include <iostream>
#include <mutex>
#include <stdexcept>
#include <string>
#include <utility>

namespace gastkit {

// Violated precondition or malformed call. The CLI maps this to exit code 2.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Shape/axis mismatch; the message names the offending axis.
class DimensionError : public ContractError {
 public:
  using ContractError::ContractError;
};

// Missing, unreadable, or inconsistent data on disk. Exit code 3.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class PriorUnavailableError : public DataError {
 public:
  using DataError::DataError;
};

// NaN/Inf encountered in a gradient or loss.
class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using WarningSink = std::function<void(const std::string&)>;

namespace detail {
inline std::mutex& warning_mutex() {
  static std::mutex m;
  return m;
}
inline WarningSink& warning_sink() {
  static WarningSink sink = [](const std::string& msg) { std::cerr << "warning: " << msg << '\n'; };
  return sink;
}
}  // namespace detail

inline void warn(const std::string& msg) {
  std::lock_guard<std::mutex> lock(detail::warning_mutex());
  detail::warning_sink()(msg);
}

// Replaces the warning sink for the lifetime of the guard (used by tests to capture warnings).
class ScopedWarningSink {
 public:
  explicit ScopedWarningSink(WarningSink sink) {
    std::lock_guard<std::mutex> lock(detail::warning_mutex());
    previous_ = std::exchange(detail::warning_sink(), std::move(sink));
  }
  ~ScopedWarningSink() {
    std::lock_guard<std::mutex> lock(detail::warning_mutex());
    detail::warning_sink() = std::move(previous_);
  }
  ScopedWarningSink(const ScopedWarningSink&) = delete;
  ScopedWarningSink& operator=(const ScopedWarningSink&) = delete;

 private:
  WarningSink previous_;
};

}  // namespace gastkit
