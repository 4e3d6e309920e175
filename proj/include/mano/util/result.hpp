#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <variant>

namespace mano {

/// Base exception for contract violations (bad config, transitions after done, ...).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Minimal value-or-error carrier; `E` must not be convertible from `T`.
template <typename T, typename E>
class Result {
 public:
  Result(T value) : storage_(std::in_place_index<0>, std::move(value)) {}
  Result(E error) : storage_(std::in_place_index<1>, std::move(error)) {}

  bool has_value() const noexcept { return storage_.index() == 0; }
  explicit operator bool() const noexcept { return has_value(); }

  const T& value() const& {
    if (!has_value()) throw Error("Result::value() called on an error");
    return std::get<0>(storage_);
  }
  T&& value() && {
    if (!has_value()) throw Error("Result::value() called on an error");
    return std::get<0>(std::move(storage_));
  }
  const E& error() const& {
    if (has_value()) throw Error("Result::error() called on a value");
    return std::get<1>(storage_);
  }

  const T& operator*() const& { return value(); }
  const T* operator->() const { return &value(); }

 private:
  std::variant<T, E> storage_;
};

}  // namespace mano
