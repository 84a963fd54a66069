#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace minidroid {

enum class ErrorCode {
  not_found,
  invalid_target,
  validation,
  parse,
  no_such_object,
  io,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Parse failure carrying a location: a 1-based line for line-oriented
/// formats, or a byte offset for document text.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t location)
      : Error(ErrorCode::parse, what), location_(location) {}
  std::size_t location() const noexcept { return location_; }

 private:
  std::size_t location_;
};

}  // namespace minidroid
