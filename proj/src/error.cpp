#include "minidroid/error.hpp"

namespace minidroid {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::not_found: return "not_found";
    case ErrorCode::invalid_target: return "invalid_target";
    case ErrorCode::validation: return "validation";
    case ErrorCode::parse: return "parse";
    case ErrorCode::no_such_object: return "no_such_object";
    case ErrorCode::io: return "io";
  }
  return "unknown";
}

}  // namespace minidroid
