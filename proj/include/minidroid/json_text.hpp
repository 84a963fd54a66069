#pragma once

#include <string>

#include "json.hpp"

namespace minidroid {

/// Compact dump with sorted keys; invalid UTF-8 in strings is replaced
/// rather than thrown on.
inline std::string json_text(const nlohmann::json& j) {
  return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

}  // namespace minidroid
