#include "minidroid/filters.hpp"

#include <array>
#include <cmath>
#include <map>

#include "minidroid/error.hpp"

namespace minidroid::memory {

namespace {

constexpr std::array<std::string_view, kNodeTypeCount> kNodeTypeNames = {
    "REFERENCE_OBJECT", "SELF", "PLAYER", "TRIPLE", "CHAT", "TASK", "PROGRAM", "SET", "ARCHIVE"};

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
  throw ParseError(path + ": " + msg, 0);
}

double finite_number(const nlohmann::json& j, const std::string& path) {
  if (!j.is_number()) fail(path, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) fail(path, "number must be finite");
  return v;
}

void expect_keys(const nlohmann::json& j, const std::string& path, std::initializer_list<std::string_view> keys) {
  if (!j.is_object()) fail(path, "expected an object");
  for (const auto& [k, _] : j.items()) {
    bool known = false;
    for (auto key : keys) known = known || k == key;
    if (!known) fail(path + "." + k, "unexpected key");
  }
  for (auto key : keys) {
    if (!j.contains(std::string(key))) fail(path, "missing key '" + std::string(key) + "'");
  }
}

}  // namespace

std::string_view to_string(NodeType t) { return kNodeTypeNames[static_cast<std::size_t>(t)]; }

std::optional<NodeType> node_type_from_string(std::string_view s) {
  for (std::size_t i = 0; i < kNodeTypeNames.size(); ++i) {
    if (kNodeTypeNames[i] == s) return static_cast<NodeType>(i);
  }
  return std::nullopt;
}

bool is_reserved_filter_key(std::string_view key) {
  return key == "node_type" || key == "within" || key == "selector" || key == "limit";
}

std::vector<std::string> check(const FiltersClause& f, const std::string& path) {
  std::vector<std::string> out;
  if (!f.has_constraint()) out.push_back(path + ": at least one constraint required");
  for (const auto& [pred, value] : f.tags) {
    if (pred.empty()) out.push_back(path + ": empty predicate");
    if (is_reserved_filter_key(pred)) out.push_back(path + "." + pred + ": reserved key used as predicate");
    if (value.empty()) out.push_back(path + "." + pred + ": empty value");
  }
  if (f.within) {
    const auto& w = *f.within;
    if (!std::isfinite(w.center.x) || !std::isfinite(w.center.y)) out.push_back(path + ".within: non-finite center");
    if (!(w.distance >= 0.0) || !std::isfinite(w.distance)) out.push_back(path + ".within.distance: must be >= 0");
  }
  if (f.selector && (!std::isfinite(f.selector->point.x) || !std::isfinite(f.selector->point.y))) {
    out.push_back(path + ".selector: non-finite point");
  }
  if (f.limit && *f.limit < 1) out.push_back(path + ".limit: must be >= 1");
  return out;
}

nlohmann::json to_json(const FiltersClause& f) {
  nlohmann::json j = nlohmann::json::object();
  std::map<std::string, std::vector<std::string>> grouped;
  for (const auto& [pred, value] : f.tags) grouped[pred].push_back(value);
  for (const auto& [pred, values] : grouped) {
    if (values.size() == 1) {
      j[pred] = values.front();
    } else {
      j[pred] = values;
    }
  }
  if (f.node_type) j["node_type"] = std::string(to_string(*f.node_type));
  if (f.within) j["within"] = {{"x", f.within->center.x}, {"y", f.within->center.y}, {"distance", f.within->distance}};
  if (f.selector) {
    j["selector"] = {{"kind", f.selector->kind == SelectorKind::argmin ? "ARGMIN" : "ARGMAX"},
                     {"x", f.selector->point.x},
                     {"y", f.selector->point.y}};
  }
  if (f.limit) j["limit"] = *f.limit;
  return j;
}

FiltersClause filters_from_json(const nlohmann::json& j, const std::string& path) {
  if (!j.is_object()) fail(path, "expected an object");
  FiltersClause f;
  for (const auto& [key, value] : j.items()) {
    const std::string sub = path + "." + key;
    if (key == "node_type") {
      if (!value.is_string()) fail(sub, "expected a string");
      auto t = node_type_from_string(value.get<std::string>());
      if (!t) fail(sub, "unknown node type '" + value.get<std::string>() + "'");
      f.node_type = t;
    } else if (key == "within") {
      expect_keys(value, sub, {"x", "y", "distance"});
      f.within = WithinClause{{finite_number(value["x"], sub + ".x"), finite_number(value["y"], sub + ".y")},
                              finite_number(value["distance"], sub + ".distance")};
    } else if (key == "selector") {
      expect_keys(value, sub, {"kind", "x", "y"});
      const auto& kind = value["kind"];
      DistanceSelector s;
      if (kind == "ARGMIN") {
        s.kind = SelectorKind::argmin;
      } else if (kind == "ARGMAX") {
        s.kind = SelectorKind::argmax;
      } else {
        fail(sub + ".kind", "expected ARGMIN or ARGMAX");
      }
      s.point = {finite_number(value["x"], sub + ".x"), finite_number(value["y"], sub + ".y")};
      f.selector = s;
    } else if (key == "limit") {
      if (!value.is_number_integer()) fail(sub, "expected an integer");
      f.limit = value.get<std::int64_t>();
    } else if (value.is_string()) {
      f.tags.emplace(key, value.get<std::string>());
    } else if (value.is_array() && !value.empty()) {
      for (const auto& v : value) {
        if (!v.is_string()) fail(sub, "expected an array of strings");
        f.tags.emplace(key, v.get<std::string>());
      }
    } else {
      fail(sub, "expected a string or non-empty array of strings");
    }
  }
  return f;
}

FiltersClause parse_filters(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("filters: ") + e.what(), e.byte);
  }
  return filters_from_json(j);
}

std::string describe_phrase(const FiltersClause& f) {
  std::string out;
  auto add = [&](std::string_view predicate) {
    for (const auto& [pred, value] : f.tags) {
      if (pred != predicate) continue;
      if (!out.empty()) out += ' ';
      out += value;
    }
  };
  add("has_colour");
  add("has_tag");
  return out.empty() ? "that" : out;
}

}  // namespace minidroid::memory
