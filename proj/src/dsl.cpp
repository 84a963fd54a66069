#include "minidroid/dsl.hpp"

#include <array>
#include <cmath>

#include "minidroid/error.hpp"
#include "minidroid/json_text.hpp"

namespace minidroid::dsl {

using nlohmann::json;

namespace {

template <typename E, std::size_t N>
std::optional<E> lookup(const std::array<std::string_view, N>& names, std::string_view s) {
  for (std::size_t i = 0; i < N; ++i) {
    if (names[i] == s) return static_cast<E>(i);
  }
  return std::nullopt;
}

constexpr std::array<std::string_view, 4> kDialogueTypes = {"HUMAN_GIVE_COMMAND", "GET_MEMORY", "PUT_MEMORY", "NOOP"};
constexpr std::array<std::string_view, 6> kActionTypes = {"MOVE", "TURN", "POINT", "GRASP", "STOP", "RESUME"};
constexpr std::array<std::string_view, 4> kDirections = {"LEFT", "RIGHT", "FORWARD", "BACK"};
constexpr std::array<std::string_view, 2> kConditionKinds = {"REPEAT_N", "UNTIL_BLOCKED"};

[[noreturn]] void fail(const std::string& path, const std::string& msg) { throw ParseError(path + ": " + msg, 0); }

void only_keys(const json& j, const std::string& path, std::initializer_list<std::string_view> keys) {
  if (!j.is_object()) fail(path, "expected an object");
  for (const auto& [k, _] : j.items()) {
    bool ok = false;
    for (auto key : keys) ok = ok || k == key;
    if (!ok) fail(path + "." + k, "unexpected key");
  }
}

const json& required(const json& j, const std::string& path, const char* key) {
  if (!j.contains(key)) fail(path, std::string("missing key '") + key + "'");
  return j.at(key);
}

double number(const json& j, const std::string& path) {
  if (!j.is_number()) fail(path, "expected a number");
  return j.get<double>();
}

std::string enum_text(const json& j, const std::string& path) {
  if (!j.is_string()) fail(path, "expected an enum string");
  return j.get<std::string>();
}

// ---- serialization -------------------------------------------------------

json span_json(const Span& s) { return {{"start", s.start}, {"end", s.end}}; }

json location_json(const LocationSpec& l) {
  json j = json::object();
  if (l.reference_object) j["reference_object"] = to_json(*l.reference_object);
  if (l.absolute) j["absolute"] = {{"x", l.absolute->x}, {"y", l.absolute->y}};
  if (l.relative) {
    j["relative"] = {{"direction", std::string(to_string(l.relative->direction))}, {"distance", l.relative->distance}};
  }
  return j;
}

json action_json(const ActionSpec& a) {
  json j = json::object();
  j["action_type"] = std::string(to_string(a.action_type));
  if (a.location) j["location"] = location_json(*a.location);
  if (a.facing) {
    json f = json::object();
    if (a.facing->relative_yaw) f["relative_yaw"] = *a.facing->relative_yaw;
    if (a.facing->location) f["location"] = location_json(*a.facing->location);
    j["facing"] = f;
  }
  if (a.reference_object) j["reference_object"] = to_json(*a.reference_object);
  if (a.repeat) {
    json r = {{"kind", std::string(to_string(a.repeat->kind))}};
    if (a.repeat->n) r["n"] = *a.repeat->n;
    j["repeat"] = r;
  }
  return j;
}

// ---- parsing -------------------------------------------------------------

LocationSpec location_from_json(const json& j, const std::string& path) {
  only_keys(j, path, {"reference_object", "absolute", "relative"});
  LocationSpec l;
  if (j.contains("reference_object")) {
    l.reference_object = reference_object_from_json(j["reference_object"], path + ".reference_object");
  }
  if (j.contains("absolute")) {
    const std::string p = path + ".absolute";
    only_keys(j["absolute"], p, {"x", "y"});
    l.absolute = Vec2{number(required(j["absolute"], p, "x"), p + ".x"), number(required(j["absolute"], p, "y"), p + ".y")};
  }
  if (j.contains("relative")) {
    const std::string p = path + ".relative";
    only_keys(j["relative"], p, {"direction", "distance"});
    const auto d = enum_text(required(j["relative"], p, "direction"), p + ".direction");
    auto dir = direction_from_string(d);
    if (!dir) fail(p + ".direction", "unknown direction '" + d + "'");
    l.relative = RelativeLocation{*dir, number(required(j["relative"], p, "distance"), p + ".distance")};
  }
  return l;
}

ActionSpec action_from_json(const json& j, const std::string& path) {
  only_keys(j, path, {"action_type", "location", "facing", "reference_object", "repeat"});
  ActionSpec a;
  const auto t = enum_text(required(j, path, "action_type"), path + ".action_type");
  auto at = action_type_from_string(t);
  if (!at) fail(path + ".action_type", "unknown action_type '" + t + "'");
  a.action_type = *at;
  if (j.contains("location")) a.location = location_from_json(j["location"], path + ".location");
  if (j.contains("facing")) {
    const std::string p = path + ".facing";
    only_keys(j["facing"], p, {"relative_yaw", "location"});
    FacingSpec f;
    if (j["facing"].contains("relative_yaw")) f.relative_yaw = number(j["facing"]["relative_yaw"], p + ".relative_yaw");
    if (j["facing"].contains("location")) f.location = location_from_json(j["facing"]["location"], p + ".location");
    a.facing = f;
  }
  if (j.contains("reference_object")) {
    a.reference_object = reference_object_from_json(j["reference_object"], path + ".reference_object");
  }
  if (j.contains("repeat")) {
    const std::string p = path + ".repeat";
    only_keys(j["repeat"], p, {"kind", "n"});
    const auto k = enum_text(required(j["repeat"], p, "kind"), p + ".kind");
    auto kind = condition_kind_from_string(k);
    if (!kind) fail(p + ".kind", "unknown condition kind '" + k + "'");
    ConditionSpec c{*kind, std::nullopt};
    if (j["repeat"].contains("n")) {
      if (!j["repeat"]["n"].is_number_integer()) fail(p + ".n", "expected an integer");
      c.n = j["repeat"]["n"].get<std::int64_t>();
    }
    a.repeat = c;
  }
  return a;
}

// ---- validation ----------------------------------------------------------

struct Checker {
  std::optional<int> token_count;
  std::vector<Violation> out;

  void add(std::string path, std::string rule) { out.push_back({std::move(path), std::move(rule)}); }

  void filters(const FiltersClause& f, const std::string& path) {
    for (const auto& v : memory::check(f, path)) {
      const auto colon = v.find(": ");
      add(v.substr(0, colon), v.substr(colon + 2));
    }
  }

  void reference_object(const ReferenceObjectSpec& r, const std::string& path) {
    filters(r.filters, path + ".filters");
    if (r.text_span) {
      const auto& s = *r.text_span;
      if (s.start < 0 || s.start >= s.end) add(path + ".text_span", "requires 0 <= start < end");
      if (token_count && s.end > *token_count) add(path + ".text_span", "end exceeds token count");
    }
  }

  void location(const LocationSpec& l, const std::string& path) {
    const int set = int(l.reference_object.has_value()) + int(l.absolute.has_value()) + int(l.relative.has_value());
    if (set != 1) add(path, "exactly one of reference_object, absolute, relative");
    if (l.reference_object) reference_object(*l.reference_object, path + ".reference_object");
    if (l.absolute && (!std::isfinite(l.absolute->x) || !std::isfinite(l.absolute->y))) {
      add(path + ".absolute", "coordinates must be finite");
    }
    if (l.relative && !(std::isfinite(l.relative->distance) && l.relative->distance > 0.0)) {
      add(path + ".relative.distance", "must be a positive finite number");
    }
  }

  void action(const ActionSpec& a, const std::string& path) {
    auto forbid = [&](bool present, const char* field) {
      if (present) add(path + "." + field, std::string("not allowed for ") + std::string(to_string(a.action_type)));
    };
    auto need = [&](bool present, const char* field) {
      if (!present) add(path + "." + field, std::string("required for ") + std::string(to_string(a.action_type)));
    };
    switch (a.action_type) {
      case ActionType::Move:
        need(a.location.has_value(), "location");
        forbid(a.facing.has_value(), "facing");
        forbid(a.reference_object.has_value(), "reference_object");
        break;
      case ActionType::Turn:
        need(a.facing.has_value(), "facing");
        forbid(a.location.has_value(), "location");
        forbid(a.reference_object.has_value(), "reference_object");
        break;
      case ActionType::Point:
        if (a.location.has_value() == a.reference_object.has_value()) {
          add(path, "POINT needs exactly one of location, reference_object");
        }
        forbid(a.facing.has_value(), "facing");
        break;
      case ActionType::Grasp:
        need(a.reference_object.has_value(), "reference_object");
        forbid(a.location.has_value(), "location");
        forbid(a.facing.has_value(), "facing");
        break;
      case ActionType::Stop:
      case ActionType::Resume:
        forbid(a.location.has_value(), "location");
        forbid(a.facing.has_value(), "facing");
        forbid(a.reference_object.has_value(), "reference_object");
        forbid(a.repeat.has_value(), "repeat");
        break;
    }
    if (a.location) location(*a.location, path + ".location");
    if (a.reference_object) reference_object(*a.reference_object, path + ".reference_object");
    if (a.facing) {
      const auto& f = *a.facing;
      if (f.relative_yaw.has_value() == f.location.has_value()) {
        add(path + ".facing", "exactly one of relative_yaw, location");
      }
      if (f.relative_yaw && !std::isfinite(*f.relative_yaw)) add(path + ".facing.relative_yaw", "must be finite");
      if (f.location) location(*f.location, path + ".facing.location");
    }
    if (a.repeat) {
      const auto& r = *a.repeat;
      if (r.kind == ConditionKind::RepeatN) {
        if (!r.n || *r.n < 1) add(path + ".repeat.n", "REPEAT_N needs n >= 1");
      } else if (r.n) {
        add(path + ".repeat.n", "only REPEAT_N takes n");
      }
    }
  }
};

}  // namespace

std::string_view to_string(DialogueType v) { return kDialogueTypes[static_cast<std::size_t>(v)]; }
std::string_view to_string(ActionType v) { return kActionTypes[static_cast<std::size_t>(v)]; }
std::string_view to_string(Direction v) { return kDirections[static_cast<std::size_t>(v)]; }
std::string_view to_string(ConditionKind v) { return kConditionKinds[static_cast<std::size_t>(v)]; }
std::optional<DialogueType> dialogue_type_from_string(std::string_view s) { return lookup<DialogueType>(kDialogueTypes, s); }
std::optional<ActionType> action_type_from_string(std::string_view s) { return lookup<ActionType>(kActionTypes, s); }
std::optional<Direction> direction_from_string(std::string_view s) { return lookup<Direction>(kDirections, s); }
std::optional<ConditionKind> condition_kind_from_string(std::string_view s) {
  return lookup<ConditionKind>(kConditionKinds, s);
}

std::vector<Violation> validate(const LogicalForm& lf, std::optional<int> token_count) {
  Checker c{token_count, {}};
  auto forbid = [&](bool present, const char* field) {
    if (present) c.add(field, std::string("not allowed for ") + std::string(to_string(lf.dialogue_type)));
  };
  switch (lf.dialogue_type) {
    case DialogueType::HumanGiveCommand:
      if (!lf.action_sequence || lf.action_sequence->empty()) c.add("action_sequence", "must be a non-empty list");
      forbid(lf.filters.has_value(), "filters");
      forbid(lf.upsert.has_value(), "upsert");
      break;
    case DialogueType::GetMemory:
      if (!lf.filters) c.add("filters", "required for GET_MEMORY");
      forbid(lf.action_sequence.has_value(), "action_sequence");
      forbid(lf.upsert.has_value(), "upsert");
      break;
    case DialogueType::PutMemory:
      if (!lf.upsert || lf.upsert->tags.empty()) c.add("upsert", "PUT_MEMORY needs at least one tag");
      forbid(lf.action_sequence.has_value(), "action_sequence");
      forbid(lf.filters.has_value(), "filters");
      break;
    case DialogueType::Noop:
      forbid(lf.action_sequence.has_value(), "action_sequence");
      forbid(lf.filters.has_value(), "filters");
      forbid(lf.upsert.has_value(), "upsert");
      break;
  }
  if (lf.action_sequence) {
    for (std::size_t i = 0; i < lf.action_sequence->size(); ++i) {
      c.action((*lf.action_sequence)[i], "action_sequence[" + std::to_string(i) + "]");
    }
  }
  if (lf.filters) c.filters(*lf.filters, "filters");
  if (lf.upsert) {
    for (const auto& [pred, value] : lf.upsert->tags) {
      if (pred.empty() || memory::is_reserved_filter_key(pred)) c.add("upsert", "invalid predicate '" + pred + "'");
      if (value.empty()) c.add("upsert." + pred, "empty value");
    }
  }
  return c.out;
}

json to_json(const ReferenceObjectSpec& r) {
  json j = {{"filters", memory::to_json(r.filters)}};
  if (r.text_span) j["text_span"] = span_json(*r.text_span);
  return j;
}

ReferenceObjectSpec reference_object_from_json(const json& j, const std::string& path) {
  only_keys(j, path, {"filters", "text_span"});
  ReferenceObjectSpec r;
  r.filters = memory::filters_from_json(required(j, path, "filters"), path + ".filters");
  if (j.contains("text_span")) {
    const std::string p = path + ".text_span";
    only_keys(j["text_span"], p, {"start", "end"});
    const auto& s = j["text_span"];
    if (!required(s, p, "start").is_number_integer() || !required(s, p, "end").is_number_integer()) {
      fail(p, "start and end must be integers");
    }
    r.text_span = Span{s["start"].get<int>(), s["end"].get<int>()};
  }
  return r;
}

json to_json(const LogicalForm& lf) {
  json j = {{"dialogue_type", std::string(to_string(lf.dialogue_type))}};
  if (lf.action_sequence) {
    j["action_sequence"] = json::array();
    for (const auto& a : *lf.action_sequence) j["action_sequence"].push_back(action_json(a));
  }
  if (lf.filters) j["filters"] = memory::to_json(*lf.filters);
  if (lf.upsert) {
    FiltersClause tags;
    tags.tags = lf.upsert->tags;
    j["upsert"] = memory::to_json(tags);
  }
  return j;
}

LogicalForm from_json(const json& j) {
  only_keys(j, "lf", {"dialogue_type", "action_sequence", "filters", "upsert"});
  LogicalForm lf;
  const auto t = enum_text(required(j, "lf", "dialogue_type"), "dialogue_type");
  auto dt = dialogue_type_from_string(t);
  if (!dt) fail("dialogue_type", "unknown dialogue_type '" + t + "'");
  lf.dialogue_type = *dt;
  if (j.contains("action_sequence")) {
    const auto& seq = j["action_sequence"];
    if (!seq.is_array()) fail("action_sequence", "expected a list");
    lf.action_sequence.emplace();
    for (std::size_t i = 0; i < seq.size(); ++i) {
      lf.action_sequence->push_back(action_from_json(seq[i], "action_sequence[" + std::to_string(i) + "]"));
    }
  }
  if (j.contains("filters")) lf.filters = memory::filters_from_json(j["filters"], "filters");
  if (j.contains("upsert")) {
    const auto& u = j["upsert"];
    if (!u.is_object()) fail("upsert", "expected an object");
    for (const auto& [k, _] : u.items()) {
      if (memory::is_reserved_filter_key(k)) fail("upsert." + k, "reserved key");
    }
    lf.upsert = UpsertSpec{memory::filters_from_json(u, "upsert").tags};
  }
  return lf;
}

std::string to_canonical(const LogicalForm& lf) { return json_text(to_json(lf)); }

LogicalForm from_canonical(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("logical form: ") + e.what(), e.byte);
  }
  return from_json(j);
}

}  // namespace minidroid::dsl
