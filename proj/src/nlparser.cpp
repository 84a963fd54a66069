#include "minidroid/nlparser.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <functional>
#include <set>

#include "minidroid/error.hpp"

namespace minidroid::nlp {

using nlohmann::json;

namespace {

const std::set<std::string, std::less<>> kDeterminers = {"the", "a", "an", "this", "that", "these", "those", "my", "your"};

std::optional<double> as_number(std::string_view tok) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::optional<dsl::Direction> as_direction(std::string_view tok) {
  if (tok == "left") return dsl::Direction::Left;
  if (tok == "right") return dsl::Direction::Right;
  if (tok == "forward" || tok == "forwards" || tok == "ahead") return dsl::Direction::Forward;
  if (tok == "back" || tok == "backward" || tok == "backwards") return dsl::Direction::Back;
  return std::nullopt;
}

bool has_letter(std::string_view s) {
  return std::any_of(s.begin(), s.end(), [](unsigned char c) { return std::isalpha(c) != 0; });
}

std::string_view strip(std::string_view s, std::string_view chars) {
  while (!s.empty() && chars.find(s.front()) != std::string_view::npos) s.remove_prefix(1);
  while (!s.empty() && chars.find(s.back()) != std::string_view::npos) s.remove_suffix(1);
  return s;
}

// Filters for an object phrase: determiners skipped, last word is the head
// noun, colour words before it become has_colour.
std::optional<memory::FiltersClause> phrase_filters(const std::vector<std::string>& tokens, int start, int end) {
  int i = start;
  while (i < end && kDeterminers.count(tokens[i])) ++i;
  if (i >= end) return std::nullopt;
  const std::string& head = tokens[end - 1];
  if (!has_letter(head) || kDeterminers.count(head)) return std::nullopt;
  memory::FiltersClause f;
  f.tag("has_tag", head);
  for (int k = i; k < end - 1; ++k) {
    if (is_colour(tokens[k])) f.tag("has_colour", tokens[k]);
  }
  return f;
}

struct Binding {
  dsl::Span span;
  json value;
  json filters;  // OBJ_PHRASE only
};

using Bindings = std::map<std::string, Binding>;

// Backtracking match of pattern[pi..] against tokens[ti..].
bool match(const std::vector<PatternElement>& pattern, std::size_t pi, const std::vector<std::string>& tokens, int ti,
           Bindings& out) {
  const int n = static_cast<int>(tokens.size());
  if (pi == pattern.size()) return ti == n;
  const auto& el = pattern[pi];
  if (!el.slot) {
    return ti < n && tokens[ti] == el.literal && match(pattern, pi + 1, tokens, ti + 1, out);
  }
  auto bind = [&](int len, json value, json filters = nullptr) {
    out[el.slot_name] = Binding{{ti, ti + len}, std::move(value), std::move(filters)};
    if (match(pattern, pi + 1, tokens, ti + len, out)) return true;
    out.erase(el.slot_name);
    return false;
  };
  switch (*el.slot) {
    case SlotType::Number: {
      if (ti >= n) return false;
      auto v = as_number(tokens[ti]);
      if (!v) return false;
      const double r = std::round(*v);
      json value = (r == *v && std::abs(r) < 1e15) ? json(static_cast<std::int64_t>(r)) : json(*v);
      return bind(1, value);
    }
    case SlotType::Direction: {
      if (ti >= n) return false;
      auto d = as_direction(tokens[ti]);
      return d && bind(1, std::string(dsl::to_string(*d)));
    }
    case SlotType::Coord: {
      // "x,y" | "x, y" | "(x, y)" | "x y"
      if (ti < n) {
        const auto one = strip(tokens[ti], "()");
        const auto comma = one.find(',');
        if (comma != std::string_view::npos) {
          auto x = as_number(one.substr(0, comma));
          auto y = as_number(one.substr(comma + 1));
          if (x && y && bind(1, json{{"x", *x}, {"y", *y}})) return true;
        }
      }
      if (ti + 1 < n) {
        auto x = as_number(strip(tokens[ti], "(,"));
        auto y = as_number(strip(tokens[ti + 1], ")"));
        if (x && y && bind(2, json{{"x", *x}, {"y", *y}})) return true;
      }
      return false;
    }
    case SlotType::ObjPhrase: {
      for (int len = n - ti; len >= 1; --len) {
        auto f = phrase_filters(tokens, ti, ti + len);
        if (!f) continue;
        json filters = memory::to_json(*f);
        if (bind(len, json{{"filters", filters}}, filters)) return true;
      }
      return false;
    }
  }
  return false;
}

// Replaces placeholder string leaves; returns false on an unknown name.
bool substitute(json& node, const std::function<std::optional<json>(std::string_view)>& lookup) {
  if (node.is_string()) {
    const auto& s = node.get_ref<const std::string&>();
    if (!s.empty() && s[0] == '$') {
      auto v = lookup(std::string_view(s).substr(1));
      if (!v) return false;
      node = std::move(*v);
    }
    return true;
  }
  if (node.is_object() || node.is_array()) {
    for (auto& child : node) {
      if (!substitute(child, lookup)) return false;
    }
  }
  return true;
}

std::optional<json> resolve(const Bindings& b, std::string_view ref) {
  const auto dot = ref.find('.');
  const std::string name(ref.substr(0, dot));
  auto it = b.find(name);
  if (it == b.end()) return std::nullopt;
  if (dot == std::string_view::npos) return it->second.value;
  if (ref.substr(dot + 1) == "filters" && !it->second.filters.is_null()) return it->second.filters;
  return std::nullopt;
}

json sample_value(SlotType t) {
  switch (t) {
    case SlotType::ObjPhrase: return json{{"filters", {{"has_tag", "thing"}}}};
    case SlotType::Number: return 2;
    case SlotType::Direction: return "LEFT";
    case SlotType::Coord: return json{{"x", 1.0}, {"y", 1.0}};
  }
  return nullptr;
}

std::string trim(std::string_view s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string_view::npos) return {};
  return std::string(s.substr(a, s.find_last_not_of(" \t\r\n") - a + 1));
}

}  // namespace

std::string_view to_string(SlotType t) {
  switch (t) {
    case SlotType::ObjPhrase: return "OBJ_PHRASE";
    case SlotType::Number: return "NUMBER";
    case SlotType::Direction: return "DIRECTION";
    case SlotType::Coord: return "COORD";
  }
  return "?";
}

std::optional<SlotType> slot_type_from_string(std::string_view s) {
  for (auto t : {SlotType::ObjPhrase, SlotType::Number, SlotType::Direction, SlotType::Coord}) {
    if (to_string(t) == s) return t;
  }
  return std::nullopt;
}

const std::vector<std::string>& colour_terms() {
  static const std::vector<std::string> terms = {"black", "white", "red",    "green", "yellow", "blue",
                                                 "brown", "purple", "pink", "orange", "grey"};
  return terms;
}

bool is_colour(std::string_view word) {
  const auto& t = colour_terms();
  return std::find(t.begin(), t.end(), word) != t.end();
}

std::vector<std::string> tokenize(std::string_view text) {
  std::string s(text);
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  while (!s.empty() && (std::isspace(static_cast<unsigned char>(s.back())) || std::string_view(".!?;:,").find(s.back()) != std::string_view::npos)) {
    s.pop_back();
  }
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    std::size_t j = i;
    while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

Template Template::parse(int priority, std::string_view pattern, std::string_view skeleton_text) {
  Template t;
  t.priority = priority;
  for (const auto& tok : tokenize(pattern)) {
    PatternElement el;
    if (tok[0] == '$') {
      const auto colon = tok.find(':');
      if (colon == std::string::npos || colon == 1) {
        throw Error(ErrorCode::validation, "slot '" + tok + "' needs the form $name:TYPE");
      }
      std::string type = tok.substr(colon + 1);
      for (auto& c : type) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
      el.slot = slot_type_from_string(type);
      if (!el.slot) throw Error(ErrorCode::validation, "unknown slot type '" + type + "'");
      el.slot_name = tok.substr(1, colon - 1);
    } else {
      el.literal = tok;
    }
    t.pattern.push_back(std::move(el));
  }
  try {
    t.skeleton = json::parse(skeleton_text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("template skeleton: ") + e.what(), e.byte);
  }
  return t;
}

std::string Template::pattern_text() const {
  std::string out;
  for (const auto& el : pattern) {
    if (!out.empty()) out += ' ';
    out += el.slot ? "$" + el.slot_name + ":" + std::string(to_string(*el.slot)) : el.literal;
  }
  return out;
}

int TemplateParser::add_template(Template t) {
  if (t.pattern.empty()) throw Error(ErrorCode::validation, "template pattern is empty");
  Bindings sample;
  for (const auto& el : t.pattern) {
    if (!el.slot) continue;
    if (sample.count(el.slot_name)) throw Error(ErrorCode::validation, "slot $" + el.slot_name + " declared twice");
    json v = sample_value(*el.slot);
    json f = *el.slot == SlotType::ObjPhrase ? v["filters"] : json(nullptr);
    sample[el.slot_name] = Binding{{0, 1}, v, f};
  }
  json probe = t.skeleton;
  std::string bad;
  const bool bound = substitute(probe, [&](std::string_view ref) {
    auto v = resolve(sample, ref);
    if (!v) bad = std::string(ref);
    return v;
  });
  if (!bound) throw Error(ErrorCode::validation, "skeleton placeholder $" + bad + " is not bound by the pattern");
  try {
    const auto lf = dsl::from_json(probe);
    const auto violations = dsl::validate(lf);
    if (!violations.empty()) {
      throw Error(ErrorCode::validation,
                  "skeleton yields an invalid logical form: " + violations[0].path + ": " + violations[0].rule);
    }
  } catch (const ParseError& e) {
    throw Error(ErrorCode::validation, std::string("skeleton is not a logical form: ") + e.what());
  }

  const int id = static_cast<int>(templates_.size());
  templates_.push_back(std::move(t));
  order_.push_back(id);
  std::stable_sort(order_.begin(), order_.end(), [&](int a, int b) {
    if (templates_[a].priority != templates_[b].priority) return templates_[a].priority > templates_[b].priority;
    return a < b;
  });
  return id;
}

ParseResult TemplateParser::parse(std::string_view text) const {
  ParseResult result;
  result.tokens = tokenize(text);
  const int n = static_cast<int>(result.tokens.size());
  for (int id : order_) {
    const Template& t = templates_[id];
    Bindings b;
    if (!match(t.pattern, 0, result.tokens, 0, b)) continue;
    json filled = t.skeleton;
    if (!substitute(filled, [&](std::string_view ref) { return resolve(b, ref); })) continue;
    dsl::LogicalForm lf;
    try {
      lf = dsl::from_json(filled);
    } catch (const ParseError&) {
      continue;
    }
    if (!dsl::validate(lf, n).empty()) continue;
    result.lf = std::move(lf);
    result.matched_template = id;
    for (const auto& [name, binding] : b) result.bindings[name] = binding.span;
    return result;
  }
  result.lf = dsl::LogicalForm::noop();
  return result;
}

TemplateParser TemplateParser::from_table(std::string_view table) {
  TemplateParser p;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < table.size()) {
    const auto nl = table.find('\n', pos);
    std::string line = trim(table.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos));
    pos = nl == std::string_view::npos ? table.size() : nl + 1;
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto bar1 = line.find('|');
    const auto bar2 = bar1 == std::string::npos ? std::string::npos : line.find('|', bar1 + 1);
    if (bar2 == std::string::npos) {
      throw ParseError("template table line " + std::to_string(line_no) + ": expected priority | pattern | skeleton",
                       line_no);
    }
    const std::string prio = trim(std::string_view(line).substr(0, bar1));
    int priority = 0;
    auto [ptr, ec] = std::from_chars(prio.data(), prio.data() + prio.size(), priority);
    if (ec != std::errc() || ptr != prio.data() + prio.size()) {
      throw ParseError("template table line " + std::to_string(line_no) + ": bad priority '" + prio + "'", line_no);
    }
    try {
      p.add_template(Template::parse(priority, trim(std::string_view(line).substr(bar1 + 1, bar2 - bar1 - 1)),
                                     trim(std::string_view(line).substr(bar2 + 1))));
    } catch (const Error& e) {
      throw ParseError("template table line " + std::to_string(line_no) + ": " + e.what(), line_no);
    }
  }
  return p;
}

TemplateParser TemplateParser::with_default_templates() { return from_table(default_template_table()); }

}  // namespace minidroid::nlp
