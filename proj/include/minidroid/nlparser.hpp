#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "minidroid/dsl.hpp"

namespace minidroid::nlp {

enum class SlotType { ObjPhrase, Number, Direction, Coord };

std::string_view to_string(SlotType t);
std::optional<SlotType> slot_type_from_string(std::string_view s);

/// One pattern position: a literal token, or a typed slot.
struct PatternElement {
  std::string literal;
  std::optional<SlotType> slot;
  std::string slot_name;
};

/// A pattern plus a logical-form skeleton whose string leaves "$name" (or
/// "$name.filters" for object phrases) are filled from the matched slots.
struct Template {
  int priority = 0;
  std::vector<PatternElement> pattern;
  nlohmann::json skeleton;

  /// Builds from table notation, e.g. pattern "go to $obj:OBJ_PHRASE".
  /// Throws Error(validation) / ParseError.
  static Template parse(int priority, std::string_view pattern, std::string_view skeleton_text);
  std::string pattern_text() const;
};

struct ParseResult {
  dsl::LogicalForm lf;
  std::vector<std::string> tokens;
  std::map<std::string, dsl::Span> bindings;
  std::optional<int> matched_template;
};

/// Lower-cases, strips trailing punctuation from the utterance, and splits
/// on whitespace.
std::vector<std::string> tokenize(std::string_view text);

/// The eleven basic colour terms recognised as has_colour adjectives.
const std::vector<std::string>& colour_terms();
bool is_colour(std::string_view word);

/// Interface the controller parses chats through; a learned parser can
/// stand in for the template one.
class SemanticParser {
 public:
  virtual ~SemanticParser() = default;
  virtual ParseResult parse(std::string_view text) const = 0;
};

class TemplateParser : public SemanticParser {
 public:
  TemplateParser() = default;

  /// Parser loaded with the shipped table (data/templates.txt).
  static TemplateParser with_default_templates();
  /// Loads "priority | pattern | skeleton" lines; '#' starts a comment.
  static TemplateParser from_table(std::string_view table);

  /// Returns the new template's id. Throws Error(validation) when the
  /// skeleton references an undeclared slot or cannot yield a valid form.
  int add_template(Template t);

  /// Highest-priority matching template wins (ties: lower id); a NOOP form
  /// when nothing matches.
  ParseResult parse(std::string_view text) const override;

  const std::vector<Template>& templates() const { return templates_; }

 private:
  std::vector<Template> templates_;
  std::vector<int> order_;  // template ids by (priority desc, id asc)
};

/// Text of the shipped template table.
std::string_view default_template_table();

}  // namespace minidroid::nlp
