#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace faithcheck::structured {

using nlohmann::json;

enum class FieldKind { String, Boolean, Decimal, Integer, Enum, List, Object };

std::string_view to_string(FieldKind kind);

struct Schema;

struct FieldSpec {
  std::string name;
  FieldKind kind = FieldKind::String;
  bool required = true;
  std::vector<std::string> allowed;  // Enum, or List items of kind Enum
  std::optional<double> min;
  std::optional<double> max;
  // List only: kind of each item (Object items use `nested`).
  std::optional<FieldKind> item_kind;
  // Object fields and List-of-Object items.
  std::shared_ptr<const Schema> nested;
  bool non_empty = false;  // String / List
};

struct Schema {
  std::string name;
  std::string version;
  std::vector<FieldSpec> fields;

  const FieldSpec* field(std::string_view name) const;
  json to_json() const;
};

enum class SchemaMode { Strict, Lenient };

enum class Stage { Extraction, Parse, Schema, Consistency };

std::string_view to_string(Stage stage);

struct Violation {
  std::string rule_id;
  std::string message;
};

struct ValidationOutcome {
  Stage stage = Stage::Schema;
  bool ok = true;
  std::vector<Violation> violations;
  std::vector<std::string> notes;  // lenient-mode unknown fields etc.

  void add(std::string rule_id, std::string message) {
    violations.push_back({std::move(rule_id), std::move(message)});
    ok = false;
  }
};

// First balanced JSON object in model output, verbatim. Code fences, prose
// before and chatter after are skipped. An unterminated object is returned
// from its opening brace to the end so repair can close it.
std::string extract_json(std::string_view raw);

struct RepairResult {
  std::string text;
  std::vector<std::string> rules_applied;  // in rule order
};

// Ordered rule ids. Bump kRepairRulesetVersion when this list changes.
inline constexpr const char* kRepairRulesetVersion = "repair/1";
const std::vector<std::string>& repair_rules();

// Input that already parses is returned byte-identical with no rules.
RepairResult repair_json(std::string_view candidate);

ValidationOutcome validate_schema(const json& doc, const Schema& schema, SchemaMode mode = SchemaMode::Strict);

// extraction -> repair -> parse -> schema, stopping at the first failing stage.
struct ParseResult {
  std::optional<json> value;  // set iff schema validation passed
  std::optional<json> parsed;  // set iff the text parsed at all
  std::vector<std::string> repairs;
  ValidationOutcome outcome;
};

ParseResult parse_and_validate(std::string_view raw, const Schema& schema, SchemaMode mode = SchemaMode::Strict);

using ConsistencyChecker = std::function<ValidationOutcome(const json&)>;

struct Attempt {
  std::string raw;
  ParseResult parse;
  ValidationOutcome consistency;  // only meaningful when parse.value is set
  bool accepted = false;
};

struct AcceptResult {
  // Accepted value, or the most recent schema-valid candidate when the budget
  // ran out (flagged). Empty only if no attempt ever passed the schema.
  std::optional<json> value;
  bool accepted = false;
  bool flagged = false;
  int attempts = 0;
  std::vector<Violation> violations;  // of the retained candidate / last attempt
  std::vector<Attempt> history;
};

// `next(attempt)` produces raw model text for attempt 1..budget; the first
// call may simply return an already available response.
AcceptResult accept_or_retry(const std::function<std::string(int)>& next, const Schema& schema,
                             const ConsistencyChecker& checker, int budget = 3,
                             SchemaMode mode = SchemaMode::Strict);

}  // namespace faithcheck::structured
