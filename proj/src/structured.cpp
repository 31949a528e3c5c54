#include "faithcheck/structured.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "faithcheck/error.hpp"

namespace faithcheck::structured {

std::string_view to_string(FieldKind kind) {
  switch (kind) {
    case FieldKind::String: return "string";
    case FieldKind::Boolean: return "boolean";
    case FieldKind::Decimal: return "decimal";
    case FieldKind::Integer: return "integer";
    case FieldKind::Enum: return "enum";
    case FieldKind::List: return "list";
    case FieldKind::Object: return "object";
  }
  return "unknown";
}

std::string_view to_string(Stage stage) {
  switch (stage) {
    case Stage::Extraction: return "extraction";
    case Stage::Parse: return "parse";
    case Stage::Schema: return "schema";
    case Stage::Consistency: return "consistency";
  }
  return "unknown";
}

const FieldSpec* Schema::field(std::string_view n) const {
  for (const auto& f : fields) {
    if (f.name == n) return &f;
  }
  return nullptr;
}

json Schema::to_json() const {
  json j{{"name", name}, {"version", version}, {"fields", json::array()}};
  for (const auto& f : fields) {
    json fj{{"name", f.name}, {"kind", std::string(structured::to_string(f.kind))}, {"required", f.required}};
    if (!f.allowed.empty()) fj["allowed"] = f.allowed;
    if (f.min) fj["min"] = *f.min;
    if (f.max) fj["max"] = *f.max;
    if (f.item_kind) fj["items"] = std::string(structured::to_string(*f.item_kind));
    if (f.nested) fj["schema"] = f.nested->to_json();
    if (f.non_empty) fj["non_empty"] = true;
    j["fields"].push_back(std::move(fj));
  }
  return j;
}

// ---------------------------------------------------------------- extraction

namespace {

// End (one past) of the balanced object starting at `open`, or npos.
std::size_t balanced_end(std::string_view s, std::size_t open) {
  int depth = 0;
  bool in_string = false;
  for (std::size_t i = open; i < s.size(); ++i) {
    const char c = s[i];
    if (in_string) {
      if (c == '\\') {
        ++i;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '{' || c == '[') {
      ++depth;
    } else if (c == '}' || c == ']') {
      if (--depth == 0) return i + 1;
    }
  }
  return std::string_view::npos;
}

std::optional<std::string> first_object(std::string_view s) {
  std::optional<std::string> fallback;
  for (std::size_t pos = s.find('{'); pos != std::string_view::npos; pos = s.find('{', pos + 1)) {
    const std::size_t end = balanced_end(s, pos);
    if (end == std::string_view::npos) {
      if (!fallback) fallback = std::string(s.substr(pos));
      break;
    }
    std::string candidate(s.substr(pos, end - pos));
    if (json::accept(candidate)) return candidate;
    if (!fallback) fallback = std::move(candidate);
  }
  return fallback;
}

}  // namespace

std::string extract_json(std::string_view raw) {
  // Prefer the body of a ```json fence when there is one.
  for (std::size_t f = raw.find("```"); f != std::string_view::npos; f = raw.find("```", f + 3)) {
    std::size_t body = raw.find('\n', f);
    if (body == std::string_view::npos) break;
    const std::size_t close = raw.find("```", body);
    const auto inner = raw.substr(body + 1, close == std::string_view::npos ? std::string_view::npos : close - body - 1);
    if (auto obj = first_object(inner)) return *obj;
    if (close == std::string_view::npos) break;
    f = close;
  }
  if (auto obj = first_object(raw)) return *obj;
  fail(ErrorKind::NoJsonFound, "no JSON object in model output");
}

// -------------------------------------------------------------------- repair

const std::vector<std::string>& repair_rules() {
  static const std::vector<std::string> rules = {
      "smart_quotes",   "comments",        "single_quotes", "control_characters", "unquoted_keys",
      "python_literals", "bareword_values", "missing_commas", "trailing_commas",  "close_truncated",
  };
  return rules;
}

namespace {

bool starts(std::string_view s, std::size_t i, std::string_view what) { return s.substr(i, what.size()) == what; }

constexpr std::string_view kLeftDq = "\xe2\x80\x9c";
constexpr std::string_view kRightDq = "\xe2\x80\x9d";
constexpr std::string_view kLeftSq = "\xe2\x80\x98";
constexpr std::string_view kRightSq = "\xe2\x80\x99";

std::string normalize_smart_quotes(std::string_view s, bool& changed) {
  std::string out;
  out.reserve(s.size());
  bool in_string = false;
  bool smart_open = false;
  for (std::size_t i = 0; i < s.size();) {
    const bool dq = starts(s, i, kLeftDq) || starts(s, i, kRightDq);
    if (!in_string) {
      if (dq) {
        out += '"';
        in_string = smart_open = changed = true;
        i += 3;
        continue;
      }
      if (starts(s, i, kLeftSq) || starts(s, i, kRightSq)) {
        out += '\'';
        changed = true;
        i += 3;
        continue;
      }
      if (s[i] == '"') {
        in_string = true;
        smart_open = false;
      }
      out += s[i++];
      continue;
    }
    if (s[i] == '\\' && i + 1 < s.size()) {
      out += s.substr(i, 2);
      i += 2;
      continue;
    }
    if (dq && smart_open) {
      out += '"';
      in_string = false;
      i += 3;
      continue;
    }
    if (s[i] == '"') in_string = false;
    out += s[i++];
  }
  return out;
}

class Repairer {
 public:
  explicit Repairer(std::string_view in) : s_(in) {}

  std::string run(std::set<std::string>& rules) {
    rules_ = &rules;
    while (i_ < s_.size()) step();
    finish();
    return std::move(out_);
  }

 private:
  enum class St { KeyOrEnd, Colon, Value, CommaOrEnd };
  struct Frame {
    char open;
    St st;
    bool after_comma = false;
    std::size_t comma_pos = 0;
  };

  void rule(const char* id) { rules_->insert(id); }

  [[noreturn]] void unrepairable(const std::string& why) { fail(ErrorKind::UnrepairableJson, why); }

  // Called before any value/key token: inserts a missing comma if a value has
  // just ended inside a container.
  void before_token() {
    if (stack_.empty()) return;
    auto& f = stack_.back();
    if (f.st == St::CommaOrEnd) {
      out_.insert(last_value_end_, ",");
      rule("missing_commas");
      f.st = f.open == '{' ? St::KeyOrEnd : St::Value;
      f.after_comma = false;
    }
  }

  bool key_position() const { return !stack_.empty() && stack_.back().open == '{' && stack_.back().st == St::KeyOrEnd; }

  void after_scalar(bool was_key) {
    if (stack_.empty()) {
      last_value_end_ = out_.size();
      return;
    }
    auto& f = stack_.back();
    if (was_key) {
      f.st = St::Colon;
    } else {
      f.st = St::CommaOrEnd;
      last_value_end_ = out_.size();
    }
    f.after_comma = false;
  }

  void emit_string(const std::string& body_json_escaped) {
    before_token();
    const bool key = key_position();
    if (!stack_.empty() && stack_.back().open == '{' && stack_.back().st == St::Colon) unrepairable("two keys in a row");
    out_ += '"';
    out_ += body_json_escaped;
    out_ += '"';
    after_scalar(key);
  }

  void read_double_quoted() {
    ++i_;
    std::string body;
    bool closed = false;
    while (i_ < s_.size()) {
      const char c = s_[i_];
      if (c == '\\' && i_ + 1 < s_.size()) {
        body += s_.substr(i_, 2);
        i_ += 2;
        continue;
      }
      if (c == '"') {
        closed = true;
        ++i_;
        break;
      }
      body += escape_control(c);
      ++i_;
    }
    if (!closed) rule("close_truncated");
    emit_string(body);
  }

  std::string escape_control(char c) {
    switch (c) {
      case '\n': rule("control_characters"); return "\\n";
      case '\r': rule("control_characters"); return "\\r";
      case '\t': rule("control_characters"); return "\\t";
      default: return std::string(1, c);
    }
  }

  // A single quote closes the string only when followed by a structural
  // character, so apostrophes inside words survive.
  bool closes_single(std::size_t j) const {
    std::size_t k = j + 1;
    while (k < s_.size() && (s_[k] == ' ' || s_[k] == '\t' || s_[k] == '\n' || s_[k] == '\r')) ++k;
    return k >= s_.size() || s_[k] == ',' || s_[k] == '}' || s_[k] == ']' || s_[k] == ':';
  }

  void read_single_quoted() {
    rule("single_quotes");
    ++i_;
    std::string body;
    bool closed = false;
    while (i_ < s_.size()) {
      const char c = s_[i_];
      if (c == '\\' && i_ + 1 < s_.size()) {
        if (s_[i_ + 1] == '\'') {
          body += '\'';
        } else {
          body += s_.substr(i_, 2);
        }
        i_ += 2;
        continue;
      }
      if (c == '\'' && closes_single(i_)) {
        closed = true;
        ++i_;
        break;
      }
      if (c == '"') {
        body += "\\\"";
      } else {
        body += escape_control(c);
      }
      ++i_;
    }
    if (!closed) rule("close_truncated");
    emit_string(body);
  }

  void read_bareword() {
    std::size_t j = i_;
    while (j < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[j])) || s_[j] == '_' || s_[j] == '-')) ++j;
    const std::string word(s_.substr(i_, j - i_));
    i_ = j;
    if (key_position() || (!stack_.empty() && stack_.back().st == St::CommaOrEnd && stack_.back().open == '{')) {
      before_token();
      rule("unquoted_keys");
      out_ += '"' + word + '"';
      after_scalar(true);
      return;
    }
    before_token();
    if (word == "true" || word == "false" || word == "null") {
      out_ += word;
    } else if (word == "True" || word == "False" || word == "None") {
      rule("python_literals");
      out_ += word == "True" ? "true" : word == "False" ? "false" : "null";
    } else {
      rule("bareword_values");
      out_ += '"' + word + '"';
    }
    after_scalar(false);
  }

  void read_number() {
    std::size_t j = i_;
    if (s_[j] == '-') ++j;
    while (j < s_.size() && (std::isdigit(static_cast<unsigned char>(s_[j])) || s_[j] == '.' || s_[j] == 'e' ||
                             s_[j] == 'E' || ((s_[j] == '+' || s_[j] == '-') && (s_[j - 1] == 'e' || s_[j - 1] == 'E')))) {
      ++j;
    }
    before_token();
    out_ += s_.substr(i_, j - i_);
    i_ = j;
    after_scalar(false);
  }

  void open(char c) {
    before_token();
    if (!stack_.empty() && stack_.back().open == '{' && stack_.back().st != St::Value) {
      unrepairable("container in key position");
    }
    out_ += c;
    stack_.push_back({c, c == '{' ? St::KeyOrEnd : St::Value});
    ++i_;
  }

  void close_top() {
    auto& f = stack_.back();
    if (f.st == St::Value && f.open == '{') unrepairable("key without value");
    if (f.st == St::Colon) unrepairable("key without value");
    if (f.after_comma) {
      out_.erase(f.comma_pos, 1);
      rule("trailing_commas");
    }
    out_ += f.open == '{' ? '}' : ']';
    stack_.pop_back();
    after_scalar(false);
  }

  void close(char c) {
    const char want = c == '}' ? '{' : '[';
    auto it = std::find_if(stack_.rbegin(), stack_.rend(), [&](const Frame& f) { return f.open == want; });
    if (it == stack_.rend()) unrepairable(std::string("unbalanced '") + c + "'");
    while (stack_.back().open != want) {
      rule("close_truncated");
      close_top();
    }
    close_top();
    ++i_;
  }

  void comma() {
    ++i_;
    if (stack_.empty()) {
      out_ += ',';
      return;
    }
    auto& f = stack_.back();
    if (f.st == St::CommaOrEnd) {
      f.comma_pos = out_.size();
      out_ += ',';
      f.st = f.open == '{' ? St::KeyOrEnd : St::Value;
      f.after_comma = true;
    } else {
      rule("trailing_commas");  // doubled or leading comma
    }
  }

  void step() {
    const char c = s_[i_];
    if (c == '/' && i_ + 1 < s_.size() && (s_[i_ + 1] == '/' || s_[i_ + 1] == '*')) {
      rule("comments");
      if (s_[i_ + 1] == '/') {
        const auto nl = s_.find('\n', i_);
        i_ = nl == std::string_view::npos ? s_.size() : nl;
      } else {
        const auto end = s_.find("*/", i_ + 2);
        i_ = end == std::string_view::npos ? s_.size() : end + 2;
      }
      return;
    }
    switch (c) {
      case '{': case '[': open(c); return;
      case '}': case ']': close(c); return;
      case ',': comma(); return;
      case ':':
        if (!stack_.empty() && stack_.back().st == St::Colon) stack_.back().st = St::Value;
        out_ += c;
        ++i_;
        return;
      case '"': read_double_quoted(); return;
      case '\'': read_single_quoted(); return;
      default: break;
    }
    if (c == '-' || std::isdigit(static_cast<unsigned char>(c))) {
      read_number();
    } else if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      read_bareword();
    } else {
      out_ += c;
      ++i_;
    }
  }

  void finish() {
    if (!stack_.empty()) rule("close_truncated");
    while (!stack_.empty()) {
      auto& f = stack_.back();
      if (f.st == St::Value && f.open == '{') unrepairable("truncated before a value");
      if (f.st == St::Colon) unrepairable("truncated after a key");
      close_top();
    }
  }

  std::string_view s_;
  std::size_t i_ = 0;
  std::string out_;
  std::vector<Frame> stack_;
  std::size_t last_value_end_ = 0;
  std::set<std::string>* rules_ = nullptr;
};

}  // namespace

RepairResult repair_json(std::string_view candidate) {
  if (json::accept(candidate)) return {std::string(candidate), {}};
  std::set<std::string> applied;
  bool smart = false;
  const std::string normalized = normalize_smart_quotes(candidate, smart);
  if (smart) applied.insert("smart_quotes");
  std::string text = Repairer(normalized).run(applied);
  if (!json::accept(text)) fail(ErrorKind::UnrepairableJson, "output still does not parse after repair");
  RepairResult r{std::move(text), {}};
  for (const auto& id : repair_rules()) {
    if (applied.count(id)) r.rules_applied.push_back(id);
  }
  return r;
}

// ---------------------------------------------------------------- validation

namespace {

void check_value(const json& v, const FieldSpec& spec, FieldKind kind, const std::string& path, SchemaMode mode,
                 ValidationOutcome& out);

void check_object(const json& doc, const Schema& schema, const std::string& prefix, SchemaMode mode,
                  ValidationOutcome& out) {
  if (!doc.is_object()) {
    out.add("wrong_kind", (prefix.empty() ? std::string("document") : prefix) + " must be an object");
    return;
  }
  for (const auto& f : schema.fields) {
    const std::string path = prefix.empty() ? f.name : prefix + "." + f.name;
    auto it = doc.find(f.name);
    if (it == doc.end() || (it->is_null() && !f.required)) {
      if (f.required) out.add("missing_field", path + " is required");
      continue;
    }
    check_value(*it, f, f.kind, path, mode, out);
  }
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    if (schema.field(it.key())) continue;
    const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (mode == SchemaMode::Strict) {
      out.add("unknown_field", path + " is not part of " + schema.name);
    } else {
      out.notes.push_back("ignored unknown field " + path);
    }
  }
}

void check_value(const json& v, const FieldSpec& spec, FieldKind kind, const std::string& path, SchemaMode mode,
                 ValidationOutcome& out) {
  auto wrong = [&] { out.add("wrong_kind", path + " must be " + std::string(to_string(kind))); };
  auto range = [&](double x) {
    if ((spec.min && x < *spec.min) || (spec.max && x > *spec.max)) {
      out.add("range", path + " = " + v.dump() + " outside [" + (spec.min ? json(*spec.min).dump() : "-inf") + ", " +
                           (spec.max ? json(*spec.max).dump() : "inf") + "]");
    }
  };
  switch (kind) {
    case FieldKind::String:
      if (!v.is_string()) return wrong();
      if (spec.non_empty && v.get_ref<const std::string&>().empty()) out.add("empty", path + " must be non-empty");
      return;
    case FieldKind::Boolean:
      if (!v.is_boolean()) wrong();
      return;
    case FieldKind::Decimal:
      if (!v.is_number()) return wrong();
      range(v.get<double>());
      return;
    case FieldKind::Integer:
      if (!v.is_number_integer()) return wrong();
      range(v.get<double>());
      return;
    case FieldKind::Enum: {
      if (!v.is_string()) return wrong();
      const auto& s = v.get_ref<const std::string&>();
      if (std::find(spec.allowed.begin(), spec.allowed.end(), s) == spec.allowed.end()) {
        out.add("enum", path + " = \"" + s + "\" not in allowed values");
      }
      return;
    }
    case FieldKind::List: {
      if (!v.is_array()) return wrong();
      if (spec.non_empty && v.empty()) out.add("empty", path + " must be non-empty");
      if (!spec.item_kind) return;
      for (std::size_t i = 0; i < v.size(); ++i) {
        const std::string item_path = path + "[" + std::to_string(i) + "]";
        if (*spec.item_kind == FieldKind::Object) {
          if (spec.nested) check_object(v[i], *spec.nested, item_path, mode, out);
        } else {
          check_value(v[i], spec, *spec.item_kind, item_path, mode, out);
        }
      }
      return;
    }
    case FieldKind::Object:
      if (spec.nested) {
        check_object(v, *spec.nested, path, mode, out);
      } else if (!v.is_object()) {
        wrong();
      }
      return;
  }
}

}  // namespace

ValidationOutcome validate_schema(const json& doc, const Schema& schema, SchemaMode mode) {
  ValidationOutcome out;
  out.stage = Stage::Schema;
  check_object(doc, schema, "", mode, out);
  return out;
}

ParseResult parse_and_validate(std::string_view raw, const Schema& schema, SchemaMode mode) {
  ParseResult r;
  std::string candidate;
  try {
    candidate = extract_json(raw);
  } catch (const Error& e) {
    r.outcome.stage = Stage::Extraction;
    r.outcome.add("no_json", e.what());
    return r;
  }
  try {
    auto repaired = repair_json(candidate);
    r.repairs = std::move(repaired.rules_applied);
    r.parsed = json::parse(repaired.text);
  } catch (const Error& e) {
    r.outcome.stage = Stage::Parse;
    r.outcome.add("unrepairable", e.what());
    return r;
  }
  r.outcome = validate_schema(*r.parsed, schema, mode);
  if (r.outcome.ok) r.value = r.parsed;
  return r;
}

AcceptResult accept_or_retry(const std::function<std::string(int)>& next, const Schema& schema,
                             const ConsistencyChecker& checker, int budget, SchemaMode mode) {
  if (budget < 1) fail(ErrorKind::InvalidArgument, "retry budget must be >= 1");
  AcceptResult result;
  std::optional<std::size_t> retained;
  for (int attempt = 1; attempt <= budget; ++attempt) {
    Attempt a;
    a.raw = next(attempt);
    a.parse = parse_and_validate(a.raw, schema, mode);
    if (a.parse.value) {
      a.consistency = checker ? checker(*a.parse.value) : ValidationOutcome{};
      a.consistency.stage = Stage::Consistency;
      a.accepted = a.consistency.ok;
    }
    result.history.push_back(std::move(a));
    result.attempts = attempt;
    const auto& last = result.history.back();
    if (last.accepted) {
      result.value = last.parse.value;
      result.accepted = true;
      return result;
    }
    if (last.parse.value) retained = result.history.size() - 1;
  }
  if (retained) {
    const auto& a = result.history[*retained];
    result.value = a.parse.value;
    result.flagged = true;
    result.violations = a.consistency.violations;
  } else {
    result.violations = result.history.back().parse.outcome.violations;
  }
  return result;
}

}  // namespace faithcheck::structured
