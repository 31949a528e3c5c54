#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "faithcheck/assets.hpp"
#include "faithcheck/error.hpp"
#include "faithcheck/hash.hpp"
#include "faithcheck/text.hpp"
#include "faithcheck/types.hpp"

namespace faithcheck {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::Io: return "IoError";
    case ErrorKind::Config: return "ConfigError";
    case ErrorKind::MissingTable: return "MissingTable";
    case ErrorKind::MalformedRow: return "MalformedRow";
    case ErrorKind::IdMismatch: return "IdMismatch";
    case ErrorKind::Llm: return "LlmError";
    case ErrorKind::MockExhausted: return "MockExhausted";
    case ErrorKind::UnmatchedRequest: return "UnmatchedRequest";
    case ErrorKind::Schema: return "SchemaError";
    case ErrorKind::NoJsonFound: return "NoJsonFound";
    case ErrorKind::UnrepairableJson: return "UnrepairableJson";
    case ErrorKind::NoPatientEntity: return "NoPatientEntity";
    case ErrorKind::EmptyGraph: return "EmptyGraph";
    case ErrorKind::PlausibilityReject: return "PlausibilityReject";
    case ErrorKind::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorKind::DuplicateKey: return "DuplicateKey";
    case ErrorKind::DegenerateBase: return "DegenerateBase";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::TooFewPoints: return "TooFewPoints";
    case ErrorKind::EmbeddingBackend: return "EmbeddingBackendError";
  }
  return "Unknown";
}

std::string to_hex(std::uint64_t value, int digits) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out(static_cast<std::size_t>(digits), '0');
  for (int i = digits - 1; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = kDigits[value & 0xf];
    value >>= 4;
  }
  return out;
}

std::string_view to_string(EvidenceGrade grade) {
  switch (grade) {
    case EvidenceGrade::E1: return "E1";
    case EvidenceGrade::E2: return "E2";
    case EvidenceGrade::E3: return "E3";
    case EvidenceGrade::E4: return "E4";
  }
  return "?";
}

std::optional<EvidenceGrade> parse_grade(std::string_view text) {
  for (auto g : kAllGrades) {
    if (to_string(g) == text) return g;
  }
  return std::nullopt;
}

std::string_view to_string(HallucinationType type) {
  switch (type) {
    case HallucinationType::DiagnosisError: return "diagnosis_error";
    case HallucinationType::MedicationError: return "medication_error";
    case HallucinationType::ExamResultError: return "exam_result_error";
    case HallucinationType::TimeError: return "time_error";
    case HallucinationType::ValueError: return "value_error";
    case HallucinationType::NegationError: return "negation_error";
    case HallucinationType::InventedFact: return "invented_fact";
  }
  return "?";
}

std::optional<HallucinationType> parse_hallucination_type(std::string_view text) {
  for (auto t : kAllHallucinationTypes) {
    if (to_string(t) == text) return t;
  }
  return std::nullopt;
}

namespace assets {

std::string_view get(const std::string& name) {
  const auto& table = registry();
  auto it = table.find(name);
  if (it == table.end()) fail(ErrorKind::Config, "unknown asset '" + name + "'");
  return it->second;
}

}  // namespace assets

namespace text {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string trim(std::string_view s) {
  auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
  std::size_t b = 0, e = s.size();
  while (b < e && is_space(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && is_space(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string fold(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (unsigned char c : s) {
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      out.emplace_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

bool contains_word(std::string_view haystack, std::string_view word) {
  if (word.empty()) return false;
  const std::string h = lower(haystack);
  const std::string w = lower(word);
  auto is_word = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; };
  std::size_t pos = 0;
  while ((pos = h.find(w, pos)) != std::string::npos) {
    const bool left_ok = pos == 0 || !is_word(h[pos - 1]) || !is_word(w.front());
    const std::size_t end = pos + w.size();
    const bool right_ok = end == h.size() || !is_word(h[end]) || !is_word(w.back());
    if (left_ok && right_ok) return true;
    ++pos;
  }
  return false;
}

bool starts_with_ci(std::string_view s, std::string_view prefix) {
  if (prefix.size() > s.size()) return false;
  return lower(s.substr(0, prefix.size())) == lower(prefix);
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

std::string replace_all(std::string s, std::string_view from, std::string_view to) {
  if (from.empty()) return s;
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
  return s;
}

std::string format_fixed(double value, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, value);
  std::string out(buf);
  if (out == "-0" || out.rfind("-0.", 0) == 0) {
    // normalise negative zero so reports do not flip between "-0.000" and "0.000"
    bool all_zero = std::all_of(out.begin() + 1, out.end(), [](char c) { return c == '0' || c == '.'; });
    if (all_zero) out.erase(0, 1);
  }
  return out;
}

std::string format_double(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  if (ec != std::errc{}) return format_fixed(value, 17);
  return std::string(buf, ptr);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, std::string_view content) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(p.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot write '" + path + "'");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) fail(ErrorKind::Io, "short write to '" + path + "'");
}

}  // namespace text
}  // namespace faithcheck
