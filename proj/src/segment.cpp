#include "faithcheck/segment.hpp"

#include <algorithm>
#include <cctype>

#include "faithcheck/text.hpp"

namespace faithcheck::segment {

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; }
bool is_terminal(char c) { return c == '.' || c == '!' || c == '?'; }
bool is_closer(char c) { return c == ')' || c == '"' || c == '\'' || c == ']'; }

bool starts_unit(std::string_view s, std::size_t i) {
  if (i >= s.size()) return true;
  const auto c = static_cast<unsigned char>(s[i]);
  return std::isupper(c) || std::isdigit(c) || c == '(' || c == '"' || c == '[' || c == '-' || c == '*';
}

bool bullet_at(std::string_view s, std::size_t i) {
  if (i >= s.size()) return false;
  if ((s[i] == '-' || s[i] == '*') && i + 1 < s.size() && s[i + 1] == ' ') return true;
  std::size_t j = i;
  while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) ++j;
  return j > i && j + 1 < s.size() && (s[j] == '.' || s[j] == ')') && s[j + 1] == ' ';
}

bool heading_at(std::string_view s, std::size_t i) {
  const auto nl = s.find('\n', i);
  const auto line = s.substr(i, nl == std::string_view::npos ? std::string_view::npos : nl - i);
  const auto colon = line.find(':');
  if (colon == std::string_view::npos || colon == 0 || colon > 40) return false;
  if (!std::isupper(static_cast<unsigned char>(line[0]))) return false;
  return std::all_of(line.begin(), line.begin() + static_cast<std::ptrdiff_t>(colon), [](char c) {
    return std::isalpha(static_cast<unsigned char>(c)) || c == ' ' || c == '/' || c == '-';
  });
}

}  // namespace

RuleSegmenter::RuleSegmenter()
    : abbreviations_{"dr", "mr", "mrs", "ms", "vs", "e.g", "i.e", "approx", "b.i.d", "t.i.d", "q.i.d", "q.d",
                     "p.o", "no", "fig", "s/p", "y.o"} {}

std::vector<SentenceUnit> RuleSegmenter::segment(std::string_view s) const {
  std::vector<SentenceUnit> units;
  std::size_t start = std::string_view::npos;

  auto flush = [&](std::size_t end) {
    if (start == std::string_view::npos) return;
    while (end > start && is_space(s[end - 1])) --end;
    if (end > start) {
      units.push_back({static_cast<int>(units.size()), std::string(s.substr(start, end - start)), start, end});
    }
    start = std::string_view::npos;
  };

  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    if (start == std::string_view::npos) {
      if (!is_space(c)) start = i;
      else continue;
    }
    if (c == '\n') {
      // blank line, bullet, or heading on the next line breaks the unit
      std::size_t j = i + 1;
      bool blank = false;
      while (j < s.size() && is_space(s[j])) {
        if (s[j] == '\n') blank = true;
        ++j;
      }
      if (blank || j >= s.size() || bullet_at(s, j) || heading_at(s, j)) {
        flush(i);
        i = j - 1;
      }
      continue;
    }
    if (!is_terminal(c)) continue;

    std::size_t j = i + 1;
    while (j < s.size() && (is_terminal(s[j]) || is_closer(s[j]))) ++j;
    if (j < s.size() && !is_space(s[j])) continue;  // "98.6", "e.g.,", "a/b.c"
    std::size_t k = j;
    while (k < s.size() && is_space(s[k]) && s[k] != '\n') ++k;
    if (k < s.size() && s[k] == '\n') {
      flush(j);
      i = j - 1;
      continue;
    }
    if (k < s.size() && !starts_unit(s, k)) continue;

    if (c == '.') {
      // word before the period
      std::size_t w = i;
      while (w > start && !is_space(s[w - 1])) --w;
      std::string word = text::lower(s.substr(w, i - w));
      while (!word.empty() && (word.front() == '(' || word.front() == '"')) word.erase(word.begin());
      const bool list_number = !word.empty() && std::all_of(word.begin(), word.end(), ::isdigit) && w == start;
      const bool abbreviation = std::find(abbreviations_.begin(), abbreviations_.end(), word) != abbreviations_.end();
      const bool initial = word.size() == 1 && std::isalpha(static_cast<unsigned char>(word[0])) && k < s.size() &&
                           std::isupper(static_cast<unsigned char>(s[k]));
      if (list_number) continue;
      if (abbreviation && (word != "no" || (k < s.size() && std::isdigit(static_cast<unsigned char>(s[k]))))) {
        continue;  // "No." only counts as an abbreviation before a number
      }
      if (initial) continue;
    }
    flush(j);
    i = j - 1;
  }
  flush(s.size());
  return units;
}

std::vector<SentenceUnit> segment(std::string_view document) { return RuleSegmenter().segment(document); }

}  // namespace faithcheck::segment
