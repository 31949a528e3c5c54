#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace faithcheck::segment {

struct SentenceUnit {
  int index = 0;
  std::string text;       // == document.substr(start, end - start)
  std::size_t start = 0;  // byte offsets into the source document
  std::size_t end = 0;
};

class Segmenter {
 public:
  virtual ~Segmenter() = default;
  virtual std::vector<SentenceUnit> segment(std::string_view document) const = 0;
};

// Terminal punctuation followed by whitespace and an uppercase letter, digit
// or opening bracket/quote ends a sentence, except after guarded
// abbreviations and list numbers. Blank lines, bullets and "Heading:" lines
// also start a new unit.
class RuleSegmenter : public Segmenter {
 public:
  RuleSegmenter();
  std::vector<SentenceUnit> segment(std::string_view document) const override;

 private:
  std::vector<std::string> abbreviations_;
};

std::vector<SentenceUnit> segment(std::string_view document);

}  // namespace faithcheck::segment
