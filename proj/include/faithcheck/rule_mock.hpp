#pragma once

#include <string>

#include "faithcheck/llm.hpp"
#include "faithcheck/types.hpp"

namespace faithcheck::mock {

// Offline stand-in that answers every pipeline stage from the prompt alone,
// using the shipped vocabulary: keyword extraction, fact-class applicability,
// typed rewrite rules and a token-overlap judge. Pure function of the
// request, so it is safe under any concurrency.
class RuleBasedBackend : public llm::Backend {
 public:
  std::string id() const override { return "mock:rules"; }
  bool deterministic() const override { return true; }
  llm::ChatResponse complete(const llm::ChatRequest& request) override;
};

// Rule rewrite used by the "generate" stage; empty when no rule applies.
// `variant` (the regeneration round) selects an alternative rewrite.
std::string rewrite_sentence(const std::string& sentence, HallucinationType type, const std::string& patient_id,
                             int variant = 0);

// Value of "KEY: value" on its own line, or the block after "KEY:\n".
std::string prompt_field(const std::string& prompt, const std::string& key);
std::string prompt_block(const std::string& prompt, const std::string& key);

}  // namespace faithcheck::mock
