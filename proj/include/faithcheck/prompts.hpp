#pragma once

#include <map>
#include <string>

namespace faithcheck::prompts {

struct Rendered {
  std::string asset_id;  // "prompts/detect.txt@detect/1"
  std::string text;
};

// Substitutes ${name} placeholders in assets/prompts/<name>.txt. Unknown
// placeholders are a Config error.
Rendered render(const std::string& name, const std::map<std::string, std::string>& vars);

std::string version_of(const std::string& name);

}  // namespace faithcheck::prompts
