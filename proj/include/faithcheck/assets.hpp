#pragma once

#include <map>
#include <string>
#include <string_view>

namespace faithcheck::assets {

// Text assets compiled in from assets/ (keyed by path relative to assets/).
const std::map<std::string, std::string_view>& registry();

// Throws Config if the asset is unknown.
std::string_view get(const std::string& name);

}  // namespace faithcheck::assets
