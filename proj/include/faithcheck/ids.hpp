#pragma once

#include <string>
#include <string_view>

#include "faithcheck/hash.hpp"

namespace faithcheck {

// Stable across runs: derived only from (patient, entity type, canonical name).
inline std::string entity_id(std::string_view patient_id, std::string_view etype, std::string_view canonical_name) {
  return Digest().add(patient_id).add(etype).add(canonical_name).hex().substr(0, 12);
}

// Evidence citation marker embedded in judge reasoning, e.g. "[ent:3fa91c0b2d7e]".
inline std::string citation_marker(std::string_view id) { return "[ent:" + std::string(id) + "]"; }

}  // namespace faithcheck
