#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

namespace ael {

using Json = nlohmann::json;

// Rounds to 12 significant digits so serialized floats are stable under
// last-bit differences in accumulated sums.
double canonical_number(double value);

// Compact dump; object keys are already sorted by nlohmann::json.
std::string canonical_dump(const Json& doc);

std::uint64_t fnv1a64(std::string_view bytes);

// Hex digest of the canonical serialization.
std::string state_hash(const Json& doc);

}  // namespace ael
