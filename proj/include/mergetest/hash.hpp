#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace mergetest {

// 64-bit FNV-1a; stable across platforms, used for config fingerprints and
// policy-file integrity checks.
std::uint64_t fnv1a64(std::string_view data);
std::string fnv1a64_hex(std::string_view data);

}  // namespace mergetest
