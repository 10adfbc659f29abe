#pragma once

#include <span>
#include <string>
#include <string_view>

namespace patchlab {

// Lowercase hex SHA-256 digest.
std::string sha256_hex(std::string_view bytes);
std::string sha256_hex(std::span<const double> values);

}  // namespace patchlab
