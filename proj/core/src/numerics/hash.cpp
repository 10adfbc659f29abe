#include "patchlab/numerics/hash.hpp"

#include <array>
#include <cstdio>

#include <openssl/evp.h>

#include "patchlab/error.hpp"

namespace patchlab {
namespace {

std::string digest(const void* data, std::size_t size) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  require(EVP_Digest(data, size, md.data(), &len, EVP_sha256(), nullptr) == 1, ErrorCode::kIo,
          "SHA-256 digest failed");
  std::string hex;
  hex.reserve(2 * len);
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof(buf), "%02x", md[i]);
    hex.append(buf, 2);
  }
  return hex;
}

}  // namespace

std::string sha256_hex(std::string_view bytes) { return digest(bytes.data(), bytes.size()); }

std::string sha256_hex(std::span<const double> values) {
  return digest(values.data(), values.size() * sizeof(double));
}

}  // namespace patchlab
