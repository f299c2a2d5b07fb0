#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

namespace ff {

// Incremental SHA-256 (OpenSSL EVP underneath), hex-encoded output.
class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(const void* data, std::size_t len);
  void update(std::string_view s) { update(s.data(), s.size()); }
  // Finalizes; the object must not be updated afterwards.
  std::string hex();

 private:
  void* ctx_;
};

std::string sha256_hex(const void* data, std::size_t len);
std::string sha256_hex(std::string_view s);

}  // namespace ff
