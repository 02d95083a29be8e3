#pragma once

#include <openssl/evp.h>

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <string_view>

#include "dmaudit/error.hpp"

namespace dmaudit {

struct Digest {
  std::string algorithm;  // "sha256"
  std::string hex;

  friend bool operator==(const Digest&, const Digest&) = default;
};

inline std::string to_hex(std::string_view bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (unsigned char c : bytes) {
    out.push_back(kDigits[c >> 4]);
    out.push_back(kDigits[c & 0x0f]);
  }
  return out;
}

// Incremental hash over OpenSSL EVP.
class Hasher {
 public:
  explicit Hasher(const char* algorithm = "sha256")
      : name_(algorithm), ctx_(EVP_MD_CTX_new(), &EVP_MD_CTX_free) {
    const EVP_MD* md = EVP_get_digestbyname(algorithm);
    if (md == nullptr || !ctx_ || EVP_DigestInit_ex(ctx_.get(), md, nullptr) != 1) {
      throw Error(std::string("digest unavailable: ") + algorithm);
    }
  }

  void update(std::string_view data) {
    if (!data.empty()) EVP_DigestUpdate(ctx_.get(), data.data(), data.size());
  }

  std::string finish_raw() {
    std::array<unsigned char, EVP_MAX_MD_SIZE> buf{};
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx_.get(), buf.data(), &len);
    return std::string(reinterpret_cast<const char*>(buf.data()), len);
  }

  Digest finish() { return Digest{name_, to_hex(finish_raw())}; }

 private:
  std::string name_;
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx_;
};

inline Digest sha256(std::string_view data) {
  Hasher h;
  h.update(data);
  return h.finish();
}

inline Digest file_sha256(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  Hasher h;
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    h.update(std::string_view(buf.data(), static_cast<std::size_t>(in.gcount())));
  }
  if (in.bad()) throw IoError("read failed: " + path.string());
  return h.finish();
}

// RFC 4648 base32, the encoding web archives use for CDX content digests.
inline std::string base32(std::string_view bytes) {
  static constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZ234567";
  std::string out;
  std::uint32_t buffer = 0;
  int bits = 0;
  for (unsigned char c : bytes) {
    buffer = (buffer << 8) | c;
    bits += 8;
    while (bits >= 5) {
      out.push_back(kAlphabet[(buffer >> (bits - 5)) & 0x1f]);
      bits -= 5;
    }
  }
  if (bits > 0) out.push_back(kAlphabet[(buffer << (5 - bits)) & 0x1f]);
  while (out.size() % 8 != 0) out.push_back('=');
  return out;
}

}  // namespace dmaudit
