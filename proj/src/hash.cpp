#include "prefdata/hash.hpp"

#include <openssl/evp.h>

#include <array>
#include <memory>
#include <stdexcept>

namespace prefdata {

namespace {

using Digest = std::array<unsigned char, 32>;

struct MdCtxDeleter {
  void operator()(EVP_MD_CTX* ctx) const { EVP_MD_CTX_free(ctx); }
};

Digest sha256_parts(std::initializer_list<std::string_view> parts) {
  std::unique_ptr<EVP_MD_CTX, MdCtxDeleter> ctx(EVP_MD_CTX_new());
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256: digest init failed");
  }
  bool first = true;
  for (std::string_view part : parts) {
    if (!first) {
      constexpr unsigned char sep = 0x1f;
      EVP_DigestUpdate(ctx.get(), &sep, 1);
    }
    first = false;
    EVP_DigestUpdate(ctx.get(), part.data(), part.size());
  }
  Digest out{};
  unsigned int len = 0;
  if (EVP_DigestFinal_ex(ctx.get(), out.data(), &len) != 1 || len != out.size()) {
    throw std::runtime_error("sha256: digest final failed");
  }
  return out;
}

std::string hex(const unsigned char* bytes, std::size_t n) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string s(n * 2, '0');
  for (std::size_t i = 0; i < n; ++i) {
    s[2 * i] = kDigits[bytes[i] >> 4];
    s[2 * i + 1] = kDigits[bytes[i] & 0xf];
  }
  return s;
}

}  // namespace

std::string sha256_hex(std::string_view data) {
  const Digest d = sha256_parts({data});
  return hex(d.data(), d.size());
}

std::uint64_t stable_hash64(std::initializer_list<std::string_view> parts) {
  const Digest d = sha256_parts(parts);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v = (v << 8) | d[static_cast<std::size_t>(i)];
  return v;
}

double hash_fraction(std::initializer_list<std::string_view> parts) {
  return static_cast<double>(stable_hash64(parts) >> 11) * 0x1.0p-53;
}

std::string to_hex16(std::uint64_t value) {
  unsigned char bytes[8];
  for (int i = 7; i >= 0; --i) {
    bytes[i] = static_cast<unsigned char>(value & 0xff);
    value >>= 8;
  }
  return hex(bytes, 8);
}

std::string make_response_id(std::string_view prompt_id, Origin origin, int sample_index, std::string_view text) {
  const std::string index = std::to_string(sample_index);
  return to_hex16(stable_hash64({prompt_id, to_string(origin), index, text}));
}

std::string text_key(std::string_view text) { return to_hex16(stable_hash64({"text", text})); }

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer over the combined state
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace prefdata
