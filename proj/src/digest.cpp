#include "poisonstack/digest.hpp"

#include <openssl/evp.h>

#include <array>
#include <memory>

#include "poisonstack/errors.hpp"

namespace poisonstack {

namespace {

class Sha1 {
 public:
  Sha1() : ctx_(EVP_MD_CTX_new(), &EVP_MD_CTX_free) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_sha1(), nullptr) != 1)
      throw IoError("sha1 initialisation failed");
  }
  void update(const void* data, std::size_t n) {
    if (n && EVP_DigestUpdate(ctx_.get(), data, n) != 1) throw IoError("sha1 update failed");
  }
  std::string hex() {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(ctx_.get(), md.data(), &len) != 1) throw IoError("sha1 final failed");
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
      out.push_back(kHex[md[i] >> 4]);
      out.push_back(kHex[md[i] & 0xf]);
    }
    return out;
  }

 private:
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx_;
};

}  // namespace

std::string sha1_hex(std::span<const std::uint8_t> bytes) {
  Sha1 h;
  h.update(bytes.data(), bytes.size());
  return h.hex();
}

std::string sha1_hex(std::string_view text) {
  Sha1 h;
  h.update(text.data(), text.size());
  return h.hex();
}

std::string git_blob_digest(std::span<const std::uint8_t> bytes) {
  Sha1 h;
  const std::string header = "blob " + std::to_string(bytes.size());
  h.update(header.data(), header.size() + 1);  // includes the NUL
  h.update(bytes.data(), bytes.size());
  return h.hex();
}

}  // namespace poisonstack
