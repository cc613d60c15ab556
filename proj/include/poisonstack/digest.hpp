#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace poisonstack {

std::string sha1_hex(std::span<const std::uint8_t> bytes);
std::string sha1_hex(std::string_view text);

// Digest git assigns to a blob: sha1("blob <size>\0" + content).
std::string git_blob_digest(std::span<const std::uint8_t> bytes);

}  // namespace poisonstack
