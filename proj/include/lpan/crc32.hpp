#pragma once

#include <cstddef>
#include <cstdint>

namespace lpan {

// IEEE 802.3 CRC-32 (reflected, poly 0xEDB88320), init/xorout 0xFFFFFFFF.
std::uint32_t crc32(const void* data, std::size_t len, std::uint32_t seed = 0);

}  // namespace lpan
