#pragma once

#include "lpan/nn.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace lpan {

// Versioned binary container shared by model bundles, dataset caches and
// checkpoints. Layout:
//   "LPAN" | u16 version | u32 section count |
//   per section: 4-char tag | u64 payload length | payload bytes |
//   u32 CRC-32 over everything before it.
// All integers and doubles little-endian. Load rejects bad magic, version
// or CRC.
class Container {
 public:
  static constexpr std::uint16_t kVersion = 1;

  void set(const std::string& tag, std::vector<std::uint8_t> payload);
  bool has(const std::string& tag) const;
  const std::vector<std::uint8_t>& get(const std::string& tag) const;

  std::vector<std::uint8_t> serialize() const;
  static Container deserialize(const std::vector<std::uint8_t>& bytes);

  void save(const std::string& path) const;
  static Container load(const std::string& path);

 private:
  std::map<std::string, std::vector<std::uint8_t>> sections_;
};

// Byte-stream helpers used by every serialized format in the project.
struct ByteWriter {
  std::vector<std::uint8_t> bytes;
  void u8(std::uint8_t v);
  void u16(std::uint16_t v);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f64(double v);
  void raw(const void* p, std::size_t n);
};

struct ByteReader {
  const std::vector<std::uint8_t>* bytes;
  std::size_t pos = 0;
  explicit ByteReader(const std::vector<std::uint8_t>& b) : bytes(&b) {}
  std::uint8_t u8();
  std::uint16_t u16();
  std::uint32_t u32();
  std::uint64_t u64();
  double f64();
  void raw(void* p, std::size_t n);
  bool done() const { return pos == bytes->size(); }
};

std::vector<std::uint8_t> serialize_mlp(const nn::Mlp& mlp);
nn::Mlp deserialize_mlp(const std::vector<std::uint8_t>& bytes);

// Optimizer state for checkpoint sections; the moments must match the mlp
// the state was created for.
std::vector<std::uint8_t> serialize_adam(const nn::AdamState& state);
nn::AdamState deserialize_adam(const std::vector<std::uint8_t>& bytes);

struct ContainerError : std::runtime_error {
  explicit ContainerError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace lpan
