#pragma once

#include "lpan/matrix.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace lpan::puf {

using Bits = std::vector<std::uint8_t>;  // entries are 0 or 1

constexpr std::size_t kChallengeBits = 32;
constexpr std::size_t kResponseBits = 16;
constexpr std::size_t kBanks = 16;

struct Challenge {
  Bits bits;  // length exactly 32
  explicit Challenge(Bits b);
  Challenge() : bits(kChallengeBits, 0) {}
  bool operator==(const Challenge& o) const { return bits == o.bits; }
};

struct Response {
  Bits bits;  // length exactly 16
  explicit Response(Bits b);
  Response() : bits(kResponseBits, 0) {}
  bool operator==(const Response& o) const { return bits == o.bits; }
};

struct Crp {
  Challenge challenge;
  Response response;
};

struct CrpDataset {
  std::vector<Crp> entries;
  std::size_t size() const { return entries.size(); }
  // Throws if challenges are not pairwise distinct or fewer than 2 entries.
  void validate() const;
};

// Simulated ring-oscillator PUF: 16 banks of K oscillators with fixed
// per-device frequencies. A 32-bit challenge selects one oscillator pair per
// bank; each response bit is the frequency comparison of that pair.
struct RoPufModel {
  Matrix frequencies;  // kBanks x K, positive
  std::uint64_t seed = 0;
  std::size_t oscillators() const { return frequencies.cols(); }
};

RoPufModel simulate_ro_puf(std::uint64_t seed, std::size_t oscillators_per_bank);

// Bank i reads 2-bit field v from the challenge and compares oscillators
// (v, (v + 1 + v mod 2) mod K). Deterministic and noise-free.
Response evaluate(const RoPufModel& model, const Challenge& c);

CrpDataset generate_dataset(const RoPufModel& model, std::size_t n, std::uint64_t seed);

// CSV rows "challenge_bits,response_bits" as 0/1 strings (32 and 16 chars).
CrpDataset load_csv(const std::string& path);
void save_csv(const CrpDataset& dataset, const std::string& path);

std::vector<std::uint8_t> serialize_dataset(const CrpDataset& dataset);
CrpDataset deserialize_dataset(const std::vector<std::uint8_t>& bytes);
void save_dataset(const CrpDataset& dataset, const std::string& path);
CrpDataset load_dataset(const std::string& path);

struct DatasetError : std::runtime_error {
  explicit DatasetError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace lpan::puf
