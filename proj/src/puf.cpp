#include "lpan/puf.hpp"

#include "lpan/container.hpp"

#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

namespace lpan::puf {

Challenge::Challenge(Bits b) : bits(std::move(b)) {
  if (bits.size() != kChallengeBits)
    throw DatasetError("challenge must be exactly 32 bits");
}

Response::Response(Bits b) : bits(std::move(b)) {
  if (bits.size() != kResponseBits) throw DatasetError("response must be exactly 16 bits");
}

void CrpDataset::validate() const {
  if (entries.size() < 2) throw DatasetError("dataset needs at least 2 entries");
  std::set<Bits> seen;
  for (std::size_t i = 0; i < entries.size(); ++i)
    if (!seen.insert(entries[i].challenge.bits).second)
      throw DatasetError("duplicate challenge at entry " + std::to_string(i));
}

RoPufModel simulate_ro_puf(std::uint64_t seed, std::size_t oscillators_per_bank) {
  if (oscillators_per_bank < 4)
    throw DatasetError("need at least 4 oscillators per bank");
  RoPufModel m;
  m.seed = seed;
  m.frequencies = Matrix(kBanks, oscillators_per_bank);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> freq(100.0, 1.0);
  for (double& f : m.frequencies.storage()) {
    do {
      f = freq(rng);
    } while (f <= 0.0);
  }
  return m;
}

Response evaluate(const RoPufModel& model, const Challenge& c) {
  const std::size_t k = model.oscillators();
  Bits out(kResponseBits);
  for (std::size_t bank = 0; bank < kBanks; ++bank) {
    const std::size_t v = static_cast<std::size_t>(c.bits[2 * bank]) * 2 + c.bits[2 * bank + 1];
    const std::size_t a = v % k;
    const std::size_t b = (v + 1 + (v % 2)) % k;
    out[bank] = model.frequencies(bank, a) > model.frequencies(bank, b) ? 1 : 0;
  }
  return Response(std::move(out));
}

CrpDataset generate_dataset(const RoPufModel& model, std::size_t n, std::uint64_t seed) {
  if (n < 2 || n > (1ull << 32)) throw DatasetError("dataset size out of range");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::uint32_t> word;
  std::set<std::uint32_t> used;
  CrpDataset ds;
  while (ds.entries.size() < n) {
    const std::uint32_t w = word(rng);
    if (!used.insert(w).second) continue;
    Bits cb(kChallengeBits);
    for (std::size_t i = 0; i < kChallengeBits; ++i)
      cb[i] = (w >> (kChallengeBits - 1 - i)) & 1u;
    Challenge c(std::move(cb));
    Response r = evaluate(model, c);
    ds.entries.push_back(Crp{std::move(c), std::move(r)});
  }
  ds.validate();
  return ds;
}

static Bits parse_bits(const std::string& s, std::size_t expect, std::size_t row,
                       const char* what) {
  if (s.size() != expect)
    throw DatasetError("row " + std::to_string(row) + ": " + what + " has " +
                       std::to_string(s.size()) + " bits, expected " +
                       std::to_string(expect));
  Bits b(expect);
  for (std::size_t i = 0; i < expect; ++i) {
    if (s[i] != '0' && s[i] != '1')
      throw DatasetError("row " + std::to_string(row) + ": non-binary character in " +
                         std::string(what));
    b[i] = s[i] == '1' ? 1 : 0;
  }
  return b;
}

CrpDataset load_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DatasetError("cannot open: " + path);
  CrpDataset ds;
  std::map<Bits, std::size_t> first_row;
  std::string line;
  std::size_t row = 0;
  while (std::getline(f, line)) {
    ++row;
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos)
      throw DatasetError("row " + std::to_string(row) + ": missing comma");
    Bits cb = parse_bits(line.substr(0, comma), kChallengeBits, row, "challenge");
    Bits rb = parse_bits(line.substr(comma + 1), kResponseBits, row, "response");
    auto [it, inserted] = first_row.emplace(cb, row);
    if (!inserted)
      throw DatasetError("duplicate challenge at rows " + std::to_string(it->second) +
                         " and " + std::to_string(row));
    ds.entries.push_back(Crp{Challenge(std::move(cb)), Response(std::move(rb))});
  }
  ds.validate();
  return ds;
}

void save_csv(const CrpDataset& dataset, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw DatasetError("cannot open for write: " + path);
  for (const auto& e : dataset.entries) {
    for (auto b : e.challenge.bits) f << static_cast<char>('0' + b);
    f << ',';
    for (auto b : e.response.bits) f << static_cast<char>('0' + b);
    f << '\n';
  }
}

std::vector<std::uint8_t> serialize_dataset(const CrpDataset& dataset) {
  ByteWriter w;
  w.u32(static_cast<std::uint32_t>(dataset.entries.size()));
  for (const auto& e : dataset.entries) {
    for (auto b : e.challenge.bits) w.u8(b);
    for (auto b : e.response.bits) w.u8(b);
  }
  return std::move(w.bytes);
}

CrpDataset deserialize_dataset(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes);
  const std::uint32_t n = r.u32();
  CrpDataset ds;
  for (std::uint32_t i = 0; i < n; ++i) {
    Bits cb(kChallengeBits), rb(kResponseBits);
    for (auto& b : cb) b = r.u8();
    for (auto& b : rb) b = r.u8();
    ds.entries.push_back(Crp{Challenge(std::move(cb)), Response(std::move(rb))});
  }
  ds.validate();
  return ds;
}

void save_dataset(const CrpDataset& dataset, const std::string& path) {
  Container c;
  c.set("crps", serialize_dataset(dataset));
  c.save(path);
}

CrpDataset load_dataset(const std::string& path) {
  return deserialize_dataset(Container::load(path).get("crps"));
}

}  // namespace lpan::puf
