#include "doctest.h"

#include "lpan/puf.hpp"

#include <cstdio>
#include <fstream>
#include <random>

using namespace lpan::puf;

namespace {

Challenge random_challenge(std::mt19937_64& rng) {
  Bits b(kChallengeBits);
  for (auto& v : b) v = static_cast<std::uint8_t>(rng() & 1);
  return Challenge(std::move(b));
}

}  // namespace

TEST_CASE("simulator is deterministic in the seed") {
  auto a = simulate_ro_puf(5, 8);
  auto b = simulate_ro_puf(5, 8);
  CHECK(a.frequencies.storage() == b.frequencies.storage());
  CHECK_THROWS_AS(simulate_ro_puf(1, 3), DatasetError);
}

TEST_CASE("different seeds give substantially different response maps") {
  auto a = simulate_ro_puf(1, 8);
  auto b = simulate_ro_puf(2, 8);
  std::mt19937_64 rng(99);
  std::size_t differing = 0, total = 0;
  for (int i = 0; i < 100; ++i) {
    Challenge c = random_challenge(rng);
    auto ra = evaluate(a, c), rb = evaluate(b, c);
    for (std::size_t k = 0; k < kResponseBits; ++k) {
      if (ra.bits[k] != rb.bits[k]) ++differing;
      ++total;
    }
  }
  CHECK(static_cast<double>(differing) / static_cast<double>(total) >= 0.30);
}

TEST_CASE("evaluate is deterministic and hand-traceable on the zero challenge") {
  auto m = simulate_ro_puf(7, 8);
  Challenge zero;
  auto r1 = evaluate(m, zero);
  auto r2 = evaluate(m, zero);
  CHECK(r1.bits == r2.bits);
  // Field value 0 selects pair (0, 1) in every bank.
  for (std::size_t bank = 0; bank < kBanks; ++bank)
    CHECK(r1.bits[bank] == (m.frequencies(bank, 0) > m.frequencies(bank, 1) ? 1 : 0));
}

TEST_CASE("flipping one 2-bit field changes at most one response bit") {
  auto m = simulate_ro_puf(13, 8);
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    Challenge c = random_challenge(rng);
    auto base = evaluate(m, c);
    const std::size_t field = rng() % kBanks;
    Challenge flipped = c;
    flipped.bits[2 * field] ^= 1;
    flipped.bits[2 * field + 1] ^= 1;
    auto r = evaluate(m, flipped);
    std::size_t delta = 0;
    for (std::size_t k = 0; k < kResponseBits; ++k)
      if (base.bits[k] != r.bits[k]) ++delta;
    CHECK(delta <= 1);
  }
}

TEST_CASE("generate_dataset basics") {
  auto m = simulate_ro_puf(3, 8);
  auto tiny = generate_dataset(m, 2, 1);
  CHECK(tiny.size() == 2);
  CHECK(tiny.entries[0].challenge.bits != tiny.entries[1].challenge.bits);
  CHECK_THROWS_AS(generate_dataset(m, 1, 1), DatasetError);

  auto a = generate_dataset(m, 64, 9);
  auto b = generate_dataset(m, 64, 9);
  CHECK(serialize_dataset(a) == serialize_dataset(b));
  a.validate();
}

TEST_CASE("inter-puf uniqueness near 50% over matching datasets") {
  auto m1 = simulate_ro_puf(100, 8);
  auto m2 = simulate_ro_puf(200, 8);
  std::mt19937_64 rng(8);
  std::size_t diff = 0, total = 0;
  for (int i = 0; i < 500; ++i) {
    Challenge c = random_challenge(rng);
    auto r1 = evaluate(m1, c), r2 = evaluate(m2, c);
    for (std::size_t k = 0; k < kResponseBits; ++k) {
      if (r1.bits[k] != r2.bits[k]) ++diff;
      ++total;
    }
  }
  const double frac = static_cast<double>(diff) / static_cast<double>(total);
  CHECK(frac > 0.35);
  CHECK(frac < 0.65);
}

TEST_CASE("csv round trip is identity") {
  auto ds = generate_dataset(simulate_ro_puf(17, 8), 32, 5);
  const std::string path = "puf_test.csv";
  save_csv(ds, path);
  auto back = load_csv(path);
  REQUIRE(back.size() == ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    CHECK(back.entries[i].challenge.bits == ds.entries[i].challenge.bits);
    CHECK(back.entries[i].response.bits == ds.entries[i].response.bits);
  }
  std::remove(path.c_str());
}

TEST_CASE("csv errors carry row numbers") {
  const std::string path = "puf_bad.csv";
  {
    std::ofstream f(path);
    f << "0101010101010101010101010101010,0101010101010101\n";  // 31-bit challenge
  }
  CHECK_THROWS_WITH_AS(load_csv(path), doctest::Contains("row 1"), DatasetError);
  {
    std::ofstream f(path);
    f << "01010101010101010101010101010101,0101010101010101\n";
    f << "01010101010101010101010101010101,1111010101010101\n";
  }
  CHECK_THROWS_WITH_AS(load_csv(path),
                       doctest::Contains("duplicate challenge at rows 1 and 2"),
                       DatasetError);
  {
    std::ofstream f(path);
    f << "0101010101010101010101010101010x,0101010101010101\n";
  }
  CHECK_THROWS_WITH_AS(load_csv(path), doctest::Contains("non-binary"), DatasetError);
  std::remove(path.c_str());
}

TEST_CASE("binary dataset cache round trip") {
  auto ds = generate_dataset(simulate_ro_puf(21, 8), 16, 2);
  const std::string path = "puf_test.lpan";
  save_dataset(ds, path);
  auto back = load_dataset(path);
  CHECK(serialize_dataset(back) == serialize_dataset(ds));
  std::remove(path.c_str());
}
