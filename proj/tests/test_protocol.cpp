#include "doctest.h"

#include "lpan/protocol.hpp"

#include <cstdio>
#include <random>
#include <set>

using namespace lpan;
using namespace lpan::proto;

namespace {

// Untrained bundle; protocol mechanics do not depend on training quality.
models::ModelBundle tiny_bundle(std::size_t n = 8, std::uint64_t seed = 1) {
  models::ModelBundle b;
  b.dnn = models::make_dnn_generator(n, seed);
  b.enc1 = models::make_encoder1(seed + 1);
  b.dec1 = models::make_decoder1(seed + 2);
  b.benc2 = models::make_basic_encoder2(seed + 3);
  b.xenc2 = models::ExtendedEncoder2{b.benc2, models::make_encoder2_extension(seed + 4)};
  b.dec2 = models::make_decoder2(seed + 5);
  b.meta.n = n;
  b.meta.lc_box.lo = {-10, -10, -10, -10};
  b.meta.lc_box.hi = {10, 10, 10, 10};
  return b;
}

}  // namespace

TEST_CASE("hamming distance") {
  CHECK(hamming({1, 0, 1}, {1, 0, 1}) == 0);
  CHECK(hamming({0, 0, 0, 0}, {1, 1, 1, 1}) == 4);
  CHECK_THROWS_AS(hamming({1}, {1, 0}), WireError);

  // popcount-of-xor oracle on random 32-bit words
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 200; ++trial) {
    const std::uint32_t a = static_cast<std::uint32_t>(rng());
    const std::uint32_t b = static_cast<std::uint32_t>(rng());
    puf::Bits ba(32), bb(32);
    for (int i = 0; i < 32; ++i) {
      ba[i] = (a >> i) & 1;
      bb[i] = (b >> i) & 1;
    }
    CHECK(hamming(ba, bb) == static_cast<std::size_t>(__builtin_popcount(a ^ b)));
  }
}

TEST_CASE("wire encoding sizes and round trip") {
  AuthRequest req{0x5A};
  ChallengeMsg ch{{1.5, -2.25, 0.0, 1e-3}};
  ResponseMsg rsp{{-0.5, 3.75, 12.0, -1e-2}};

  auto req_b = encode_wire(req);
  auto ch_b = encode_wire(ch);
  auto rsp_b = encode_wire(rsp);
  CHECK(req_b.size() == 2);   // tag + 1 payload byte
  CHECK(ch_b.size() == 17);   // tag + 16 payload bytes
  CHECK(rsp_b.size() == 17);
  CHECK(payload_size(req) + payload_size(ch) + payload_size(rsp) == 33);  // 264 bits

  CHECK(std::get<AuthRequest>(decode_wire(req_b)).node_id == 0x5A);
  auto ch2 = std::get<ChallengeMsg>(decode_wire(ch_b));
  auto rsp2 = std::get<ResponseMsg>(decode_wire(rsp_b));
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(ch2.lc[i] == models::wire_round_trip(ch.lc)[i]);
    CHECK(rsp2.lr[i] == models::wire_round_trip(rsp.lr)[i]);
  }
}

TEST_CASE("wire round trip identity on random messages") {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(-100.0, 100.0);
  for (int i = 0; i < 10000; ++i) {
    ChallengeMsg m;
    for (auto& v : m.lc) v = static_cast<double>(static_cast<float>(u(rng)));
    auto back = std::get<ChallengeMsg>(decode_wire(encode_wire(m)));
    CHECK(back.lc == m.lc);
  }
}

TEST_CASE("wire decode rejects malformed input") {
  CHECK_THROWS_AS(decode_wire({}), WireError);
  CHECK_THROWS_AS(decode_wire({0x09, 0x00}), WireError);
  CHECK_THROWS_AS(decode_wire({0x02, 0x00, 0x01}), WireError);
  CHECK_THROWS_AS(decode_wire({0x01, 0x00, 0x01}), WireError);
}

TEST_CASE("verifier never reuses an index and exhausts the pool") {
  auto bundle = tiny_bundle(8);
  VerifierState vs(bundle, 2.0, 42);
  std::set<std::size_t> seen;
  for (int i = 0; i < 8; ++i) {
    auto issued = vs.on_request(AuthRequest{1}, 0.0);
    seen.insert(vs.transcripts().back().crp_index);
    vs.expire_session(issued.session_id, 0.1);
  }
  CHECK(seen.size() == 8);
  CHECK(vs.remaining_indices() == 0);
  CHECK_THROWS_AS(vs.on_request(AuthRequest{1}, 0.0), PoolExhausted);
}

TEST_CASE("index no-reuse persists across restarts") {
  auto bundle = tiny_bundle(8);
  const std::string state = "verifier_state_test.txt";
  std::remove(state.c_str());
  std::set<std::size_t> seen;
  {
    VerifierState vs(bundle, 2.0, 7, state);
    for (int i = 0; i < 3; ++i) {
      auto issued = vs.on_request(AuthRequest{1}, 0.0);
      seen.insert(vs.transcripts().back().crp_index);
      vs.expire_session(issued.session_id, 0.1);
    }
  }
  {
    VerifierState vs(bundle, 2.0, 7, state);
    CHECK(vs.remaining_indices() == 5);
    for (int i = 0; i < 5; ++i) {
      auto issued = vs.on_request(AuthRequest{1}, 0.0);
      CHECK(seen.insert(vs.transcripts().back().crp_index).second);  // all fresh
      vs.expire_session(issued.session_id, 0.1);
    }
    CHECK_THROWS_AS(vs.on_request(AuthRequest{1}, 0.0), PoolExhausted);
  }
  {
    // Mismatched seed must be refused rather than silently reusing indices.
    CHECK_THROWS_AS(VerifierState(bundle, 2.0, 8, state), SessionError);
  }
  std::remove(state.c_str());
}

TEST_CASE("verifier timer: late response rejected, session single-use") {
  auto bundle = tiny_bundle(8);
  VerifierState vs(bundle, 2.0, 3);
  auto issued = vs.on_request(AuthRequest{1}, 100.0);
  ResponseMsg rsp{{0, 0, 0, 0}};
  CHECK(vs.on_response(issued.session_id, rsp, 102.0 + 1e-9) == Verdict::RejectTimeout);
  // Session closed either way; replays into it fail.
  CHECK_THROWS_AS(vs.on_response(issued.session_id, rsp, 102.5), SessionError);
  CHECK_THROWS_AS(vs.on_response(999, rsp, 0.0), SessionError);
}

TEST_CASE("on-time response judged by response hamming distance") {
  auto bundle = tiny_bundle(8);
  VerifierState vs(bundle, 2.0, 3);
  auto issued = vs.on_request(AuthRequest{1}, 0.0);
  const std::size_t index = vs.transcripts().back().crp_index;
  auto expected = models::generate_crp(bundle.dnn, index).second;

  ResponseMsg rsp{{0.1, 0.2, 0.3, 0.4}};
  auto decoded = models::binarize(models::decode_response(bundle.dec1, rsp.lr));
  auto v = vs.on_response(issued.session_id, rsp, 1.0);
  if (hamming(expected.bits, decoded) == 0)
    CHECK(v == Verdict::Accept);
  else
    CHECK(v == Verdict::RejectResponseMismatch);
}

TEST_CASE("transcripts record three messages and a verdict") {
  auto bundle = tiny_bundle(8);
  VerifierState vs(bundle, 2.0, 3);
  auto issued = vs.on_request(AuthRequest{9}, 0.5);
  vs.on_response(issued.session_id, ResponseMsg{{0, 0, 0, 0}}, 1.0);
  auto ts = vs.take_transcripts();
  REQUIRE(ts.size() == 1);
  CHECK(ts[0].entries.size() == 3);
  CHECK(ts[0].entries[0].direction == Direction::NodeToVerifier);
  CHECK(ts[0].entries[1].direction == Direction::VerifierToNode);
  CHECK(ts[0].entries[2].direction == Direction::NodeToVerifier);
  CHECK(ts[0].verdict.has_value());
  std::size_t payload = 0;
  for (const auto& e : ts[0].entries) payload += e.payload.size() - 1;  // minus tag
  CHECK(payload == 33);

  export_transcripts(ts, "transcript_test.txt");
  std::remove("transcript_test.txt");
}
