#include "lpan/transport.hpp"

#include "lpan/crc32.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <cstring>
#include <thread>

namespace lpan::net {

namespace {
constexpr std::uint8_t kMagic0 = 0x4C, kMagic1 = 0x50;
constexpr std::uint8_t kVersion = 1;
constexpr std::size_t kHeader = 5;  // magic(2) + version(1) + len(2)
}  // namespace

std::vector<std::uint8_t> encode_frame(const std::vector<std::uint8_t>& payload) {
  if (payload.size() > 0xFFFF) throw FrameError("payload too large");
  std::vector<std::uint8_t> f;
  f.reserve(kHeader + payload.size() + 4);
  f.push_back(kMagic0);
  f.push_back(kMagic1);
  f.push_back(kVersion);
  f.push_back(static_cast<std::uint8_t>(payload.size() >> 8));
  f.push_back(static_cast<std::uint8_t>(payload.size() & 0xFF));
  f.insert(f.end(), payload.begin(), payload.end());
  const std::uint32_t c = crc32(f.data(), f.size());
  for (int i = 3; i >= 0; --i) f.push_back(static_cast<std::uint8_t>(c >> (8 * i)));
  return f;
}

std::vector<std::uint8_t> decode_frame(const std::vector<std::uint8_t>& frame) {
  if (frame.size() < kHeader + 4) throw FrameError("frame too short");
  if (frame[0] != kMagic0 || frame[1] != kMagic1) throw FrameError("bad frame magic");
  if (frame[2] != kVersion) throw FrameError("bad frame version");
  const std::size_t len = (static_cast<std::size_t>(frame[3]) << 8) | frame[4];
  if (frame.size() != kHeader + len + 4) throw FrameError("frame length mismatch");
  std::uint32_t stored = 0;
  for (int i = 0; i < 4; ++i) stored = (stored << 8) | frame[kHeader + len + i];
  if (crc32(frame.data(), kHeader + len) != stored) throw FrameError("frame CRC mismatch");
  return std::vector<std::uint8_t>(frame.begin() + kHeader, frame.begin() + kHeader + len);
}

LoopbackResult run_session_loopback(proto::VerifierState& verifier,
                                    const proto::NodeState& node, double& clock,
                                    const FaultHooks& hooks) {
  LoopbackResult res{proto::Verdict::RejectTimeout, 0, 0, 0, false};

  proto::AuthRequest req{node.node_id()};
  auto req_wire = proto::encode_wire(req);
  res.framed_bytes += encode_frame(req_wire).size();
  res.payload_bytes += proto::payload_size(req);
  res.messages += 1;

  auto issued = verifier.on_request(req, clock);
  proto::ChallengeMsg challenge = issued.msg;
  auto ch_wire = proto::encode_wire(challenge);
  res.framed_bytes += encode_frame(ch_wire).size();
  res.payload_bytes += proto::payload_size(challenge);
  res.messages += 1;

  // The node sees what crossed the channel: 32-bit scalars, possibly forged.
  proto::ChallengeMsg seen = challenge;
  if (hooks.forge_lc) {
    if (auto forged = hooks.forge_lc()) seen.lc = *forged;
  }
  seen.lc = models::wire_round_trip(seen.lc);

  auto response = node.on_challenge(seen);
  if (!response) {
    verifier.expire_session(issued.session_id, clock);
    res.verdict = proto::Verdict::NodeAbortUnauthenticLC;
    return res;
  }

  proto::ResponseMsg rsp = *response;
  if (hooks.forge_lr) {
    if (auto forged = hooks.forge_lr(seen.lc)) rsp.lr = *forged;
  }
  rsp.lr = models::wire_round_trip(rsp.lr);

  clock += hooks.delay_response;
  if (hooks.drop_response) {
    clock += verifier.t_max() + 1.0;
    verifier.expire_session(issued.session_id, clock);
    res.verdict = proto::Verdict::RejectTimeout;
    return res;
  }

  auto rsp_wire = proto::encode_wire(rsp);
  auto rsp_frame = encode_frame(rsp_wire);
  res.framed_bytes += rsp_frame.size();
  res.payload_bytes += proto::payload_size(rsp);
  res.messages += 1;

  if (hooks.corrupt_response) {
    rsp_frame[kHeader] ^= 0x10;
    try {
      decode_frame(rsp_frame);
    } catch (const FrameError&) {
      // Verifier drops the corrupted frame; the session expires unanswered.
      clock += verifier.t_max() + 1.0;
      verifier.expire_session(issued.session_id, clock);
      res.verdict = proto::Verdict::RejectTimeout;
      return res;
    }
  }

  res.verdict = verifier.on_response(issued.session_id, rsp, clock);
  if (hooks.duplicate_response) {
    try {
      verifier.on_response(issued.session_id, rsp, clock);
    } catch (const proto::SessionError&) {
      res.duplicate_rejected = true;
    }
  }
  return res;
}

namespace {

bool read_exact(int fd, std::uint8_t* buf, std::size_t n, int timeout_ms) {
  std::size_t got = 0;
  while (got < n) {
    pollfd p{fd, POLLIN, 0};
    const int pr = ::poll(&p, 1, timeout_ms);
    if (pr <= 0) return false;
    const ssize_t r = ::read(fd, buf + got, n - got);
    if (r <= 0) return false;
    got += static_cast<std::size_t>(r);
  }
  return true;
}

bool write_all(int fd, const std::vector<std::uint8_t>& bytes) {
  std::size_t sent = 0;
  while (sent < bytes.size()) {
    const ssize_t w = ::write(fd, bytes.data() + sent, bytes.size() - sent);
    if (w <= 0) return false;
    sent += static_cast<std::size_t>(w);
  }
  return true;
}

// Reads one frame off the socket; empty optional on timeout/close/garbage.
std::optional<std::vector<std::uint8_t>> read_frame(int fd, int timeout_ms) {
  std::uint8_t header[kHeader];
  if (!read_exact(fd, header, kHeader, timeout_ms)) return std::nullopt;
  if (header[0] != kMagic0 || header[1] != kMagic1 || header[2] != kVersion)
    return std::nullopt;
  const std::size_t len = (static_cast<std::size_t>(header[3]) << 8) | header[4];
  std::vector<std::uint8_t> frame(header, header + kHeader);
  frame.resize(kHeader + len + 4);
  if (!read_exact(fd, frame.data() + kHeader, len + 4, timeout_ms)) return std::nullopt;
  try {
    return decode_frame(frame);
  } catch (const FrameError&) {
    return std::nullopt;
  }
}

void handle_connection(int fd, proto::VerifierState& verifier, const proto::Clock& clock,
                       bool verbose) {
  try {
    auto req_payload = read_frame(fd, 5000);
    if (!req_payload) return;
    auto msg = proto::decode_wire(*req_payload);
    const auto* req = std::get_if<proto::AuthRequest>(&msg);
    if (!req) return;
    if (verbose)
      std::fprintf(stderr, "[verifier] auth request from node %u\n", req->node_id);

    auto issued = verifier.on_request(*req, clock());
    if (!write_all(fd, encode_frame(proto::encode_wire(issued.msg)))) {
      verifier.expire_session(issued.session_id, clock());
      return;
    }

    const int wait_ms = static_cast<int>(verifier.t_max() * 1000.0) + 250;
    auto rsp_payload = read_frame(fd, wait_ms);
    proto::Verdict verdict;
    if (!rsp_payload) {
      verifier.expire_session(issued.session_id, clock());
      verdict = proto::Verdict::RejectTimeout;
    } else {
      auto rmsg = proto::decode_wire(*rsp_payload);
      const auto* rsp = std::get_if<proto::ResponseMsg>(&rmsg);
      if (!rsp) {
        verifier.expire_session(issued.session_id, clock());
        verdict = proto::Verdict::RejectTimeout;
      } else {
        verdict = verifier.on_response(issued.session_id, *rsp, clock());
      }
    }
    if (verbose)
      std::fprintf(stderr, "[verifier] verdict: %s\n", proto::verdict_name(verdict));
    // Diagnostic verdict byte; excluded from the 264-bit accounting.
    write_all(fd, encode_frame({static_cast<std::uint8_t>(verdict)}));
  } catch (const std::exception& e) {
    if (verbose) std::fprintf(stderr, "[verifier] session error: %s\n", e.what());
  }
}

}  // namespace

void serve_verifier(const std::string& address, std::uint16_t port,
                    proto::VerifierState& verifier, ServerHandle& handle,
                    const proto::Clock& clock, bool verbose) {
  int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) throw TransportError("socket() failed");
  int one = 1;
  ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, address.c_str(), &addr.sin_addr) != 1)
    throw TransportError("bad address: " + address);
  if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
    ::close(fd);
    throw TransportError("bind failed on port " + std::to_string(port));
  }
  if (::listen(fd, 16) != 0) {
    ::close(fd);
    throw TransportError("listen failed");
  }
  sockaddr_in bound{};
  socklen_t blen = sizeof bound;
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&bound), &blen);
  handle.listen_fd = fd;
  handle.port = ntohs(bound.sin_port);
  if (verbose)
    std::fprintf(stderr, "[verifier] waiting for a node at %s:%u\n", address.c_str(),
                 handle.port);

  std::vector<std::thread> workers;
  while (!handle.stop.load()) {
    pollfd p{fd, POLLIN, 0};
    const int pr = ::poll(&p, 1, 200);
    if (pr <= 0) continue;
    const int conn = ::accept(fd, nullptr, nullptr);
    if (conn < 0) continue;
    workers.emplace_back([conn, &verifier, &clock, verbose] {
      handle_connection(conn, verifier, clock, verbose);
      ::close(conn);
    });
  }
  for (auto& w : workers) w.join();
  ::close(fd);
  handle.listen_fd = -1;
}

NodeRunResult run_node(const std::string& address, std::uint16_t port,
                       const proto::NodeState& node, bool verbose) {
  int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) throw TransportError("socket() failed");
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, address.c_str(), &addr.sin_addr) != 1) {
    ::close(fd);
    throw TransportError("bad address: " + address);
  }
  if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
    ::close(fd);
    throw TransportError("cannot connect to " + address + ":" + std::to_string(port));
  }

  NodeRunResult res{proto::Verdict::RejectTimeout, false};
  try {
    if (!write_all(fd, encode_frame(proto::encode_wire(proto::AuthRequest{node.node_id()}))))
      throw TransportError("failed to send auth request");
    auto ch_payload = read_frame(fd, 10000);
    if (!ch_payload) throw TransportError("no challenge received");
    auto msg = proto::decode_wire(*ch_payload);
    const auto* ch = std::get_if<proto::ChallengeMsg>(&msg);
    if (!ch) throw TransportError("unexpected message in place of challenge");
    if (verbose) std::fprintf(stderr, "[node] received LC\n");

    auto response = node.on_challenge(*ch);
    if (!response) {
      if (verbose) std::fprintf(stderr, "[node] LC failed authenticity check, aborting\n");
      res.node_aborted = true;
      res.verdict = proto::Verdict::NodeAbortUnauthenticLC;
      ::close(fd);
      return res;
    }
    if (!write_all(fd, encode_frame(proto::encode_wire(*response))))
      throw TransportError("failed to send response");
    auto verdict_payload = read_frame(fd, 10000);
    if (verdict_payload && verdict_payload->size() == 1 && (*verdict_payload)[0] <= 3)
      res.verdict = static_cast<proto::Verdict>((*verdict_payload)[0]);
    if (verbose) std::fprintf(stderr, "[node] verdict: %s\n", proto::verdict_name(res.verdict));
  } catch (...) {
    ::close(fd);
    throw;
  }
  ::close(fd);
  return res;
}

}  // namespace lpan::net
