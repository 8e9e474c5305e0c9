#pragma once

#include "lpan/protocol.hpp"

#include <atomic>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace lpan::net {

// [0x4C 0x50][version][len u16 BE][payload][crc32 BE over magic..payload]
std::vector<std::uint8_t> encode_frame(const std::vector<std::uint8_t>& payload);
std::vector<std::uint8_t> decode_frame(const std::vector<std::uint8_t>& frame);

struct FrameError : std::runtime_error {
  explicit FrameError(const std::string& what) : std::runtime_error(what) {}
};

// Fault hooks for the loopback channel; applied to the node->verifier
// response leg unless noted. Delays advance the injected clock.
struct FaultHooks {
  bool drop_response = false;
  double delay_response = 0.0;
  bool corrupt_response = false;    // flips one payload bit inside the frame
  bool duplicate_response = false;  // delivers the response frame twice
  // Replaces the challenge LC the node sees (verifier impersonation).
  std::function<std::optional<models::LatentChallenge>()> forge_lc;
  // Replaces the LR the verifier sees (node impersonation / replay).
  std::function<std::optional<models::LatentResponse>(const models::LatentChallenge&)>
      forge_lr;
};

struct LoopbackResult {
  proto::Verdict verdict;
  std::size_t messages = 0;       // protocol messages delivered
  std::size_t payload_bytes = 0;  // paper accounting: type tags excluded
  std::size_t framed_bytes = 0;   // what actually crossed the wire
  bool duplicate_rejected = false;
};

// Drives one full three-message session over a bit-exact in-process channel
// with an injectable clock and fault hooks.
LoopbackResult run_session_loopback(proto::VerifierState& verifier,
                                    const proto::NodeState& node, double& clock,
                                    const FaultHooks& hooks = {});

// TCP demo (functional reproduction of the two-device setup). The verifier
// sends a diagnostic verdict byte after deciding; it is excluded from the
// payload accounting.
struct ServerHandle {
  std::atomic<bool> stop{false};
  int listen_fd = -1;
  std::uint16_t port = 0;
};

// Blocks serving connections until handle.stop is set. Throws on bind error.
void serve_verifier(const std::string& address, std::uint16_t port,
                    proto::VerifierState& verifier, ServerHandle& handle,
                    const proto::Clock& clock, bool verbose = false);

struct NodeRunResult {
  proto::Verdict verdict;
  bool node_aborted = false;
};

NodeRunResult run_node(const std::string& address, std::uint16_t port,
                       const proto::NodeState& node, bool verbose = false);

struct TransportError : std::runtime_error {
  explicit TransportError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace lpan::net
