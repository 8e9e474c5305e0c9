#pragma once

#include "lpan/models.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace lpan::proto {

// Monotonic seconds; injectable so timer behavior is testable.
using Clock = std::function<double()>;

enum class Verdict : std::uint8_t {
  Accept = 0,
  RejectResponseMismatch = 1,
  RejectTimeout = 2,
  NodeAbortUnauthenticLC = 3,
};

const char* verdict_name(Verdict v);

struct AuthRequest {
  std::uint8_t node_id = 0;  // 8 wire bits
};

struct ChallengeMsg {
  models::LatentChallenge lc{};  // 4 x 32-bit wire scalars, 128 bits
};

struct ResponseMsg {
  models::LatentResponse lr{};  // 4 x 32-bit wire scalars, 128 bits
};

using Message = std::variant<AuthRequest, ChallengeMsg, ResponseMsg>;

// Full message bytes: [type tag][payload]. The paper's 264-bit session
// accounting counts payloads only (1 + 16 + 16 bytes).
std::vector<std::uint8_t> encode_wire(const Message& msg);
Message decode_wire(const std::vector<std::uint8_t>& bytes);
std::size_t payload_size(const Message& msg);

struct WireError : std::runtime_error {
  explicit WireError(const std::string& what) : std::runtime_error(what) {}
};

std::size_t hamming(const puf::Bits& a, const puf::Bits& b);

// Fixed session budget: 3 messages, 8 + 128 + 128 = 264 payload bits.
constexpr std::size_t kSessionMessages = 3;
constexpr std::size_t kSessionPayloadBits = 264;

// Published message/bit counts for the comparison protocols.
struct OverheadRow {
  const char* protocol;
  std::size_t messages;
  std::size_t bits;
};
const std::vector<OverheadRow>& literature_overhead();

enum class Direction : std::uint8_t { VerifierToNode = 0, NodeToVerifier = 1 };

struct TranscriptEntry {
  Direction direction;
  std::vector<std::uint8_t> payload;  // full wire bytes including type tag
  double timestamp = 0.0;
};

struct SessionTranscript {
  std::uint64_t session_id = 0;
  std::size_t crp_index = 0;
  models::LatentChallenge lc{};
  std::vector<TranscriptEntry> entries;
  std::optional<Verdict> verdict;
};

void export_transcripts(const std::vector<SessionTranscript>& ts, const std::string& path);

struct PoolExhausted : std::runtime_error {
  PoolExhausted() : std::runtime_error("CRP index pool exhausted; re-enrollment required") {}
};

struct SessionError : std::runtime_error {
  explicit SessionError(const std::string& what) : std::runtime_error(what) {}
};

// Verifier-side protocol engine. Draws each CRP index exactly once, ever;
// the cursor into the seeded draw order is persisted so restarts cannot
// reuse material.
class VerifierState {
 public:
  VerifierState(const models::ModelBundle& bundle, double t_max, std::uint64_t draw_seed,
                std::string state_path = "");

  struct IssuedChallenge {
    std::uint64_t session_id;
    ChallengeMsg msg;
  };

  // Draws an unused index, generates the CRP, stores R and the deadline,
  // emits the LC. Throws PoolExhausted when no unused indices remain.
  IssuedChallenge on_request(const AuthRequest& req, double now);

  Verdict on_response(std::uint64_t session_id, const ResponseMsg& msg, double now);

  // Marks a session closed without a response (connection loss / timeout
  // sweep); expected response is erased.
  void expire_session(std::uint64_t session_id, double now);

  std::size_t remaining_indices() const;
  double t_max() const { return t_max_; }
  const std::vector<SessionTranscript>& transcripts() const { return transcripts_; }
  std::vector<SessionTranscript> take_transcripts();

 private:
  struct ActiveSession {
    puf::Response expected;
    double deadline;
    std::size_t transcript_slot;
  };

  const models::ModelBundle* bundle_;
  double t_max_;
  std::uint64_t draw_seed_ = 0;
  std::uint64_t next_session_id_ = 1;
  std::vector<std::size_t> draw_order_;  // seeded permutation of [0, n)
  std::size_t cursor_ = 0;
  std::string state_path_;
  std::map<std::uint64_t, ActiveSession> sessions_;
  std::vector<SessionTranscript> transcripts_;
  mutable std::mutex mu_;

  void persist_cursor();
};

// Node-side engine; stateless across sessions per the protocol.
class NodeState {
 public:
  NodeState(std::uint8_t node_id, models::NodeModelSet models)
      : node_id_(node_id), models_(std::move(models)) {}

  std::uint8_t node_id() const { return node_id_; }
  const models::NodeModelSet& models() const { return models_; }

  // Returns the response message for an authentic LC, nullopt on abort.
  std::optional<ResponseMsg> on_challenge(const ChallengeMsg& msg) const;

 private:
  std::uint8_t node_id_;
  models::NodeModelSet models_;
};

}  // namespace lpan::proto
