#include "lpan/protocol.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>

namespace lpan::proto {

const char* verdict_name(Verdict v) {
  switch (v) {
    case Verdict::Accept: return "Accept";
    case Verdict::RejectResponseMismatch: return "RejectResponseMismatch";
    case Verdict::RejectTimeout: return "RejectTimeout";
    case Verdict::NodeAbortUnauthenticLC: return "NodeAbortUnauthenticLC";
  }
  return "?";
}

namespace {

constexpr std::uint8_t kTagRequest = 0x01;
constexpr std::uint8_t kTagChallenge = 0x02;
constexpr std::uint8_t kTagResponse = 0x03;

void put_scalar_be(std::vector<std::uint8_t>& out, double v) {
  const float f = static_cast<float>(v);
  std::uint32_t u;
  std::memcpy(&u, &f, 4);
  for (int i = 3; i >= 0; --i) out.push_back(static_cast<std::uint8_t>(u >> (8 * i)));
}

double get_scalar_be(const std::vector<std::uint8_t>& in, std::size_t pos) {
  std::uint32_t u = 0;
  for (int i = 0; i < 4; ++i) u = (u << 8) | in[pos + i];
  float f;
  std::memcpy(&f, &u, 4);
  return static_cast<double>(f);
}

}  // namespace

std::vector<std::uint8_t> encode_wire(const Message& msg) {
  std::vector<std::uint8_t> out;
  if (const auto* r = std::get_if<AuthRequest>(&msg)) {
    out.push_back(kTagRequest);
    out.push_back(r->node_id);
  } else if (const auto* c = std::get_if<ChallengeMsg>(&msg)) {
    out.push_back(kTagChallenge);
    for (double v : c->lc) put_scalar_be(out, v);
  } else {
    const auto& r = std::get<ResponseMsg>(msg);
    out.push_back(kTagResponse);
    for (double v : r.lr) put_scalar_be(out, v);
  }
  return out;
}

Message decode_wire(const std::vector<std::uint8_t>& bytes) {
  if (bytes.empty()) throw WireError("empty message");
  switch (bytes[0]) {
    case kTagRequest: {
      if (bytes.size() != 2) throw WireError("bad AuthRequest length");
      return AuthRequest{bytes[1]};
    }
    case kTagChallenge: {
      if (bytes.size() != 17) throw WireError("bad ChallengeMsg length");
      ChallengeMsg m;
      for (std::size_t i = 0; i < models::kLatentDim; ++i)
        m.lc[i] = get_scalar_be(bytes, 1 + 4 * i);
      return m;
    }
    case kTagResponse: {
      if (bytes.size() != 17) throw WireError("bad ResponseMsg length");
      ResponseMsg m;
      for (std::size_t i = 0; i < models::kLatentDim; ++i)
        m.lr[i] = get_scalar_be(bytes, 1 + 4 * i);
      return m;
    }
    default:
      throw WireError("unknown message type tag");
  }
}

std::size_t payload_size(const Message& msg) {
  return std::holds_alternative<AuthRequest>(msg) ? 1 : 16;
}

const std::vector<OverheadRow>& literature_overhead() {
  static const std::vector<OverheadRow> rows = {
      {"Chatterjee et al.", 6, 3504},
      {"Harishma et al.", 8, 856},
      {"Nimmy et al.", 3, 1792},
      {"Zhang et al.", 5, 1040},
  };
  return rows;
}

std::size_t hamming(const puf::Bits& a, const puf::Bits& b) {
  if (a.size() != b.size()) throw WireError("hamming: length mismatch");
  std::size_t d = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) ++d;
  return d;
}

void export_transcripts(const std::vector<SessionTranscript>& ts, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw SessionError("cannot open for write: " + path);
  static const char* hex = "0123456789abcdef";
  for (const auto& t : ts) {
    f << "session=" << t.session_id << " index=" << t.crp_index;
    for (const auto& e : t.entries) {
      f << (e.direction == Direction::VerifierToNode ? " v>n:" : " n>v:");
      for (std::uint8_t b : e.payload) f << hex[b >> 4] << hex[b & 0xF];
      f << "@" << e.timestamp;
    }
    f << " verdict=" << (t.verdict ? verdict_name(*t.verdict) : "open") << '\n';
  }
}

VerifierState::VerifierState(const models::ModelBundle& bundle, double t_max,
                             std::uint64_t draw_seed, std::string state_path)
    : bundle_(&bundle), t_max_(t_max), draw_seed_(draw_seed),
      state_path_(std::move(state_path)) {
  draw_order_.resize(bundle.meta.n);
  std::iota(draw_order_.begin(), draw_order_.end(), 0);
  std::mt19937_64 rng(draw_seed);
  std::shuffle(draw_order_.begin(), draw_order_.end(), rng);
  if (!state_path_.empty()) {
    std::ifstream f(state_path_);
    if (f) {
      std::uint64_t seed_on_disk = 0, cursor = 0;
      if (f >> seed_on_disk >> cursor) {
        if (seed_on_disk != draw_seed)
          throw SessionError("verifier state file was created with a different draw seed");
        if (cursor > draw_order_.size())
          throw SessionError("verifier state file cursor out of range");
        cursor_ = cursor;
      }
    }
  }
}

void VerifierState::persist_cursor() {
  if (state_path_.empty()) return;
  std::ofstream f(state_path_, std::ios::trunc);
  if (!f) throw SessionError("cannot persist verifier state: " + state_path_);
  // The permutation is a pure function of the seed; the cursor alone pins
  // the set of spent indices.
  f << draw_seed_ << ' ' << cursor_ << '\n';
  f.flush();
}

VerifierState::IssuedChallenge VerifierState::on_request(const AuthRequest& req, double now) {
  std::lock_guard lock(mu_);
  if (cursor_ >= draw_order_.size()) throw PoolExhausted();
  const std::size_t index = draw_order_[cursor_++];
  persist_cursor();

  auto [c, r] = models::generate_crp(bundle_->dnn, index, bundle_->meta.tau);
  ChallengeMsg msg{models::encode_challenge(bundle_->enc1, c)};

  SessionTranscript t;
  t.session_id = next_session_id_++;
  t.crp_index = index;
  t.lc = msg.lc;
  t.entries.push_back({Direction::NodeToVerifier, encode_wire(AuthRequest{req.node_id}), now});
  t.entries.push_back({Direction::VerifierToNode, encode_wire(msg), now});
  transcripts_.push_back(std::move(t));

  sessions_[transcripts_.back().session_id] =
      ActiveSession{r, now + t_max_, transcripts_.size() - 1};
  return IssuedChallenge{transcripts_.back().session_id, msg};
}

Verdict VerifierState::on_response(std::uint64_t session_id, const ResponseMsg& msg,
                                   double now) {
  std::lock_guard lock(mu_);
  auto it = sessions_.find(session_id);
  if (it == sessions_.end()) throw SessionError("unknown or closed session");
  ActiveSession s = it->second;
  sessions_.erase(it);  // expected R erased on close either way

  SessionTranscript& t = transcripts_[s.transcript_slot];
  t.entries.push_back({Direction::NodeToVerifier, encode_wire(msg), now});

  Verdict v;
  if (now > s.deadline) {
    v = Verdict::RejectTimeout;
  } else {
    puf::Bits r_prime =
        models::binarize(models::decode_response(bundle_->dec1, msg.lr), bundle_->meta.tau);
    v = hamming(s.expected.bits, r_prime) == 0 ? Verdict::Accept
                                               : Verdict::RejectResponseMismatch;
  }
  t.verdict = v;
  return v;
}

void VerifierState::expire_session(std::uint64_t session_id, double) {
  std::lock_guard lock(mu_);
  auto it = sessions_.find(session_id);
  if (it == sessions_.end()) return;
  transcripts_[it->second.transcript_slot].verdict = Verdict::RejectTimeout;
  sessions_.erase(it);
}

std::size_t VerifierState::remaining_indices() const {
  std::lock_guard lock(mu_);
  return draw_order_.size() - cursor_;
}

std::vector<SessionTranscript> VerifierState::take_transcripts() {
  std::lock_guard lock(mu_);
  if (!sessions_.empty())
    throw SessionError("cannot take transcripts while sessions are active");
  std::vector<SessionTranscript> out;
  out.swap(transcripts_);
  return out;
}

std::optional<ResponseMsg> NodeState::on_challenge(const ChallengeMsg& msg) const {
  if (!models::verify_lc_authentic(models_, msg.lc)) return std::nullopt;
  return ResponseMsg{models::predict_latent_response(models_.extended_encoder2, msg.lc)};
}

}  // namespace lpan::proto
