#include "lpan/split_trainer.hpp"

#include "lpan/container.hpp"

#include "lpan/crc32.hpp"

#include <sys/socket.h>
#include <unistd.h>

#if defined(__SSE2__)
#include <immintrin.h>
#endif

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>

namespace lpan::sl {

using models::binarize;
using nn::ActivationTrace;
using nn::AdamState;
using nn::Gradients;
using nn::Mlp;

void CutLink::send_forward(const Matrix& activations) {
  if (last_ == Dir::Forward) throw LinkError("two consecutive forward crossings");
  push(true, activations);
  last_ = Dir::Forward;
  ++forward_count_;
}

Matrix CutLink::recv_forward() { return pull(true); }

void CutLink::send_backward(const Matrix& gradients) {
  if (last_ == Dir::Backward) throw LinkError("two consecutive backward crossings");
  push(false, gradients);
  last_ = Dir::Backward;
  ++backward_count_;
}

Matrix CutLink::recv_backward() { return pull(false); }

void InProcessLink::push(bool forward, const Matrix& m) {
  (forward ? fwd_ : bwd_).push_back(m);
}

Matrix InProcessLink::pull(bool forward) {
  auto& q = forward ? fwd_ : bwd_;
  if (q.empty()) throw LinkError("link empty on receive");
  Matrix m = std::move(q.front());
  q.erase(q.begin());
  return m;
}

namespace {

// Late-training gradients reach the subnormal range, where this class of CPU
// stalls on microcode assists (5x+ epoch slowdown). Subnormal values carry no
// training signal; flush them. Per-thread, set once at trainer entry so split,
// monolithic, and resumed runs all share the same rounding mode.
void flush_subnormals() {
#if defined(__SSE2__)
  _mm_setcsr(_mm_getcsr() | 0x8040);  // FTZ | DAZ
#endif
}

constexpr std::uint8_t kTagForward = 0x46;   // 'F'
constexpr std::uint8_t kTagBackward = 0x42;  // 'B'
constexpr std::size_t kMaxLinkFrame = 1u << 28;

void fd_write_all(int fd, const std::uint8_t* p, std::size_t n) {
  while (n > 0) {
    const ssize_t w = ::write(fd, p, n);
    if (w <= 0) throw LinkError("link write failed");
    p += w;
    n -= static_cast<std::size_t>(w);
  }
}

void fd_read_exact(int fd, std::uint8_t* p, std::size_t n) {
  while (n > 0) {
    const ssize_t r = ::read(fd, p, n);
    if (r <= 0) throw LinkError("link read failed");
    p += r;
    n -= static_cast<std::size_t>(r);
  }
}

void put_u32_be(std::uint8_t* p, std::uint32_t v) {
  p[0] = static_cast<std::uint8_t>(v >> 24);
  p[1] = static_cast<std::uint8_t>(v >> 16);
  p[2] = static_cast<std::uint8_t>(v >> 8);
  p[3] = static_cast<std::uint8_t>(v);
}

std::uint32_t get_u32_be(const std::uint8_t* p) {
  return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
         (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
}

}  // namespace

void SocketLink::push(bool forward, const Matrix& m) {
  ByteWriter w;
  w.u8(forward ? kTagForward : kTagBackward);
  w.u32(static_cast<std::uint32_t>(m.rows()));
  w.u32(static_cast<std::uint32_t>(m.cols()));
  for (double v : m.storage()) w.f64(v);

  std::vector<std::uint8_t> frame(4 + w.bytes.size() + 4);
  put_u32_be(frame.data(), static_cast<std::uint32_t>(w.bytes.size()));
  std::copy(w.bytes.begin(), w.bytes.end(), frame.begin() + 4);
  put_u32_be(frame.data() + 4 + w.bytes.size(), crc32(w.bytes.data(), w.bytes.size()));
  fd_write_all(write_fd_, frame.data(), frame.size());
}

Matrix SocketLink::pull(bool forward) {
  std::uint8_t head[4];
  fd_read_exact(read_fd_, head, 4);
  const std::uint32_t len = get_u32_be(head);
  if (len < 9 || len > kMaxLinkFrame) throw LinkError("link frame length out of range");
  std::vector<std::uint8_t> payload(len);
  fd_read_exact(read_fd_, payload.data(), len);
  std::uint8_t tail[4];
  fd_read_exact(read_fd_, tail, 4);
  if (get_u32_be(tail) != crc32(payload.data(), payload.size()))
    throw LinkError("link frame CRC mismatch");

  ByteReader r(payload);
  const std::uint8_t tag = r.u8();
  if (tag != (forward ? kTagForward : kTagBackward))
    throw LinkError("link frame direction tag mismatch");
  const std::uint32_t rows = r.u32();
  const std::uint32_t cols = r.u32();
  if (payload.size() != 9 + std::size_t(rows) * cols * 8)
    throw LinkError("link frame size does not match its shape");
  Matrix m(rows, cols);
  for (double& v : m.storage()) v = r.f64();
  return m;
}

namespace {
std::pair<int, int> make_socketpair() {
  int fds[2];
  if (::socketpair(AF_UNIX, SOCK_STREAM, 0, fds) != 0)
    throw LinkError("socketpair failed");
  return {fds[0], fds[1]};
}
}  // namespace

LoopbackSocketLink::LoopbackSocketLink() : LoopbackSocketLink(make_socketpair()) {}

LoopbackSocketLink::LoopbackSocketLink(std::pair<int, int> fds)
    : SocketLink(fds.second, fds.first), fd0_(fds.first), fd1_(fds.second) {}

LoopbackSocketLink::~LoopbackSocketLink() {
  ::close(fd0_);
  ::close(fd1_);
}

namespace {

Matrix rows_from_bits(const puf::CrpDataset& ds, bool challenge) {
  const std::size_t w = challenge ? puf::kChallengeBits : puf::kResponseBits;
  Matrix m(ds.size(), w);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const puf::Bits& b = challenge ? ds.entries[i].challenge.bits : ds.entries[i].response.bits;
    for (std::size_t j = 0; j < w; ++j) m(i, j) = b[j];
  }
  return m;
}

// Zero-mean +-0.5 copy of a 0/1 bit matrix; network inputs are centered,
// targets and thresholds stay in 0/1 space (matching the models module).
Matrix centered(const Matrix& m) {
  Matrix out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.size(); ++i)
    out.storage()[i] = m.storage()[i] >= 0.5 ? 0.5 : -0.5;
  return out;
}

Matrix take_rows(const Matrix& m, const std::vector<std::size_t>& order, std::size_t begin,
                 std::size_t end) {
  Matrix out(end - begin, m.cols());
  for (std::size_t r = begin; r < end; ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) out(r - begin, c) = m(order[r], c);
  return out;
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ull + epoch + 1);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

// Batched inference without keeping traces for the whole set at once.
Matrix infer(const std::vector<const Mlp*>& stack, const Matrix& x) {
  Matrix out(x.rows(), stack.back()->out_dim());
  const std::size_t chunk = 256;
  for (std::size_t begin = 0; begin < x.rows(); begin += chunk) {
    const std::size_t end = std::min(begin + chunk, x.rows());
    Matrix part(end - begin, x.cols());
    for (std::size_t r = begin; r < end; ++r)
      for (std::size_t c = 0; c < x.cols(); ++c) part(r - begin, c) = x(r, c);
    for (const Mlp* m : stack) part = nn::forward(*m, part).output();
    for (std::size_t r = begin; r < end; ++r)
      for (std::size_t c = 0; c < part.cols(); ++c) out(r, c) = part(r - begin, c);
  }
  return out;
}

struct ExactnessCheck {
  double bit_accuracy = 0.0;
  double worst_margin = 0.0;
  double mae = 0.0;
};

// Targets are 0/1; a bit is correct with margin when the raw output clears
// the 0.5 threshold by at least cfg.margin on the right side.
ExactnessCheck check_exact(const Matrix& raw, const Matrix& targets) {
  ExactnessCheck c;
  c.worst_margin = 1e300;
  std::size_t correct = 0;
  double abs_err = 0.0;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const double o = raw.storage()[i];
    const double t = targets.storage()[i];
    abs_err += std::fabs(o - t);
    const bool bit = o >= 0.5;
    if (bit == (t >= 0.5)) ++correct;
    const double margin = t >= 0.5 ? o - 0.5 : 0.5 - o;
    c.worst_margin = std::min(c.worst_margin, margin);
  }
  c.bit_accuracy = static_cast<double>(correct) / static_cast<double>(raw.size());
  c.mae = abs_err / static_cast<double>(raw.size());
  return c;
}

double epoch_lr(const TrainConfig& cfg, std::size_t epoch) {
  if (cfg.lr_decay >= 1.0 || cfg.lr_decay_every == 0) return cfg.lr;
  const double lr =
      cfg.lr * std::pow(cfg.lr_decay, static_cast<double>(epoch / cfg.lr_decay_every));
  return std::max(lr, cfg.lr_min);
}

bool converged(const ExactnessCheck& c, const TrainConfig& cfg) {
  if (c.bit_accuracy < cfg.target_bit_accuracy) return false;
  if (cfg.target_bit_accuracy >= 1.0 && c.worst_margin < cfg.margin) return false;
  if (c.mae > cfg.target_mae) return false;
  return true;
}

// Batch-boundary checkpointing: models + optimizer state in a container.
// "ckpt" section holds the cursor (phase tag, seed, epoch, next batch start,
// partial-epoch loss accumulator, finished epoch losses); "netK"/"optK" hold
// each side's parameters and ADAM moments.
struct CheckpointIo {
  const TrainConfig* cfg;
  std::uint8_t phase_tag;
  std::vector<Mlp*> nets;
  std::vector<AdamState*> states;
  std::size_t since_save = 0;

  bool enabled() const { return cfg->checkpoint_every > 0 && !cfg->checkpoint_path.empty(); }

  bool load(std::size_t& epoch, std::size_t& next_begin, TrainReport& rep, double& loss_sum,
            std::size_t& batches) {
    if (!enabled() || !std::filesystem::exists(cfg->checkpoint_path)) return false;
    Container c = Container::load(cfg->checkpoint_path);
    ByteReader r(c.get("ckpt"));
    if (r.u8() != phase_tag) throw TrainError("checkpoint belongs to a different phase", {});
    if (r.u64() != cfg->seed) throw TrainError("checkpoint seed mismatch", {});
    epoch = r.u64();
    next_begin = r.u64();
    loss_sum = r.f64();
    batches = r.u64();
    rep.epoch_loss.resize(r.u64());
    for (double& v : rep.epoch_loss) v = r.f64();
    for (std::size_t k = 0; k < nets.size(); ++k) {
      Mlp restored = deserialize_mlp(c.get("net" + std::to_string(k)));
      if (restored.layers.size() != nets[k]->layers.size())
        throw TrainError("checkpoint layer count mismatch", {});
      for (std::size_t l = 0; l < restored.layers.size(); ++l)
        if (restored.layers[l].in_dim() != nets[k]->layers[l].in_dim() ||
            restored.layers[l].out_dim() != nets[k]->layers[l].out_dim())
          throw TrainError("checkpoint layer shape mismatch", {});
      *nets[k] = std::move(restored);
      *states[k] = deserialize_adam(c.get("opt" + std::to_string(k)));
    }
    return true;
  }

  void save(std::size_t epoch, std::size_t next_begin, const TrainReport& rep,
            double loss_sum, std::size_t batches) {
    Container c;
    ByteWriter w;
    w.u8(phase_tag);
    w.u64(cfg->seed);
    w.u64(epoch);
    w.u64(next_begin);
    w.f64(loss_sum);
    w.u64(batches);
    w.u64(rep.epoch_loss.size());
    for (double v : rep.epoch_loss) w.f64(v);
    c.set("ckpt", std::move(w.bytes));
    for (std::size_t k = 0; k < nets.size(); ++k) {
      c.set("net" + std::to_string(k), serialize_mlp(*nets[k]));
      c.set("opt" + std::to_string(k), serialize_adam(*states[k]));
    }
    const std::string tmp = cfg->checkpoint_path + ".tmp";
    c.save(tmp);
    std::filesystem::rename(tmp, cfg->checkpoint_path);
  }

  void after_batch(std::size_t epoch, std::size_t next_begin, const TrainReport& rep,
                   double loss_sum, std::size_t batches) {
    if (!enabled()) return;
    if (++since_save < cfg->checkpoint_every) return;
    since_save = 0;
    save(epoch, next_begin, rep, loss_sum, batches);
  }
};

}  // namespace

models::DnnCrpGenerator train_dnn_generator(const puf::CrpDataset& dataset,
                                            const TrainConfig& cfg, TrainReport* report) {
  flush_subnormals();
  dataset.validate();
  const std::size_t n = dataset.size();
  models::DnnCrpGenerator gen = models::make_dnn_generator(n, cfg.seed);
  Matrix x(n, models::index_width(n));
  for (std::size_t i = 0; i < n; ++i) {
    auto bits = models::index_to_bits(i, n);
    for (std::size_t j = 0; j < bits.size(); ++j) x(i, j) = bits[j] ? 0.5 : -0.5;
  }
  Matrix yc = rows_from_bits(dataset, true);
  Matrix yr = rows_from_bits(dataset, false);
  Matrix y(n, puf::kChallengeBits + puf::kResponseBits);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < puf::kChallengeBits; ++j) y(i, j) = yc(i, j);
    for (std::size_t j = 0; j < puf::kResponseBits; ++j)
      y(i, puf::kChallengeBits + j) = yr(i, j);
  }

  AdamState state = AdamState::for_mlp(gen.net, cfg.lr, cfg.beta1, cfg.beta2, cfg.epsilon);
  TrainReport rep;
  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    auto order = epoch_order(n, cfg.seed, epoch);
    state.lr = epoch_lr(cfg, epoch);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < n; begin += cfg.batch_size) {
      const std::size_t end = std::min(begin + cfg.batch_size, n);
      Matrix xb = take_rows(x, order, begin, end);
      Matrix yb = take_rows(y, order, begin, end);
      ActivationTrace tr = nn::forward(gen.net, xb);
      auto [loss, dy] = nn::mse_loss(tr.output(), yb);
      Gradients g = nn::backward(gen.net, tr, dy);
      nn::adam_step(gen.net, g, state);
      loss_sum += loss;
      ++batches;
    }
    rep.epoch_loss.push_back(loss_sum / static_cast<double>(batches));
    rep.epochs_run = epoch + 1;
    if ((epoch + 1) % cfg.check_every == 0 || epoch + 1 == cfg.max_epochs) {
      ExactnessCheck c = check_exact(infer({&gen.net}, x), y);
      rep.bit_accuracy = c.bit_accuracy;
      rep.mae = c.mae;
      if (cfg.on_check)
        cfg.on_check(epoch + 1, rep.epoch_loss.back(), c.bit_accuracy, c.worst_margin, c.mae);
      if (converged(c, cfg)) {
        rep.converged = true;
        break;
      }
    }
  }
  if (report) *report = rep;
  if (!rep.converged)
    throw TrainError("generator training hit the epoch cap below target accuracy", rep);
  return gen;
}

namespace {

struct PhaseACore {
  Mlp* enc1;
  Mlp* benc2;
  Mlp* dec2;
  CutLink* link;  // null = monolithic
  AdamState s1, s2, s3;

  void init(const TrainConfig& cfg) {
    s1 = AdamState::for_mlp(*enc1, cfg.lr, cfg.beta1, cfg.beta2, cfg.epsilon);
    s2 = AdamState::for_mlp(*benc2, cfg.lr, cfg.beta1, cfg.beta2, cfg.epsilon);
    s3 = AdamState::for_mlp(*dec2, cfg.lr, cfg.beta1, cfg.beta2, cfg.epsilon);
  }

  double batch(const Matrix& xb_in, const Matrix& xb_target) {
    // Verifier side.
    ActivationTrace tr1 = nn::forward(*enc1, xb_in);
    Matrix lc;
    if (link) {
      link->send_forward(tr1.output());
      lc = link->recv_forward();
    } else {
      lc = tr1.output();
    }
    // Node side reconstructs the same challenges.
    ActivationTrace tr2 = nn::forward(*benc2, lc);
    ActivationTrace tr3 = nn::forward(*dec2, tr2.output());
    auto [loss, dy] = nn::mse_loss(tr3.output(), xb_target);
    Gradients g3 = nn::backward(*dec2, tr3, dy);
    Gradients g2 = nn::backward(*benc2, tr2, g3.d_input);
    Matrix dlc;
    if (link) {
      link->send_backward(g2.d_input);
      dlc = link->recv_backward();
    } else {
      dlc = g2.d_input;
    }
    Gradients g1 = nn::backward(*enc1, tr1, dlc);
    nn::adam_step(*dec2, g3, s3);
    nn::adam_step(*benc2, g2, s2);
    nn::adam_step(*enc1, g1, s1);
    return loss;
  }
};

TrainReport run_phase_a(const puf::CrpDataset& dataset, PhaseACore& core,
                        const TrainConfig& cfg) {
  flush_subnormals();
  dataset.validate();
  const std::size_t n = dataset.size();
  Matrix x = rows_from_bits(dataset, true);
  Matrix xin = centered(x);  // network input; reconstruction target stays 0/1
  core.init(cfg);
  TrainReport rep;
  CheckpointIo ck{&cfg, 0xA1, {core.enc1, core.benc2, core.dec2},
                  {&core.s1, &core.s2, &core.s3}};
  std::size_t start_epoch = 0, start_begin = 0;
  double loss_sum = 0.0;
  std::size_t batches = 0;
  const bool resumed = ck.load(start_epoch, start_begin, rep, loss_sum, batches);
  for (std::size_t epoch = start_epoch; epoch < cfg.max_epochs; ++epoch) {
    auto order = epoch_order(n, cfg.seed, epoch);
    core.s1.lr = core.s2.lr = core.s3.lr = epoch_lr(cfg, epoch);
    if (!(resumed && epoch == start_epoch)) {
      loss_sum = 0.0;
      batches = 0;
    }
    const std::size_t first = resumed && epoch == start_epoch ? start_begin : 0;
    for (std::size_t begin = first; begin < n; begin += cfg.batch_size) {
      const std::size_t end = std::min(begin + cfg.batch_size, n);
      loss_sum += core.batch(take_rows(xin, order, begin, end), take_rows(x, order, begin, end));
      ++batches;
      ck.after_batch(epoch, begin + cfg.batch_size, rep, loss_sum, batches);
    }
    rep.epoch_loss.push_back(loss_sum / static_cast<double>(batches));
    rep.epochs_run = epoch + 1;
    if ((epoch + 1) % cfg.check_every == 0 || epoch + 1 == cfg.max_epochs) {
      ExactnessCheck c = check_exact(infer({core.enc1, core.benc2, core.dec2}, xin), x);
      rep.bit_accuracy = c.bit_accuracy;
      rep.mae = c.mae;
      if (cfg.on_check)
        cfg.on_check(epoch + 1, rep.epoch_loss.back(), c.bit_accuracy, c.worst_margin, c.mae);
      if (converged(c, cfg)) {
        rep.converged = true;
        break;
      }
    }
  }
  if (!rep.converged)
    throw TrainError("phase (a) hit the epoch cap below target accuracy", rep);
  return rep;
}

}  // namespace

TrainReport phase_a(const puf::CrpDataset& dataset, models::Encoder1& enc1,
                    models::BasicEncoder2& benc2, models::Decoder2& dec2, CutLink& link,
                    const TrainConfig& cfg) {
  PhaseACore core{&enc1.net, &benc2.net, &dec2.net, &link, {}, {}, {}};
  return run_phase_a(dataset, core, cfg);
}

void train_autoencoder_monolithic(const puf::CrpDataset& dataset, models::Encoder1& enc1,
                                  models::BasicEncoder2& benc2, models::Decoder2& dec2,
                                  const TrainConfig& cfg) {
  PhaseACore core{&enc1.net, &benc2.net, &dec2.net, nullptr, {}, {}, {}};
  run_phase_a(dataset, core, cfg);
}

TrainReport phase_b(const puf::CrpDataset& dataset, const models::Encoder1& enc1,
                    models::ExtendedEncoder2& xenc2, models::Decoder1& dec1, CutLink& link,
                    const TrainConfig& cfg) {
  flush_subnormals();
  dataset.validate();
  for (bool f : xenc2.base.net.frozen)
    if (!f) throw TrainError("phase (b) requires a frozen base encoder", {});
  const std::size_t n = dataset.size();
  Matrix challenges = rows_from_bits(dataset, true);
  Matrix responses = rows_from_bits(dataset, false);
  // Encoder1 is frozen; its LCs are fixed for the whole phase.
  Matrix lc = infer({&enc1.net}, centered(challenges));

  AdamState s_ext =
      AdamState::for_mlp(xenc2.extension, cfg.lr, cfg.beta1, cfg.beta2, cfg.epsilon);
  AdamState s_dec = AdamState::for_mlp(dec1.net, cfg.lr, cfg.beta1, cfg.beta2, cfg.epsilon);
  TrainReport rep;
  CheckpointIo ck{&cfg, 0xB1, {&xenc2.extension, &dec1.net}, {&s_ext, &s_dec}};
  std::size_t start_epoch = 0, start_begin = 0;
  double loss_sum = 0.0;
  std::size_t batches = 0;
  const bool resumed = ck.load(start_epoch, start_begin, rep, loss_sum, batches);
  for (std::size_t epoch = start_epoch; epoch < cfg.max_epochs; ++epoch) {
    auto order = epoch_order(n, cfg.seed, epoch);
    if (!(resumed && epoch == start_epoch)) {
      loss_sum = 0.0;
      batches = 0;
    }
    s_ext.lr = s_dec.lr = epoch_lr(cfg, epoch);
    const std::size_t first = resumed && epoch == start_epoch ? start_begin : 0;
    for (std::size_t begin = first; begin < n; begin += cfg.batch_size) {
      const std::size_t end = std::min(begin + cfg.batch_size, n);
      Matrix lcb = take_rows(lc, order, begin, end);
      Matrix rb = take_rows(responses, order, begin, end);
      // Node side: frozen base, trainable extension.
      ActivationTrace tr_base = nn::forward(xenc2.base.net, lcb);
      ActivationTrace tr_ext = nn::forward(xenc2.extension, tr_base.output());
      link.send_forward(tr_ext.output());
      Matrix lr = link.recv_forward();
      // Verifier side: Decoder1 learns to decompress the LR.
      ActivationTrace tr_dec = nn::forward(dec1.net, lr);
      auto [loss, dy] = nn::mse_loss(tr_dec.output(), rb);
      Gradients g_dec = nn::backward(dec1.net, tr_dec, dy);
      link.send_backward(g_dec.d_input);
      Matrix dlr = link.recv_backward();
      Gradients g_ext = nn::backward(xenc2.extension, tr_ext, dlr);
      nn::adam_step(dec1.net, g_dec, s_dec);
      nn::adam_step(xenc2.extension, g_ext, s_ext);
      loss_sum += loss;
      ++batches;
      ck.after_batch(epoch, begin + cfg.batch_size, rep, loss_sum, batches);
    }
    rep.epoch_loss.push_back(loss_sum / static_cast<double>(batches));
    rep.epochs_run = epoch + 1;
    if ((epoch + 1) % cfg.check_every == 0 || epoch + 1 == cfg.max_epochs) {
      Matrix raw = infer({&xenc2.base.net, &xenc2.extension, &dec1.net}, lc);
      ExactnessCheck c = check_exact(raw, responses);
      rep.bit_accuracy = c.bit_accuracy;
      rep.mae = c.mae;
      if (cfg.on_check)
        cfg.on_check(epoch + 1, rep.epoch_loss.back(), c.bit_accuracy, c.worst_margin, c.mae);
      if (converged(c, cfg)) {
        rep.converged = true;
        break;
      }
    }
  }
  if (!rep.converged)
    throw TrainError("phase (b) hit the epoch cap below target accuracy", rep);
  return rep;
}

EnrollResult enroll(const puf::CrpDataset& dataset, const TrainConfig& cfg) {
  EnrollResult res;
  TrainConfig c = cfg;

  c.seed = cfg.seed + 1;
  res.bundle.dnn = train_dnn_generator(dataset, c, &res.dnn_report);

  res.bundle.enc1 = models::make_encoder1(cfg.seed + 2);
  res.bundle.benc2 = models::make_basic_encoder2(cfg.seed + 3);
  res.bundle.dec2 = models::make_decoder2(cfg.seed + 4);
  InProcessLink link_a;
  c.seed = cfg.seed + 10;
  res.phase_a_report =
      phase_a(dataset, res.bundle.enc1, res.bundle.benc2, res.bundle.dec2, link_a, c);

  res.bundle.xenc2.base = res.bundle.benc2;
  res.bundle.xenc2.base.net.freeze_all();
  res.bundle.xenc2.extension = models::make_encoder2_extension(cfg.seed + 5);
  res.bundle.dec1 = models::make_decoder1(cfg.seed + 6);
  models::Encoder1 frozen_enc1 = res.bundle.enc1;
  frozen_enc1.net.freeze_all();
  InProcessLink link_b;
  c.seed = cfg.seed + 11;
  // Response path trains past bit exactness down to desk-scale MAE.
  c.target_mae = std::min(cfg.target_mae, 1e-2);
  res.phase_b_report =
      phase_b(dataset, frozen_enc1, res.bundle.xenc2, res.bundle.dec1, link_b, c);

  // Latent box over the enrolled LC cloud, padded a hair so 32-bit wire
  // round-trips of genuine LCs stay inside.
  models::LatentBox box;
  box.lo.fill(1e300);
  box.hi.fill(-1e300);
  for (const auto& e : dataset.entries) {
    auto lc = models::encode_challenge(res.bundle.enc1, e.challenge);
    for (std::size_t i = 0; i < models::kLatentDim; ++i) {
      box.lo[i] = std::min(box.lo[i], lc[i]);
      box.hi[i] = std::max(box.hi[i], lc[i]);
    }
  }
  for (std::size_t i = 0; i < models::kLatentDim; ++i) {
    const double pad = 1e-6 * box.range(i);
    box.lo[i] -= pad;
    box.hi[i] += pad;
  }
  res.bundle.meta.n = dataset.size();
  res.bundle.meta.tau = 0.5;
  res.bundle.meta.lc_box = box;

  // Delta must clear the wire-quantization noise of genuine LCs by a wide
  // factor; keep the 0.05 default unless the measured noise forces it up.
  double qnoise = 0.0;
  for (const auto& e : dataset.entries) {
    auto lc = models::encode_challenge(res.bundle.enc1, e.challenge);
    qnoise = std::max(qnoise, models::latent_distance(lc, models::wire_round_trip(lc), box));
  }
  res.bundle.meta.delta = std::max(0.05, 100.0 * qnoise);
  return res;
}

TrainReport evaluate_bundle(const models::ModelBundle& bundle, const puf::CrpDataset& dataset,
                            std::size_t repeat_passes) {
  TrainReport rep;
  Matrix challenges = rows_from_bits(dataset, true);
  Matrix responses = rows_from_bits(dataset, false);
  Matrix raw = infer({&bundle.enc1.net, &bundle.xenc2.base.net, &bundle.xenc2.extension,
                      &bundle.dec1.net},
                     centered(challenges));
  ExactnessCheck c = check_exact(raw, responses);
  rep.bit_accuracy = c.bit_accuracy;
  rep.mae = c.mae;
  rep.converged = c.bit_accuracy >= 1.0;
  // Inference is deterministic; count any flips across repeated passes.
  std::size_t flips = 0;
  puf::Bits first = binarize(std::vector<double>(raw.data(), raw.data() + raw.size()));
  for (std::size_t p = 1; p < repeat_passes; ++p) {
    Matrix again = infer({&bundle.enc1.net, &bundle.xenc2.base.net, &bundle.xenc2.extension,
                          &bundle.dec1.net},
                         centered(challenges));
    puf::Bits b = binarize(std::vector<double>(again.data(), again.data() + again.size()));
    for (std::size_t i = 0; i < b.size(); ++i)
      if (b[i] != first[i]) ++flips;
  }
  rep.bit_flip_rate = repeat_passes > 1
                          ? static_cast<double>(flips) /
                                static_cast<double>(first.size() * (repeat_passes - 1))
                          : 0.0;
  return rep;
}

}  // namespace lpan::sl
