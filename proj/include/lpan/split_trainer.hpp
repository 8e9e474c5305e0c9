#pragma once

#include "lpan/models.hpp"
#include "lpan/nn.hpp"
#include "lpan/puf.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace lpan::sl {

// The split boundary. Activations cross forward (verifier -> node),
// gradients cross backward. The link enforces strict per-batch alternation:
// two consecutive crossings in the same direction are a contract violation.
class CutLink {
 public:
  virtual ~CutLink() = default;
  void send_forward(const Matrix& activations);
  Matrix recv_forward();
  void send_backward(const Matrix& gradients);
  Matrix recv_backward();

  std::size_t forward_count() const { return forward_count_; }
  std::size_t backward_count() const { return backward_count_; }

 protected:
  virtual void push(bool forward, const Matrix& m) = 0;
  virtual Matrix pull(bool forward) = 0;

 private:
  enum class Dir { None, Forward, Backward };
  Dir last_ = Dir::None;
  std::size_t forward_count_ = 0, backward_count_ = 0;
};

// Bit-exact, zero-latency link for same-process training.
class InProcessLink : public CutLink {
 protected:
  void push(bool forward, const Matrix& m) override;
  Matrix pull(bool forward) override;

 private:
  std::vector<Matrix> fwd_, bwd_;
};

// Networked link endpoint over file descriptors. Frame layout:
//   u32 BE length | payload | u32 BE CRC-32(payload)
//   payload = tag (0x46 FORWARD / 0x42 BACKWARD) | u32 rows | u32 cols |
//             rows*cols f64 scalars (little-endian)
// 64-bit scalars keep the crossing bit-exact, so split-fidelity holds over
// sockets too. Does not own the descriptors.
class SocketLink : public CutLink {
 public:
  SocketLink(int read_fd, int write_fd) : read_fd_(read_fd), write_fd_(write_fd) {}

 protected:
  void push(bool forward, const Matrix& m) override;
  Matrix pull(bool forward) override;

 private:
  int read_fd_, write_fd_;
};

// Both ends of a local socketpair; lets a single-threaded training loop send
// and receive through the kernel. Owns and closes the pair.
class LoopbackSocketLink : public SocketLink {
 public:
  LoopbackSocketLink();
  ~LoopbackSocketLink() override;
  LoopbackSocketLink(const LoopbackSocketLink&) = delete;
  LoopbackSocketLink& operator=(const LoopbackSocketLink&) = delete;

 private:
  explicit LoopbackSocketLink(std::pair<int, int> fds);
  int fd0_, fd1_;
};

struct LinkError : std::runtime_error {
  explicit LinkError(const std::string& what) : std::runtime_error(what) {}
};

struct TrainConfig {
  std::size_t max_epochs = 2000;
  std::size_t batch_size = 32;
  double lr = 1e-3;
  // Step decay: lr is multiplied by lr_decay every lr_decay_every epochs,
  // never dropping below lr_min (a floor keeps the memorization tail moving).
  double lr_decay = 0.6;
  std::size_t lr_decay_every = 150;
  double lr_min = 6e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double target_bit_accuracy = 1.0;
  // Pre-binarization margin every output bit must clear before early stop;
  // keeps verdicts stable under 32-bit wire quantization (noise ~1e-7).
  double margin = 0.01;
  // Pre-binarization MAE the early stop must also reach; 1.0 disables it.
  // Enrollment tightens this on the response path.
  double target_mae = 1.0;
  std::size_t check_every = 5;  // epochs between early-stop checks
  std::uint64_t seed = 1;
  // Batch-boundary checkpointing: every N completed batches the phase writes
  // models + optimizer state to checkpoint_path and resumes from it on the
  // next run. 0 or an empty path disables it.
  std::string checkpoint_path;
  std::size_t checkpoint_every = 0;
  // Invoked at every early-stop check: (epoch, loss, bit accuracy, worst
  // margin, mae). For progress reporting; must not mutate training state.
  std::function<void(std::size_t, double, double, double, double)> on_check;
};

struct TrainReport {
  std::vector<double> epoch_loss;
  std::size_t epochs_run = 0;
  double bit_accuracy = 0.0;
  double mae = 0.0;
  double bit_flip_rate = 0.0;
  bool converged = false;
};

struct TrainError : std::runtime_error {
  TrainError(const std::string& what, TrainReport r)
      : std::runtime_error(what), report(std::move(r)) {}
  TrainReport report;
};

// Supervised regression index bits -> challenge||response bits, trained to
// exact memorization of the enrolled set.
models::DnnCrpGenerator train_dnn_generator(const puf::CrpDataset& dataset,
                                            const TrainConfig& cfg, TrainReport* report);

// Phase (a): Encoder1 | cut | BasicEncoder2 + Decoder2, autoencoding the
// enrolled challenges across the boundary.
TrainReport phase_a(const puf::CrpDataset& dataset, models::Encoder1& enc1,
                    models::BasicEncoder2& benc2, models::Decoder2& dec2, CutLink& link,
                    const TrainConfig& cfg);

// Phase (b): frozen Encoder1 and frozen base; extension | cut | Decoder1
// learn the latent-response path to the true responses.
TrainReport phase_b(const puf::CrpDataset& dataset, const models::Encoder1& enc1,
                    models::ExtendedEncoder2& xenc2, models::Decoder1& dec1, CutLink& link,
                    const TrainConfig& cfg);

// Monolithic comparators for the split-fidelity check: same batch schedule,
// same kernels, no link.
void train_autoencoder_monolithic(const puf::CrpDataset& dataset, models::Encoder1& enc1,
                                  models::BasicEncoder2& benc2, models::Decoder2& dec2,
                                  const TrainConfig& cfg);

struct EnrollResult {
  models::ModelBundle bundle;
  TrainReport dnn_report, phase_a_report, phase_b_report;
};

// Full enrollment pipeline: generator training, phase (a), phase (b),
// latent box + delta calibration.
EnrollResult enroll(const puf::CrpDataset& dataset, const TrainConfig& cfg);

// Enrolled-set metrics over the full response path (and repeated passes for
// the bit-flip rate).
TrainReport evaluate_bundle(const models::ModelBundle& bundle, const puf::CrpDataset& dataset,
                            std::size_t repeat_passes = 10);

}  // namespace lpan::sl
