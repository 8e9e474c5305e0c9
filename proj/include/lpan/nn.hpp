#pragma once

#include "lpan/matrix.hpp"

#include <cstdint>
#include <vector>

namespace lpan::nn {

enum class Activation : std::uint8_t { ReLU = 0, Linear = 1 };

// Fully-connected layer: y = act(W x + b), W is (out x in).
struct DenseLayer {
  Matrix weights;
  std::vector<double> bias;
  Activation activation = Activation::Linear;

  std::size_t in_dim() const { return weights.cols(); }
  std::size_t out_dim() const { return weights.rows(); }
};

struct Mlp {
  std::vector<DenseLayer> layers;
  std::vector<bool> frozen;  // per layer; frozen layers never update

  std::size_t in_dim() const { return layers.front().in_dim(); }
  std::size_t out_dim() const { return layers.back().out_dim(); }
  void check_consistent() const;
  void freeze_all();
  std::size_t param_count() const;
};

// Everything backward() needs from a forward pass. Rows of each matrix are
// batch samples; the single-vector API is the one-row case.
struct ActivationTrace {
  Matrix input;
  std::vector<Matrix> pre;   // per layer, pre-activation
  std::vector<Matrix> post;  // per layer, post-activation
  const Matrix& output() const { return post.back(); }
};

struct LayerGrads {
  Matrix d_weights;          // empty for frozen layers
  std::vector<double> d_bias;
};

struct Gradients {
  std::vector<LayerGrads> layers;
  Matrix d_input;
};

ActivationTrace forward(const Mlp& mlp, const Matrix& input);
ActivationTrace forward(const Mlp& mlp, const std::vector<double>& input);
std::vector<double> forward_vec(const Mlp& mlp, const std::vector<double>& input);

// output_grad is dLoss/dOutput for the whole batch (already normalized by the
// loss). Frozen layers still propagate d_input but report no parameter grads.
Gradients backward(const Mlp& mlp, const ActivationTrace& trace, const Matrix& output_grad);

// loss = mean over all entries of (pred - target)^2; grad = dLoss/dpred.
std::pair<double, Matrix> mse_loss(const Matrix& pred, const Matrix& target);
std::pair<double, std::vector<double>> mse_loss(const std::vector<double>& pred,
                                                const std::vector<double>& target);

struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t t = 0;

  struct Moments {
    Matrix m_w, v_w;
    std::vector<double> m_b, v_b;
  };
  std::vector<Moments> layers;

  static AdamState for_mlp(const Mlp& mlp, double lr = 1e-3, double beta1 = 0.9,
                           double beta2 = 0.999, double epsilon = 1e-8);
};

// One optimizer step over all unfrozen layers. Frozen layers are skipped
// entirely (their moments stay zero).
void adam_step(Mlp& mlp, const Gradients& grads, AdamState& state);

// He init for ReLU layers, Xavier for Linear; fully determined by seed.
Mlp init_mlp(const std::vector<std::size_t>& layer_sizes,
             const std::vector<Activation>& activations, std::uint64_t seed);

// Concatenate networks into one (layers copied in order); used to compare
// split training against the monolithic stack.
Mlp concat(const std::vector<const Mlp*>& parts);

}  // namespace lpan::nn
