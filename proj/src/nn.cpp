#include "lpan/nn.hpp"

#include <cmath>
#include <random>

namespace lpan::nn {

void Mlp::check_consistent() const {
  require_shape(!layers.empty(), "mlp: no layers");
  require_shape(frozen.size() == layers.size(), "mlp: frozen mask size mismatch");
  for (std::size_t k = 0; k + 1 < layers.size(); ++k)
    require_shape(layers[k].out_dim() == layers[k + 1].in_dim(),
                  "mlp: layer " + std::to_string(k) + " out != layer " +
                      std::to_string(k + 1) + " in");
  for (const auto& l : layers)
    require_shape(l.bias.size() == l.out_dim(), "mlp: bias length != out dim");
}

void Mlp::freeze_all() { frozen.assign(layers.size(), true); }

std::size_t Mlp::param_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weights.size() + l.bias.size();
  return n;
}

static Matrix row_matrix(const std::vector<double>& v) {
  Matrix m(1, v.size());
  for (std::size_t i = 0; i < v.size(); ++i) m(0, i) = v[i];
  return m;
}

ActivationTrace forward(const Mlp& mlp, const Matrix& input) {
  require_shape(input.cols() == mlp.in_dim(), "forward: input width mismatch");
  ActivationTrace tr;
  tr.input = input;
  const Matrix* x = &tr.input;
  tr.pre.reserve(mlp.layers.size());
  tr.post.reserve(mlp.layers.size());
  for (const auto& layer : mlp.layers) {
    Matrix z = Matrix::multiply_bt(*x, layer.weights);  // (B x out)
    for (std::size_t r = 0; r < z.rows(); ++r)
      for (std::size_t c = 0; c < z.cols(); ++c) z(r, c) += layer.bias[c];
    tr.pre.push_back(z);
    if (layer.activation == Activation::ReLU) {
      for (double& v : z.storage()) v = v > 0.0 ? v : 0.0;
    }
    tr.post.push_back(std::move(z));
    x = &tr.post.back();
  }
  return tr;
}

ActivationTrace forward(const Mlp& mlp, const std::vector<double>& input) {
  return forward(mlp, row_matrix(input));
}

std::vector<double> forward_vec(const Mlp& mlp, const std::vector<double>& input) {
  ActivationTrace tr = forward(mlp, input);
  const Matrix& out = tr.output();
  return std::vector<double>(out.data(), out.data() + out.cols());
}

Gradients backward(const Mlp& mlp, const ActivationTrace& trace, const Matrix& output_grad) {
  require_shape(trace.pre.size() == mlp.layers.size(), "backward: trace/mlp mismatch");
  require_shape(output_grad.rows() == trace.output().rows() &&
                    output_grad.cols() == trace.output().cols(),
                "backward: output grad shape mismatch");
  Gradients g;
  g.layers.resize(mlp.layers.size());
  Matrix delta = output_grad;  // dLoss/d(post-activation of current layer)
  for (std::size_t k = mlp.layers.size(); k-- > 0;) {
    const DenseLayer& layer = mlp.layers[k];
    if (layer.activation == Activation::ReLU) {
      const Matrix& pre = trace.pre[k];
      for (std::size_t i = 0; i < delta.size(); ++i)
        if (pre.storage()[i] <= 0.0) delta.storage()[i] = 0.0;
    }
    const Matrix& layer_in = (k == 0) ? trace.input : trace.post[k - 1];
    if (!mlp.frozen[k]) {
      g.layers[k].d_weights = Matrix::multiply_at(delta, layer_in);  // (out x in)
      g.layers[k].d_bias.assign(layer.out_dim(), 0.0);
      for (std::size_t r = 0; r < delta.rows(); ++r)
        for (std::size_t c = 0; c < delta.cols(); ++c)
          g.layers[k].d_bias[c] += delta(r, c);
    }
    delta = Matrix::multiply(delta, layer.weights);  // (B x in)
  }
  g.d_input = std::move(delta);
  return g;
}

std::pair<double, Matrix> mse_loss(const Matrix& pred, const Matrix& target) {
  require_shape(pred.same_shape(target), "mse: shape mismatch");
  Matrix grad(pred.rows(), pred.cols());
  double loss = 0.0;
  const double n = static_cast<double>(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred.storage()[i] - target.storage()[i];
    loss += d * d;
    grad.storage()[i] = 2.0 * d / n;
  }
  return {loss / n, grad};
}

std::pair<double, std::vector<double>> mse_loss(const std::vector<double>& pred,
                                                const std::vector<double>& target) {
  auto [loss, g] = mse_loss(row_matrix(pred), row_matrix(target));
  return {loss, std::vector<double>(g.data(), g.data() + g.cols())};
}

AdamState AdamState::for_mlp(const Mlp& mlp, double lr, double beta1, double beta2,
                             double epsilon) {
  AdamState s;
  s.lr = lr;
  s.beta1 = beta1;
  s.beta2 = beta2;
  s.epsilon = epsilon;
  s.layers.resize(mlp.layers.size());
  for (std::size_t k = 0; k < mlp.layers.size(); ++k) {
    const auto& l = mlp.layers[k];
    s.layers[k].m_w = Matrix(l.out_dim(), l.in_dim());
    s.layers[k].v_w = Matrix(l.out_dim(), l.in_dim());
    s.layers[k].m_b.assign(l.out_dim(), 0.0);
    s.layers[k].v_b.assign(l.out_dim(), 0.0);
  }
  return s;
}

static void adam_update(double& w, double g, double& m, double& v, const AdamState& s,
                        double bc1, double bc2) {
  m = s.beta1 * m + (1.0 - s.beta1) * g;
  v = s.beta2 * v + (1.0 - s.beta2) * g * g;
  const double mhat = m / bc1;
  const double vhat = v / bc2;
  w -= s.lr * mhat / (std::sqrt(vhat) + s.epsilon);
}

void adam_step(Mlp& mlp, const Gradients& grads, AdamState& state) {
  require_shape(state.layers.size() == mlp.layers.size(), "adam: state/mlp mismatch");
  require_shape(grads.layers.size() == mlp.layers.size(), "adam: grads/mlp mismatch");
  state.t += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (std::size_t k = 0; k < mlp.layers.size(); ++k) {
    if (mlp.frozen[k]) continue;
    DenseLayer& l = mlp.layers[k];
    const LayerGrads& lg = grads.layers[k];
    require_shape(lg.d_weights.same_shape(l.weights), "adam: weight grad shape mismatch");
    auto& mo = state.layers[k];
    for (std::size_t i = 0; i < l.weights.size(); ++i)
      adam_update(l.weights.storage()[i], lg.d_weights.storage()[i], mo.m_w.storage()[i],
                  mo.v_w.storage()[i], state, bc1, bc2);
    for (std::size_t i = 0; i < l.bias.size(); ++i)
      adam_update(l.bias[i], lg.d_bias[i], mo.m_b[i], mo.v_b[i], state, bc1, bc2);
  }
}

Mlp init_mlp(const std::vector<std::size_t>& layer_sizes,
             const std::vector<Activation>& activations, std::uint64_t seed) {
  require_shape(layer_sizes.size() >= 2, "init_mlp: need at least one layer");
  require_shape(activations.size() == layer_sizes.size() - 1,
                "init_mlp: one activation per layer");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Mlp mlp;
  for (std::size_t k = 0; k + 1 < layer_sizes.size(); ++k) {
    DenseLayer l;
    const std::size_t fan_in = layer_sizes[k];
    const std::size_t fan_out = layer_sizes[k + 1];
    l.activation = activations[k];
    l.weights = Matrix(fan_out, fan_in);
    const double scale = activations[k] == Activation::ReLU
                             ? std::sqrt(2.0 / static_cast<double>(fan_in))
                             : std::sqrt(2.0 / static_cast<double>(fan_in + fan_out));
    for (double& w : l.weights.storage()) w = scale * gauss(rng);
    l.bias.assign(fan_out, 0.0);
    mlp.layers.push_back(std::move(l));
  }
  mlp.frozen.assign(mlp.layers.size(), false);
  mlp.check_consistent();
  return mlp;
}

Mlp concat(const std::vector<const Mlp*>& parts) {
  Mlp out;
  for (const Mlp* p : parts) {
    for (std::size_t k = 0; k < p->layers.size(); ++k) {
      out.layers.push_back(p->layers[k]);
      out.frozen.push_back(p->frozen[k]);
    }
  }
  out.check_consistent();
  return out;
}

}  // namespace lpan::nn
