#pragma once

#include "doctest.h"

#include "lpan/nn.hpp"

#include <cmath>

namespace testutil {

// Central finite differences on the scalar batch loss; independent of the
// analytic backward path.
inline double numeric_grad(lpan::nn::Mlp& mlp, const lpan::Matrix& x,
                           const lpan::Matrix& target, double* param) {
  const double h = 1e-5;
  const double saved = *param;
  *param = saved + h;
  double up = lpan::nn::mse_loss(lpan::nn::forward(mlp, x).output(), target).first;
  *param = saved - h;
  double down = lpan::nn::mse_loss(lpan::nn::forward(mlp, x).output(), target).first;
  *param = saved;
  return (up - down) / (2.0 * h);
}

inline void check_grads_against_fd(lpan::nn::Mlp& mlp, const lpan::Matrix& x,
                                   const lpan::Matrix& target, double rel_tol = 1e-4) {
  auto tr = lpan::nn::forward(mlp, x);
  auto [loss, dy] = lpan::nn::mse_loss(tr.output(), target);
  (void)loss;
  auto g = lpan::nn::backward(mlp, tr, dy);
  std::size_t bad = 0;
  for (std::size_t k = 0; k < mlp.layers.size(); ++k) {
    if (mlp.frozen[k]) continue;
    auto& l = mlp.layers[k];
    for (std::size_t i = 0; i < l.weights.size(); ++i) {
      const double analytic = g.layers[k].d_weights.storage()[i];
      const double numeric = numeric_grad(mlp, x, target, &l.weights.storage()[i]);
      if (std::fabs(analytic - numeric) >
          rel_tol * std::max(1.0, std::max(std::fabs(analytic), std::fabs(numeric))))
        ++bad;
    }
    for (std::size_t i = 0; i < l.bias.size(); ++i) {
      const double analytic = g.layers[k].d_bias[i];
      const double numeric = numeric_grad(mlp, x, target, &l.bias[i]);
      if (std::fabs(analytic - numeric) >
          rel_tol * std::max(1.0, std::max(std::fabs(analytic), std::fabs(numeric))))
        ++bad;
    }
  }
  CHECK(bad == 0);
}

}  // namespace testutil
