#pragma once

// AdamW with decoupled weight decay:
//   p <- p - lr*wd*p
//   m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2
//   p <- p - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)

#include <cmath>

#include "mgnn/core.hpp"

namespace mgnn::nn {

struct AdamWConfig {
  double lr = 1e-5;
  double weight_decay = 1.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One update of a single tensor; `step` counts from 1.
template <typename P, typename G>
void adamw_update(Eigen::DenseBase<P>& param, const Eigen::DenseBase<G>& grad, Eigen::DenseBase<P>& m,
                  Eigen::DenseBase<P>& v, long step, const AdamWConfig& c) {
  using S = typename P::Scalar;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(step));
  param.derived().array() *= static_cast<S>(1.0 - c.lr * c.weight_decay);
  m.derived().array() = static_cast<S>(c.beta1) * m.derived().array() + static_cast<S>(1.0 - c.beta1) * grad.derived().array();
  v.derived().array() = static_cast<S>(c.beta2) * v.derived().array() +
                        static_cast<S>(1.0 - c.beta2) * grad.derived().array().square();
  param.derived().array() -= static_cast<S>(c.lr / bc1) * m.derived().array() /
                             ((v.derived().array() / static_cast<S>(bc2)).sqrt() + static_cast<S>(c.eps));
}

/// Moment buffers shaped like a parameter struct exposing each_trainable.
template <typename Params>
struct AdamW {
  AdamWConfig config;
  Params m, v;
  long step = 0;

  AdamW() = default;
  AdamW(const Params& like, AdamWConfig cfg) : config(cfg), m(like.zeros_like()), v(like.zeros_like()) {}

  void update(Params& params, Params& grads) {
    ++step;
    Params::each_trainable(
        [&](const std::string&, auto& p, auto& g, auto& mm, auto& vv) { adamw_update(p, g, mm, vv, step, config); },
        params, grads, m, v);
  }
};

}  // namespace mgnn::nn
