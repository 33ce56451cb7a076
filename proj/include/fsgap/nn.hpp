#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "fsgap/error.hpp"
#include "fsgap/rng.hpp"

namespace fsgap::nn {

struct LossGrad {
  double loss = 0.0;
  Eigen::VectorXd dlogits;
};

// Softmax cross-entropy with max-subtraction stabilization.
// loss = -log softmax(logits)[label];  dlogits = softmax(logits) - onehot.
inline LossGrad ce_loss(const Eigen::VectorXd& logits, Eigen::Index label) {
  require(label >= 0 && label < logits.size(), errc::invalid_argument,
          "ce_loss: label out of range");
  const double shift = logits.maxCoeff();
  Eigen::VectorXd p = (logits.array() - shift).exp();
  const double z = p.sum();
  p /= z;
  LossGrad out;
  out.loss = std::log(z) + shift - logits(label);
  out.dlogits = p;
  out.dlogits(label) -= 1.0;
  return out;
}

// Half-cosine decay from base_lr at epoch 0 to 0 at epoch == total_epochs.
inline double cosine_lr(int epoch, int total_epochs, double base_lr) {
  require(total_epochs >= 1, errc::invalid_argument, "cosine_lr: total_epochs must be positive");
  require(epoch >= 0 && epoch <= total_epochs, errc::invalid_argument,
          "cosine_lr: epoch outside [0, total_epochs]");
  return base_lr * 0.5 *
         (1.0 + std::cos(std::numbers::pi * static_cast<double>(epoch) /
                         static_cast<double>(total_epochs)));
}

// ---------------------------------------------------------------------------
// AdamW with decoupled weight decay. Parameters live in one flat vector per
// head; decay_mask selects the entries the decay term applies to.
// ---------------------------------------------------------------------------

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  double base_lr = 1e-3;
  bool decay_bias = false;  // biases sit outside the decay term by default
};

struct OptimizerState {
  Eigen::VectorXd m;  // first moment
  Eigen::VectorXd v;  // second moment
  long t = 0;
  AdamWConfig cfg;

  static OptimizerState init(Eigen::Index n, AdamWConfig cfg = {}) {
    OptimizerState st;
    st.m = Eigen::VectorXd::Zero(n);
    st.v = Eigen::VectorXd::Zero(n);
    st.cfg = cfg;
    return st;
  }
};

inline void adamw_step(OptimizerState& st, Eigen::Ref<Eigen::VectorXd> params,
                       const Eigen::Ref<const Eigen::VectorXd>& grads,
                       const Eigen::Ref<const Eigen::VectorXd>& decay_mask, double lr) {
  require(params.size() == grads.size() && params.size() == st.m.size() &&
              params.size() == decay_mask.size(),
          errc::dimension_mismatch, "adamw_step: shape mismatch");
  st.t += 1;
  st.m = st.cfg.beta1 * st.m + (1.0 - st.cfg.beta1) * grads;
  st.v = st.cfg.beta2 * st.v + (1.0 - st.cfg.beta2) * grads.cwiseProduct(grads);
  const double bc1 = 1.0 - std::pow(st.cfg.beta1, static_cast<double>(st.t));
  const double bc2 = 1.0 - std::pow(st.cfg.beta2, static_cast<double>(st.t));
  const Eigen::ArrayXd m_hat = st.m.array() / bc1;
  const Eigen::ArrayXd v_hat = st.v.array() / bc2;
  params.array() -= lr * (m_hat / (v_hat.sqrt() + st.cfg.eps) +
                          st.cfg.weight_decay * decay_mask.array() * params.array());
}

// ---------------------------------------------------------------------------
// Linear probe: logits = W x + b over a single pooled feature vector.
// ---------------------------------------------------------------------------

struct LinearHead {
  Eigen::Index num_classes = 0;
  Eigen::Index dim = 0;
  Eigen::VectorXd theta;  // [W (classes*dim), b (classes)]

  static LinearHead zeros(Eigen::Index classes, Eigen::Index dim) {
    LinearHead h;
    h.num_classes = classes;
    h.dim = dim;
    h.theta = Eigen::VectorXd::Zero(classes * dim + classes);
    return h;
  }

  // uniform(-scale/sqrt(fan_in), +scale/sqrt(fan_in)); scale 0 gives zeros
  static LinearHead random(Eigen::Index classes, Eigen::Index dim, Rng& rng, double scale = 1.0) {
    LinearHead h = zeros(classes, dim);
    const double bound = scale / std::sqrt(static_cast<double>(dim));
    for (Eigen::Index i = 0; i < h.theta.size(); ++i) h.theta(i) = rng.uniform(-bound, bound);
    return h;
  }

  Eigen::Map<Eigen::MatrixXd> weight() { return {theta.data(), num_classes, dim}; }
  Eigen::Map<const Eigen::MatrixXd> weight() const { return {theta.data(), num_classes, dim}; }
  Eigen::Map<Eigen::VectorXd> bias() { return {theta.data() + num_classes * dim, num_classes}; }
  Eigen::Map<const Eigen::VectorXd> bias() const {
    return {theta.data() + num_classes * dim, num_classes};
  }

  Eigen::VectorXd decay_mask(bool decay_bias) const {
    Eigen::VectorXd mask = Eigen::VectorXd::Ones(theta.size());
    if (!decay_bias) mask.tail(num_classes).setZero();
    return mask;
  }

  Eigen::VectorXd forward(const Eigen::VectorXd& x) const {
    require(x.size() == dim, errc::dimension_mismatch,
            "linear forward: input dim " + std::to_string(x.size()) + ", head expects " +
                std::to_string(dim));
    return weight() * x + bias();
  }
};

struct BackwardResult {
  double loss = 0.0;
  Eigen::VectorXd grad;  // same layout as the head's theta
};

inline BackwardResult backward(const LinearHead& head, const Eigen::VectorXd& x,
                               Eigen::Index label) {
  const LossGrad lg = ce_loss(head.forward(x), label);
  BackwardResult out;
  out.loss = lg.loss;
  out.grad = Eigen::VectorXd::Zero(head.theta.size());
  Eigen::Map<Eigen::MatrixXd> dw(out.grad.data(), head.num_classes, head.dim);
  dw = lg.dlogits * x.transpose();
  out.grad.tail(head.num_classes) = lg.dlogits;
  return out;
}

// ---------------------------------------------------------------------------
// Temporal convolutional head: a stack of width-3 dilated convolutions
// (dilation doubling per layer) with ReLU and identity residuals where the
// channel counts match, global average pooling over time, and a linear
// output layer. Sequences are (channels x time) matrices.
// ---------------------------------------------------------------------------

inline constexpr int kTcnKernelWidth = 3;

struct TcnConfig {
  Eigen::Index input_dim = 0;
  Eigen::Index channels = 64;
  int num_layers = 3;  // dilations 1, 2, 4, ...
  Eigen::Index num_classes = 2;
};

// One zero-padded, same-length dilated convolution with a width-3 kernel.
// taps are (prev, center, next) applied at offsets (-dilation, 0, +dilation).
inline Eigen::MatrixXd dilated_conv1d(const Eigen::Ref<const Eigen::MatrixXd>& x,
                                      const Eigen::Ref<const Eigen::MatrixXd>& tap_prev,
                                      const Eigen::Ref<const Eigen::MatrixXd>& tap_center,
                                      const Eigen::Ref<const Eigen::MatrixXd>& tap_next,
                                      const Eigen::Ref<const Eigen::VectorXd>& bias,
                                      Eigen::Index dilation) {
  const Eigen::Index t = x.cols();
  const Eigen::Index ch_out = tap_center.rows();
  require(tap_prev.rows() == ch_out && tap_next.rows() == ch_out && bias.size() == ch_out &&
              tap_prev.cols() == x.rows() && tap_center.cols() == x.rows() &&
              tap_next.cols() == x.rows() && dilation >= 1,
          errc::dimension_mismatch, "dilated_conv1d: kernel/input shape mismatch");
  Eigen::MatrixXd out = tap_center * x;
  out.colwise() += bias;
  if (t > dilation) {
    const Eigen::Index span = t - dilation;
    out.rightCols(span).noalias() += tap_prev * x.leftCols(span);
    out.leftCols(span).noalias() += tap_next * x.rightCols(span);
  }
  return out;
}

struct TcnHead {
  TcnConfig cfg;
  Eigen::VectorXd theta;

  // flat layout per layer: taps prev|center|next (each ch_out*ch_in), bias;
  // then the output linear head: W (classes*channels), b (classes)
  Eigen::Index layer_in(int layer) const { return layer == 0 ? cfg.input_dim : cfg.channels; }

  Eigen::Index layer_offset(int layer) const {
    Eigen::Index off = 0;
    for (int l = 0; l < layer; ++l)
      off += kTcnKernelWidth * cfg.channels * layer_in(l) + cfg.channels;
    return off;
  }

  Eigen::Index out_offset() const { return layer_offset(cfg.num_layers); }

  Eigen::Index param_count() const {
    return out_offset() + cfg.num_classes * cfg.channels + cfg.num_classes;
  }

  // taps are indexed 0 = prev (-dilation), 1 = center, 2 = next (+dilation)
  Eigen::Map<const Eigen::MatrixXd> tap(int layer, int which) const {
    const Eigen::Index sz = cfg.channels * layer_in(layer);
    return {theta.data() + layer_offset(layer) + which * sz, cfg.channels, layer_in(layer)};
  }
  Eigen::Map<Eigen::MatrixXd> tap(int layer, int which) {
    const Eigen::Index sz = cfg.channels * layer_in(layer);
    return {theta.data() + layer_offset(layer) + which * sz, cfg.channels, layer_in(layer)};
  }
  Eigen::Map<const Eigen::VectorXd> layer_bias(int layer) const {
    const Eigen::Index sz = cfg.channels * layer_in(layer);
    return {theta.data() + layer_offset(layer) + kTcnKernelWidth * sz, cfg.channels};
  }
  Eigen::Map<Eigen::VectorXd> layer_bias(int layer) {
    const Eigen::Index sz = cfg.channels * layer_in(layer);
    return {theta.data() + layer_offset(layer) + kTcnKernelWidth * sz, cfg.channels};
  }
  Eigen::Map<const Eigen::MatrixXd> out_weight() const {
    return {theta.data() + out_offset(), cfg.num_classes, cfg.channels};
  }
  Eigen::Map<Eigen::MatrixXd> out_weight() {
    return {theta.data() + out_offset(), cfg.num_classes, cfg.channels};
  }
  Eigen::Map<const Eigen::VectorXd> out_bias() const {
    return {theta.data() + out_offset() + cfg.num_classes * cfg.channels, cfg.num_classes};
  }
  Eigen::Map<Eigen::VectorXd> out_bias() {
    return {theta.data() + out_offset() + cfg.num_classes * cfg.channels, cfg.num_classes};
  }

  static TcnHead zeros(TcnConfig cfg) {
    require(cfg.input_dim >= 1 && cfg.channels >= 1 && cfg.num_layers >= 1 &&
                cfg.num_classes >= 2,
            errc::invalid_argument, "TcnHead: bad config");
    TcnHead h;
    h.cfg = cfg;
    h.theta = Eigen::VectorXd::Zero(h.param_count());
    return h;
  }

  static TcnHead random(TcnConfig cfg, Rng& rng, double scale = 1.0) {
    TcnHead h = zeros(cfg);
    for (int l = 0; l < cfg.num_layers; ++l) {
      const double bound =
          scale / std::sqrt(static_cast<double>(h.layer_in(l) * kTcnKernelWidth));
      const Eigen::Index begin = h.layer_offset(l);
      const Eigen::Index end = h.layer_offset(l + 1);
      for (Eigen::Index i = begin; i < end; ++i) h.theta(i) = rng.uniform(-bound, bound);
    }
    const double bound = scale / std::sqrt(static_cast<double>(cfg.channels));
    for (Eigen::Index i = h.out_offset(); i < h.theta.size(); ++i)
      h.theta(i) = rng.uniform(-bound, bound);
    return h;
  }

  Eigen::VectorXd decay_mask(bool decay_bias) const {
    Eigen::VectorXd mask = Eigen::VectorXd::Ones(theta.size());
    if (!decay_bias) {
      for (int l = 0; l < cfg.num_layers; ++l) {
        const Eigen::Index bias_begin =
            layer_offset(l) + kTcnKernelWidth * cfg.channels * layer_in(l);
        mask.segment(bias_begin, cfg.channels).setZero();
      }
      mask.tail(cfg.num_classes).setZero();
    }
    return mask;
  }

  int dilation(int layer) const { return 1 << layer; }

  Eigen::VectorXd forward(const Eigen::MatrixXd& x) const;
};

namespace detail {

struct TcnTrace {
  std::vector<Eigen::MatrixXd> inputs;   // per-layer input sequence
  std::vector<Eigen::MatrixXd> preacts;  // per-layer conv output before ReLU
  Eigen::MatrixXd features;              // final sequence before pooling
  Eigen::VectorXd pooled;
  Eigen::VectorXd logits;
};

inline TcnTrace tcn_trace(const TcnHead& head, const Eigen::MatrixXd& x) {
  require(x.rows() == head.cfg.input_dim, errc::dimension_mismatch,
          "tcn forward: input dim " + std::to_string(x.rows()) + ", head expects " +
              std::to_string(head.cfg.input_dim));
  require(x.cols() >= 1, errc::invalid_argument, "tcn forward: empty sequence");
  TcnTrace tr;
  Eigen::MatrixXd h = x;
  for (int l = 0; l < head.cfg.num_layers; ++l) {
    tr.inputs.push_back(h);
    Eigen::MatrixXd z = dilated_conv1d(h, head.tap(l, 0), head.tap(l, 1), head.tap(l, 2),
                                       head.layer_bias(l), head.dilation(l));
    tr.preacts.push_back(z);
    Eigen::MatrixXd y = z.cwiseMax(0.0);
    if (h.rows() == y.rows()) y += h;  // identity residual when channels match
    h = std::move(y);
  }
  tr.features = std::move(h);
  tr.pooled = tr.features.rowwise().mean();
  tr.logits = head.out_weight() * tr.pooled + head.out_bias();
  return tr;
}

}  // namespace detail

inline Eigen::VectorXd TcnHead::forward(const Eigen::MatrixXd& x) const {
  return detail::tcn_trace(*this, x).logits;
}

inline BackwardResult backward(const TcnHead& head, const Eigen::MatrixXd& x, Eigen::Index label) {
  const auto tr = detail::tcn_trace(head, x);
  const LossGrad lg = ce_loss(tr.logits, label);
  const Eigen::Index t = x.cols();

  BackwardResult out;
  out.loss = lg.loss;
  out.grad = Eigen::VectorXd::Zero(head.theta.size());

  // output linear layer
  Eigen::Map<Eigen::MatrixXd> dw_out(out.grad.data() + head.out_offset(), head.cfg.num_classes,
                                     head.cfg.channels);
  dw_out = lg.dlogits * tr.pooled.transpose();
  out.grad.tail(head.cfg.num_classes) = lg.dlogits;

  // global average pool spreads the gradient uniformly over time
  Eigen::VectorXd dpooled = head.out_weight().transpose() * lg.dlogits;
  Eigen::MatrixXd dh = (dpooled / static_cast<double>(t)).replicate(1, t);

  for (int l = head.cfg.num_layers - 1; l >= 0; --l) {
    const Eigen::MatrixXd& in = tr.inputs[static_cast<std::size_t>(l)];
    const Eigen::MatrixXd& z = tr.preacts[static_cast<std::size_t>(l)];
    const bool residual = in.rows() == z.rows();
    const Eigen::Index dil = head.dilation(l);
    const Eigen::MatrixXd dz = (z.array() > 0.0).select(dh, 0.0);

    const Eigen::Index sz = head.cfg.channels * head.layer_in(l);
    const Eigen::Index base = head.layer_offset(l);
    Eigen::Map<Eigen::MatrixXd> dtap_prev(out.grad.data() + base, head.cfg.channels,
                                          head.layer_in(l));
    Eigen::Map<Eigen::MatrixXd> dtap_center(out.grad.data() + base + sz, head.cfg.channels,
                                            head.layer_in(l));
    Eigen::Map<Eigen::MatrixXd> dtap_next(out.grad.data() + base + 2 * sz, head.cfg.channels,
                                          head.layer_in(l));
    Eigen::Map<Eigen::VectorXd> dbias(out.grad.data() + base + 3 * sz, head.cfg.channels);

    dtap_center = dz * in.transpose();
    dbias = dz.rowwise().sum();
    Eigen::MatrixXd din = head.tap(l, 1).transpose() * dz;
    if (t > dil) {
      const Eigen::Index span = t - dil;
      dtap_prev = dz.rightCols(span) * in.leftCols(span).transpose();
      dtap_next = dz.leftCols(span) * in.rightCols(span).transpose();
      din.leftCols(span).noalias() += head.tap(l, 0).transpose() * dz.rightCols(span);
      din.rightCols(span).noalias() += head.tap(l, 2).transpose() * dz.leftCols(span);
    }
    if (residual) din += dh;
    dh = std::move(din);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Central-difference gradient checking. Returns the worst relative error over
// the parameter entries. The denominator is floored at 1e-5 of the gradient's
// own scale: entries smaller than that sit below the cancellation noise of
// the difference quotient and carry no relative information.
// ---------------------------------------------------------------------------

namespace detail {

template <class LossFn>
double grad_check_flat(const Eigen::VectorXd& theta, const Eigen::VectorXd& analytic,
                       LossFn&& loss_of, double h) {
  const double floor = 1e-5 * std::max(1.0, analytic.cwiseAbs().maxCoeff());
  double worst = 0.0;
  Eigen::VectorXd probe = theta;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    probe(i) = theta(i) + h;
    const double up = loss_of(probe);
    probe(i) = theta(i) - h;
    const double down = loss_of(probe);
    probe(i) = theta(i);
    const double numeric = (up - down) / (2.0 * h);
    const double denom = std::max({std::abs(analytic(i)), std::abs(numeric), floor});
    worst = std::max(worst, std::abs(analytic(i) - numeric) / denom);
  }
  return worst;
}

}  // namespace detail

inline double grad_check(const LinearHead& head, const Eigen::VectorXd& x, Eigen::Index label,
                         double h = 1e-5) {
  require(h > 0.0, errc::invalid_argument, "grad_check: h must be positive");
  const Eigen::VectorXd analytic = backward(head, x, label).grad;
  LinearHead probe = head;
  return detail::grad_check_flat(
      head.theta, analytic,
      [&](const Eigen::VectorXd& theta) {
        probe.theta = theta;
        return ce_loss(probe.forward(x), label).loss;
      },
      h);
}

inline double grad_check(const TcnHead& head, const Eigen::MatrixXd& x, Eigen::Index label,
                         double h = 1e-5) {
  require(h > 0.0, errc::invalid_argument, "grad_check: h must be positive");
  const Eigen::VectorXd analytic = backward(head, x, label).grad;
  TcnHead probe = head;
  return detail::grad_check_flat(
      head.theta, analytic,
      [&](const Eigen::VectorXd& theta) {
        probe.theta = theta;
        return ce_loss(probe.forward(x), label).loss;
      },
      h);
}

}  // namespace fsgap::nn
