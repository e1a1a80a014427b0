#pragma once

// Single-hidden-layer perceptron: input -> ReLU(H) -> softmax(C), trained with
// mean softmax cross-entropy. Templated on the scalar so the gradient check
// can run in double while production heads stay float.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <vector>

namespace voxworld {

/// Uniform double in [0, 1) from the top 53 bits; avoids the
/// implementation-defined std::uniform_real_distribution.
inline double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

template <typename Scalar>
struct MlpParams {
  std::size_t inputs = 0;
  std::size_t hidden = 0;
  std::size_t classes = 0;
  std::vector<Scalar> w1;  // inputs x hidden, input-major
  std::vector<Scalar> b1;  // hidden
  std::vector<Scalar> w2;  // hidden x classes
  std::vector<Scalar> b2;  // classes

  MlpParams() = default;
  MlpParams(std::size_t in, std::size_t hid, std::size_t out)
      : inputs(in), hidden(hid), classes(out),
        w1(in * hid, 0), b1(hid, 0), w2(hid * out, 0), b2(out, 0) {}

  std::vector<std::uint32_t> layer_sizes() const {
    return {static_cast<std::uint32_t>(inputs), static_cast<std::uint32_t>(hidden),
            static_cast<std::uint32_t>(classes)};
  }

  /// Scaled uniform (Glorot) weights, zero biases.
  void initialize(std::mt19937_64& rng) {
    auto fill = [&](std::vector<Scalar>& w, std::size_t fan_in, std::size_t fan_out) {
      const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
      for (auto& v : w) v = static_cast<Scalar>((2.0 * unit_uniform(rng) - 1.0) * a);
    };
    fill(w1, inputs, hidden);
    fill(w2, hidden, classes);
    std::fill(b1.begin(), b1.end(), Scalar{0});
    std::fill(b2.begin(), b2.end(), Scalar{0});
  }

  bool all_finite() const {
    auto ok = [](const std::vector<Scalar>& v) {
      return std::all_of(v.begin(), v.end(), [](Scalar s) { return std::isfinite(s); });
    };
    return ok(w1) && ok(b1) && ok(w2) && ok(b2);
  }

  template <typename F>
  void for_each_tensor(F&& f) {
    f(w1);
    f(b1);
    f(w2);
    f(b2);
  }

  bool operator==(const MlpParams&) const = default;
};

/// Scratch space for one example's forward pass.
template <typename Scalar>
struct MlpActivations {
  std::vector<Scalar> hidden_pre;
  std::vector<Scalar> hidden;
  std::vector<double> probs;
};

template <typename Scalar>
void mlp_forward(const MlpParams<Scalar>& p, std::span<const Scalar> x,
                 MlpActivations<Scalar>& act) {
  act.hidden_pre.assign(p.b1.begin(), p.b1.end());
  for (std::size_t d = 0; d < p.inputs; ++d) {
    const Scalar xd = x[d];
    if (xd == Scalar{0}) continue;
    const Scalar* w = p.w1.data() + d * p.hidden;
    Scalar* h = act.hidden_pre.data();
    for (std::size_t j = 0; j < p.hidden; ++j) h[j] += xd * w[j];
  }
  act.hidden.resize(p.hidden);
  for (std::size_t j = 0; j < p.hidden; ++j) {
    act.hidden[j] = std::max(Scalar{0}, act.hidden_pre[j]);
  }
  std::vector<Scalar> logits(p.b2.begin(), p.b2.end());
  for (std::size_t j = 0; j < p.hidden; ++j) {
    const Scalar hj = act.hidden[j];
    if (hj == Scalar{0}) continue;
    const Scalar* w = p.w2.data() + j * p.classes;
    for (std::size_t c = 0; c < p.classes; ++c) logits[c] += hj * w[c];
  }
  const double top = *std::max_element(logits.begin(), logits.end());
  act.probs.resize(p.classes);
  double sum = 0.0;
  for (std::size_t c = 0; c < p.classes; ++c) {
    act.probs[c] = std::exp(static_cast<double>(logits[c]) - top);
    sum += act.probs[c];
  }
  for (auto& v : act.probs) v /= sum;
}

template <typename Scalar>
std::vector<double> mlp_predict(const MlpParams<Scalar>& p, std::span<const Scalar> x) {
  MlpActivations<Scalar> act;
  mlp_forward(p, x, act);
  return act.probs;
}

inline double cross_entropy(const std::vector<double>& probs, std::uint32_t label) {
  return -std::log(std::max(probs[label], std::numeric_limits<double>::min()));
}

/// Accumulates the gradient of the mean cross-entropy over a mini-batch into
/// `grad` and returns the summed (not averaged) loss. Each weight row is
/// visited once per batch and reused across its examples.
template <typename Scalar>
double mlp_backprop_batch(const MlpParams<Scalar>& p,
                          std::span<const std::span<const Scalar>> rows,
                          std::span<const std::uint32_t> labels, MlpParams<Scalar>& grad) {
  const std::size_t batch = rows.size();
  const std::size_t hid = p.hidden;
  const std::size_t cls = p.classes;
  const Scalar weight = Scalar{1} / static_cast<Scalar>(batch);

  std::vector<Scalar> pre(batch * hid);
  for (std::size_t b = 0; b < batch; ++b) std::copy(p.b1.begin(), p.b1.end(), pre.begin() + b * hid);
  for (std::size_t d = 0; d < p.inputs; ++d) {
    const Scalar* w = p.w1.data() + d * hid;
    for (std::size_t b = 0; b < batch; ++b) {
      const Scalar xd = rows[b][d];
      if (xd == Scalar{0}) continue;
      Scalar* h = pre.data() + b * hid;
      for (std::size_t j = 0; j < hid; ++j) h[j] += xd * w[j];
    }
  }

  double loss = 0.0;
  std::vector<Scalar> act(batch * hid);
  std::vector<Scalar> dlogits(batch * cls);
  std::vector<Scalar> logits(cls);
  for (std::size_t b = 0; b < batch; ++b) {
    Scalar* a = act.data() + b * hid;
    const Scalar* h = pre.data() + b * hid;
    for (std::size_t j = 0; j < hid; ++j) a[j] = std::max(Scalar{0}, h[j]);
    std::copy(p.b2.begin(), p.b2.end(), logits.begin());
    for (std::size_t j = 0; j < hid; ++j) {
      if (a[j] == Scalar{0}) continue;
      const Scalar* w = p.w2.data() + j * cls;
      for (std::size_t c = 0; c < cls; ++c) logits[c] += a[j] * w[c];
    }
    const double top = *std::max_element(logits.begin(), logits.end());
    std::vector<double> probs(cls);
    double sum = 0.0;
    for (std::size_t c = 0; c < cls; ++c) {
      probs[c] = std::exp(static_cast<double>(logits[c]) - top);
      sum += probs[c];
    }
    for (auto& v : probs) v /= sum;
    loss += cross_entropy(probs, labels[b]);
    for (std::size_t c = 0; c < cls; ++c) {
      dlogits[b * cls + c] = static_cast<Scalar>(probs[c] - (c == labels[b] ? 1.0 : 0.0)) * weight;
    }
  }

  std::vector<Scalar> dpre(batch * hid, Scalar{0});
  for (std::size_t b = 0; b < batch; ++b) {
    const Scalar* dl = dlogits.data() + b * cls;
    const Scalar* a = act.data() + b * hid;
    const Scalar* h = pre.data() + b * hid;
    Scalar* dh = dpre.data() + b * hid;
    for (std::size_t c = 0; c < cls; ++c) grad.b2[c] += dl[c];
    for (std::size_t j = 0; j < hid; ++j) {
      if (h[j] <= Scalar{0}) continue;
      const Scalar* w = p.w2.data() + j * cls;
      Scalar* g = grad.w2.data() + j * cls;
      Scalar acc = 0;
      for (std::size_t c = 0; c < cls; ++c) {
        g[c] += a[j] * dl[c];
        acc += w[c] * dl[c];
      }
      dh[j] = acc;
    }
    for (std::size_t j = 0; j < hid; ++j) grad.b1[j] += dh[j];
  }
  for (std::size_t d = 0; d < p.inputs; ++d) {
    Scalar* g = grad.w1.data() + d * hid;
    for (std::size_t b = 0; b < batch; ++b) {
      const Scalar xd = rows[b][d];
      if (xd == Scalar{0}) continue;
      const Scalar* dh = dpre.data() + b * hid;
      for (std::size_t j = 0; j < hid; ++j) g[j] += xd * dh[j];
    }
  }
  return loss;
}

}  // namespace voxworld
