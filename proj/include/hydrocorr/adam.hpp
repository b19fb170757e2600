#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "hydrocorr/autodiff.hpp"

namespace hydrocorr::ad {

enum class LayerKind { conv, transposed_conv, dense };
enum class Constraint { none, nonnegative };

inline const char* to_string(LayerKind k) {
  switch (k) {
    case LayerKind::conv: return "conv";
    case LayerKind::transposed_conv: return "transposed_conv";
    case LayerKind::dense: return "dense";
  }
  return "?";
}

template <class S>
struct LayerParams {
  std::string name;
  LayerKind kind = LayerKind::conv;
  Constraint constraint = Constraint::none;
  Tensor<S> weights;  // requires_grad leaf
  Tensor<S> bias;     // requires_grad leaf
};

// Adam with bias correction. m/v are indexed by the flattened tensor list
// [w0, b0, w1, b1, ...] of the layer list handed to init().
template <class S>
struct AdamState {
  long step_count = 0;
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::vector<std::vector<S>> m, v;
};

template <class S>
std::vector<Tensor<S>> flatten_params(std::vector<LayerParams<S>*>& layers) {
  std::vector<Tensor<S>> out;
  for (auto* l : layers) {
    out.push_back(l->weights);
    out.push_back(l->bias);
  }
  return out;
}

template <class S>
AdamState<S> adam_init(std::vector<LayerParams<S>*> layers, double lr = 0.01) {
  AdamState<S> st;
  st.lr = lr;
  for (auto& t : flatten_params(layers)) {
    st.m.emplace_back(t.size(), S(0));
    st.v.emplace_back(t.size(), S(0));
  }
  return st;
}

// One optimizer step: Adam update with bias correction, then the nonnegative
// projection for constrained layer weights, then grads are cleared. Skipped
// (zero) gradients on a fresh state leave parameters unchanged.
template <class S>
void adam_step(std::vector<LayerParams<S>*> layers, AdamState<S>& state) {
  auto tensors = flatten_params(layers);
  if (tensors.size() != state.m.size())
    throw InvalidInput("adam_step: state does not match parameter list");
  for (const auto& t : tensors)
    if (t.grad().empty())
      throw InvalidInput("adam_step: missing grad for a parameter tensor");

  state.step_count += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, state.step_count);
  const double bc2 = 1.0 - std::pow(state.beta2, state.step_count);

  for (std::size_t ti = 0; ti < tensors.size(); ++ti) {
    auto& val = tensors[ti].value();
    const auto& grad = tensors[ti].grad();
    auto& m = state.m[ti];
    auto& v = state.v[ti];
    for (std::size_t i = 0; i < val.size(); ++i) {
      const double g = static_cast<double>(grad[i]);
      const double mi =
          state.beta1 * static_cast<double>(m[i]) + (1.0 - state.beta1) * g;
      const double vi = state.beta2 * static_cast<double>(v[i]) +
                        (1.0 - state.beta2) * g * g;
      m[i] = static_cast<S>(mi);
      v[i] = static_cast<S>(vi);
      const double mhat = mi / bc1;
      const double vhat = vi / bc2;
      val[i] = static_cast<S>(static_cast<double>(val[i]) -
                              state.lr * mhat / (std::sqrt(vhat) + state.eps));
    }
  }

  for (auto* l : layers) {
    if (l->constraint == Constraint::nonnegative)
      for (auto& wv : l->weights.value())
        if (wv < S(0)) wv = S(0);
    l->weights.zero_grad();
    l->bias.zero_grad();
  }
}

}  // namespace hydrocorr::ad
