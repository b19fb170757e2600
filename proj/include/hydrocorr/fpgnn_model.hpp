#pragma once

// Network assembly: a slimmed FCN with three conv-conv-pool feature blocks
// (16,16 / 32,32 / 64,64 channels), three stride-2 deconvolution stages with
// 1x1-reduced skip additions, a sigmoid 1x1 head producing the water mask,
// and a nonnegative scalar dense head regressing water area from the mask
// sum. Templated on the storage scalar so the gradient-check suite can run
// the identical composition in double precision.

#include <array>
#include <cstdint>
#include <vector>

#include "hydrocorr/adam.hpp"
#include "hydrocorr/nn_ops.hpp"
#include "hydrocorr/rng.hpp"

namespace hydrocorr {

struct BandStats {
  double mean = 0.0;
  double stddev = 1.0;
};

struct TrainConfig {
  double lr = 0.01;
  double split_fraction = 0.8;
  double batch_fraction = 0.5;  // of the training set
  double threshold_start = 0.10;
  double threshold_stop = 0.55;
  double threshold_step = 0.05;
  int patience = 20;
  double range_gate = 0.9;
  int epoch_cap = 500;
  double dense_penalty_scale = 0.01;
  double range_term = 10.0;
  double clip_var_term = 100.0;
  int dry_patch_row = 0;
  int dry_patch_col = 0;
  int stratum_count = 4;
  int max_gap_days = 4;

  std::vector<double> threshold_grid() const {
    std::vector<double> grid;
    for (int i = 0;; ++i) {
      const double t = threshold_start + i * threshold_step;
      if (t > threshold_stop + 1e-9) break;
      grid.push_back(t);
    }
    return grid;
  }
};

inline constexpr int kDryPatchSize = 6;
inline constexpr int kPoolFactor = 8;  // three 2x pooling stages

namespace ad {

template <class S>
struct FpgnnModelT {
  // conv1..conv6 (3x3); reduce_c6/reduce_c4/reduce_c2 (1x1, channels -> 1);
  // tconv1..tconv3 (4x4 stride 2); final_conv (1x1, sigmoid); head (dense,
  // nonnegative weights).
  std::vector<LayerParams<S>> layers;
  BandStats vv_stats, vh_stats;
  int trained_height = 0, trained_width = 0;

  LayerParams<S>& layer(const std::string& name) {
    for (auto& l : layers)
      if (l.name == name) return l;
    throw InvalidInput("unknown layer '" + name + "'");
  }
  const LayerParams<S>& layer(const std::string& name) const {
    return const_cast<FpgnnModelT*>(this)->layer(name);
  }

  std::vector<LayerParams<S>*> parameters() {
    std::vector<LayerParams<S>*> out;
    for (auto& l : layers) out.push_back(&l);
    return out;
  }

  static FpgnnModelT init(std::uint64_t seed);

  struct Forward {
    Tensor<S> mask;  // (1,1,H,W), sigmoid output
    Tensor<S> area;  // (1,1), dense head output
  };
  // `input` is a prepared (1,2,H,W) tensor; H and W multiples of 8.
  Forward forward(const Tensor<S>& input) const;

  FpgnnModelT clone_values() const;  // deep copy of parameter data
};

namespace detail_model {

template <class S>
LayerParams<S> make_layer(const std::string& name, LayerKind kind,
                          Constraint constraint, std::vector<int> wshape,
                          int out_ch, Rng& rng) {
  std::int64_t fan_in = 1;
  for (std::size_t i = 1; i < wshape.size(); ++i) fan_in *= wshape[i];
  std::int64_t n = 1;
  for (int d : wshape) n *= d;
  std::vector<S> w(n);
  if (constraint == Constraint::nonnegative) {
    // small positive start keeps the clamped head alive
    for (auto& v : w) v = static_cast<S>(rng.uniform(0.0, 0.1));
    for (auto& v : w)
      if (v == S(0)) v = static_cast<S>(0.05);
  } else if (kind == LayerKind::transposed_conv) {
    // noisy bilinear kernels: every stride-2 output phase starts alive and
    // with equal energy. He-uniform here leaves phases one dead ReLU away
    // from permanent checkerboard stripes, which the correlation loss
    // cannot see.
    const int in_ch = wshape[1];
    const double taps[4] = {0.25, 0.75, 0.75, 0.25};
    for (int oc = 0; oc < wshape[0]; ++oc)
      for (int ic = 0; ic < in_ch; ++ic)
        for (int kh = 0; kh < 4; ++kh)
          for (int kw = 0; kw < 4; ++kw)
            w[((static_cast<std::size_t>(oc) * in_ch + ic) * 4 + kh) * 4 +
              kw] = static_cast<S>(taps[kh] * taps[kw] / in_ch *
                                   (1.0 + 0.2 * rng.uniform(-1.0, 1.0)));
  } else {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (auto& v : w) v = static_cast<S>(rng.uniform(-limit, limit));
  }
  LayerParams<S> l;
  l.name = name;
  l.kind = kind;
  l.constraint = constraint;
  l.weights = Tensor<S>::leaf(std::move(wshape), std::move(w), true);
  const S bias0 =
      kind == LayerKind::transposed_conv ? static_cast<S>(0.05) : S(0);
  l.bias = Tensor<S>::leaf({out_ch}, std::vector<S>(out_ch, bias0), true);
  return l;
}

}  // namespace detail_model

template <class S>
FpgnnModelT<S> FpgnnModelT<S>::init(std::uint64_t seed) {
  Rng rng(seed);
  FpgnnModelT<S> m;
  using detail_model::make_layer;
  const auto K = LayerKind::conv;
  m.layers.push_back(make_layer<S>("conv1", K, Constraint::none, {16, 2, 3, 3}, 16, rng));
  m.layers.push_back(make_layer<S>("conv2", K, Constraint::none, {16, 16, 3, 3}, 16, rng));
  m.layers.push_back(make_layer<S>("conv3", K, Constraint::none, {32, 16, 3, 3}, 32, rng));
  m.layers.push_back(make_layer<S>("conv4", K, Constraint::none, {32, 32, 3, 3}, 32, rng));
  m.layers.push_back(make_layer<S>("conv5", K, Constraint::none, {64, 32, 3, 3}, 64, rng));
  m.layers.push_back(make_layer<S>("conv6", K, Constraint::none, {64, 64, 3, 3}, 64, rng));
  m.layers.push_back(make_layer<S>("reduce_c6", K, Constraint::none, {1, 64, 1, 1}, 1, rng));
  m.layers.push_back(make_layer<S>("reduce_c4", K, Constraint::none, {1, 32, 1, 1}, 1, rng));
  m.layers.push_back(make_layer<S>("reduce_c2", K, Constraint::none, {1, 16, 1, 1}, 1, rng));
  m.layers.push_back(make_layer<S>("tconv1", LayerKind::transposed_conv, Constraint::none, {1, 64, 4, 4}, 1, rng));
  m.layers.push_back(make_layer<S>("tconv2", LayerKind::transposed_conv, Constraint::none, {1, 1, 4, 4}, 1, rng));
  m.layers.push_back(make_layer<S>("tconv3", LayerKind::transposed_conv, Constraint::none, {1, 1, 4, 4}, 1, rng));
  m.layers.push_back(make_layer<S>("final_conv", K, Constraint::none, {1, 1, 1, 1}, 1, rng));
  m.layers.push_back(make_layer<S>("head", LayerKind::dense, Constraint::nonnegative, {1, 1}, 1, rng));
  return m;
}

template <class S>
typename FpgnnModelT<S>::Forward FpgnnModelT<S>::forward(
    const Tensor<S>& input) const {
  const auto& shape = input.shape();
  if (shape.size() != 4 || shape[1] != 2)
    throw InvalidInput("fpgnn forward: expects a (1,2,H,W) input");
  if (shape[2] % kPoolFactor != 0 || shape[3] % kPoolFactor != 0)
    throw InvalidInput("fpgnn forward: spatial dims must be multiples of 8");
  if (shape[2] < 16 || shape[3] < 16)
    throw InvalidInput("fpgnn forward: spatial dims must be >= 16");

  auto conv_of = [&](const char* name, const Tensor<S>& x) {
    const auto& l = layer(name);
    return ad::conv2d(x, l.weights, l.bias);
  };
  auto tconv_of = [&](const char* name, const Tensor<S>& x) {
    const auto& l = layer(name);
    return ad::transposed_conv2(x, l.weights, l.bias);
  };

  // feature extraction
  auto c1 = ad::relu(conv_of("conv1", input));
  auto c2 = ad::relu(conv_of("conv2", c1));
  auto p1 = ad::avg_pool2(c2);
  auto c3 = ad::relu(conv_of("conv3", p1));
  auto c4 = ad::relu(conv_of("conv4", c3));
  auto p2 = ad::avg_pool2(c4);
  auto c5 = ad::relu(conv_of("conv5", p2));
  auto c6 = ad::relu(conv_of("conv6", c5));
  auto p3 = ad::avg_pool2(c6);

  // upsampling with skip additions (skips reduced to one channel by 1x1
  // convs; deconv outputs carry the ReLU, add outputs are left raw)
  auto d1 = ad::relu(tconv_of("tconv1", p3));
  auto a1 = ad::add(d1, conv_of("reduce_c6", c6));
  auto d2 = ad::relu(tconv_of("tconv2", a1));
  auto a2 = ad::add(d2, conv_of("reduce_c4", c4));
  auto d3 = ad::relu(tconv_of("tconv3", a2));
  auto a3 = ad::add(d3, conv_of("reduce_c2", c2));
  auto mask = ad::sigmoid(conv_of("final_conv", a3));

  // regression head
  auto pooled = ad::global_sum_pool(mask);
  const auto& head = layer("head");
  auto area = ad::dense(pooled, head.weights, head.bias);
  return {mask, area};
}

template <class S>
FpgnnModelT<S> FpgnnModelT<S>::clone_values() const {
  FpgnnModelT<S> out;
  out.vv_stats = vv_stats;
  out.vh_stats = vh_stats;
  out.trained_height = trained_height;
  out.trained_width = trained_width;
  for (const auto& l : layers) {
    LayerParams<S> c;
    c.name = l.name;
    c.kind = l.kind;
    c.constraint = l.constraint;
    c.weights = Tensor<S>::leaf(l.weights.shape(),
                                std::vector<S>(l.weights.value()), true);
    c.bias =
        Tensor<S>::leaf(l.bias.shape(), std::vector<S>(l.bias.value()), true);
    out.layers.push_back(std::move(c));
  }
  return out;
}

// --- batch loss composition -------------------------------------------------

template <class S>
struct BatchLossParts {
  Tensor<S> total;          // scalar: eq1 + regularizers
  double eq1 = 0.0;         // 1 - PCC over the batch
  double reg_dense = 0.0;   // 1/(scale * var(areas))
  double reg_range = 0.0;   // batch mean of coeff/(max-min)
  double reg_clip = 0.0;    // batch mean of coeff * var(dry patch)
  double min_mask_range = 0.0;  // min over the batch of per-scene max-min
};

// Builds the full training loss for one batch of prepared inputs. `observed`
// holds the gauge elevations aligned with `inputs`.
template <class S>
BatchLossParts<S> batch_training_loss(
    const FpgnnModelT<S>& model, const std::vector<Tensor<S>>& inputs,
    const std::vector<double>& observed, const TrainConfig& cfg,
    std::vector<Tensor<S>>* masks_out = nullptr) {
  if (inputs.size() < 2 || inputs.size() != observed.size())
    throw InvalidInput("batch_training_loss: need >= 2 aligned scenes");
  const int B = static_cast<int>(inputs.size());

  std::vector<Tensor<S>> areas;
  std::vector<Tensor<S>> terms;      // per-sample penalties
  std::vector<double> term_coeffs;
  double reg_range = 0.0, reg_clip = 0.0;
  double min_range = 2.0;
  for (int i = 0; i < B; ++i) {
    auto fwd = model.forward(inputs[i]);
    areas.push_back(fwd.area);
    if (masks_out) masks_out->push_back(fwd.mask);

    auto range_pen = ad::range_penalty_op(fwd.mask, cfg.range_term, 1e-6);
    auto clip_var = ad::window_variance_op(fwd.mask, cfg.dry_patch_row,
                                           cfg.dry_patch_col, kDryPatchSize);
    reg_range += static_cast<double>(range_pen.value()[0]) / B;
    reg_clip +=
        cfg.clip_var_term * static_cast<double>(clip_var.value()[0]) / B;
    terms.push_back(range_pen);
    term_coeffs.push_back(1.0 / B);
    terms.push_back(clip_var);
    term_coeffs.push_back(cfg.clip_var_term / B);

    const auto& mv = fwd.mask.value();
    const auto [mn, mx] = std::minmax_element(mv.begin(), mv.end());
    min_range = std::min(min_range, static_cast<double>(*mx - *mn));
  }

  auto stacked = ad::stack_scalars(areas);
  auto eq1 = ad::pearson_loss_op(stacked, observed, 1e-8);
  auto dense_pen = ad::inverse_variance_op(stacked, cfg.dense_penalty_scale);
  terms.push_back(eq1);
  term_coeffs.push_back(1.0);
  terms.push_back(dense_pen);
  term_coeffs.push_back(1.0);

  BatchLossParts<S> parts;
  parts.total = ad::affine_sum(terms, term_coeffs);
  parts.eq1 = static_cast<double>(eq1.value()[0]);
  parts.reg_dense = static_cast<double>(dense_pen.value()[0]);
  parts.reg_range = reg_range;
  parts.reg_clip = reg_clip;
  parts.min_mask_range = min_range;
  return parts;
}

}  // namespace ad

}  // namespace hydrocorr
