#pragma once

// The layer set needed by the water-mapping network: 2-D convolution with
// "same" zero padding, 2x2 average pooling, 4x4/stride-2 transposed
// convolution, relu/sigmoid, elementwise add, global sum pooling, a dense
// layer, and the correlation-loss / regularizer reductions. Reductions
// accumulate in double regardless of the storage scalar.

#include <algorithm>
#include <cmath>
#include <vector>

#include "hydrocorr/autodiff.hpp"

namespace hydrocorr::ad {

namespace detail {

template <class S>
inline constexpr S sigmoid_clamp_eps = S(1e-7);
template <>
inline constexpr double sigmoid_clamp_eps<double> = 1e-15;

inline std::int64_t numel(const std::vector<int>& shape) {
  std::int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

// y[oc,oh,ow] += sum_{ic,kh,kw} w[oc,ic,kh,kw] * x[ic,oh+kh-p,ow+kw-p]
template <class S>
void conv2d_accumulate(const S* x, int C, int H, int W, const S* w, int OC,
                       int K, S* y) {
  const int pad = K / 2;
  for (int oc = 0; oc < OC; ++oc) {
    S* yplane = y + static_cast<std::size_t>(oc) * H * W;
    for (int ic = 0; ic < C; ++ic) {
      const S* xplane = x + static_cast<std::size_t>(ic) * H * W;
      const S* wk = w + (static_cast<std::size_t>(oc) * C + ic) * K * K;
      for (int kh = 0; kh < K; ++kh) {
        const int dy = kh - pad;
        for (int kw = 0; kw < K; ++kw) {
          const int dx = kw - pad;
          const S wv = wk[kh * K + kw];
          if (wv == S(0)) continue;
          const int oh_lo = std::max(0, -dy), oh_hi = std::min(H, H - dy);
          const int ow_lo = std::max(0, -dx), ow_hi = std::min(W, W - dx);
          for (int oh = oh_lo; oh < oh_hi; ++oh) {
            S* dst = yplane + static_cast<std::size_t>(oh) * W;
            const S* src = xplane + static_cast<std::size_t>(oh + dy) * W + dx;
            for (int ow = ow_lo; ow < ow_hi; ++ow) dst[ow] += wv * src[ow];
          }
        }
      }
    }
  }
}

// dx[ic,ih,iw] += sum w[oc,ic,kh,kw] * dy[oc,ih-kh+p,iw-kw+p]
template <class S>
void conv2d_backprop_input(const S* dy, int OC, int H, int W, const S* w,
                           int C, int K, S* dx) {
  const int pad = K / 2;
  for (int oc = 0; oc < OC; ++oc) {
    const S* dyplane = dy + static_cast<std::size_t>(oc) * H * W;
    for (int ic = 0; ic < C; ++ic) {
      S* dxplane = dx + static_cast<std::size_t>(ic) * H * W;
      const S* wk = w + (static_cast<std::size_t>(oc) * C + ic) * K * K;
      for (int kh = 0; kh < K; ++kh) {
        const int dy_off = kh - pad;
        for (int kw = 0; kw < K; ++kw) {
          const int dx_off = kw - pad;
          const S wv = wk[kh * K + kw];
          if (wv == S(0)) continue;
          const int oh_lo = std::max(0, -dy_off),
                    oh_hi = std::min(H, H - dy_off);
          const int ow_lo = std::max(0, -dx_off),
                    ow_hi = std::min(W, W - dx_off);
          for (int oh = oh_lo; oh < oh_hi; ++oh) {
            const S* g = dyplane + static_cast<std::size_t>(oh) * W;
            S* d = dxplane + static_cast<std::size_t>(oh + dy_off) * W + dx_off;
            for (int ow = ow_lo; ow < ow_hi; ++ow) d[ow] += wv * g[ow];
          }
        }
      }
    }
  }
}

// dw[oc,ic,kh,kw] += sum_{oh,ow} dy[oc,oh,ow] * x[ic,oh+kh-p,ow+kw-p]
template <class S>
void conv2d_backprop_weight(const S* dy, const S* x, int OC, int C, int H,
                            int W, int K, S* dw) {
  const int pad = K / 2;
  for (int oc = 0; oc < OC; ++oc) {
    const S* dyplane = dy + static_cast<std::size_t>(oc) * H * W;
    for (int ic = 0; ic < C; ++ic) {
      const S* xplane = x + static_cast<std::size_t>(ic) * H * W;
      S* wk = dw + (static_cast<std::size_t>(oc) * C + ic) * K * K;
      for (int kh = 0; kh < K; ++kh) {
        const int dy_off = kh - pad;
        for (int kw = 0; kw < K; ++kw) {
          const int dx_off = kw - pad;
          const int oh_lo = std::max(0, -dy_off),
                    oh_hi = std::min(H, H - dy_off);
          const int ow_lo = std::max(0, -dx_off),
                    ow_hi = std::min(W, W - dx_off);
          double acc = 0.0;
          for (int oh = oh_lo; oh < oh_hi; ++oh) {
            const S* g = dyplane + static_cast<std::size_t>(oh) * W;
            const S* src =
                xplane + static_cast<std::size_t>(oh + dy_off) * W + dx_off;
            for (int ow = ow_lo; ow < ow_hi; ++ow)
              acc += static_cast<double>(g[ow]) * static_cast<double>(src[ow]);
          }
          wk[kh * K + kw] += static_cast<S>(acc);
        }
      }
    }
  }
}

}  // namespace detail

// --- conv2d: odd square kernel, stride 1, "same" zero padding ------------

template <class S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b) {
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  if (xs.size() != 4 || ws.size() != 4)
    throw InvalidInput("conv2d: expects rank-4 input and weights");
  const int N = xs[0], C = xs[1], H = xs[2], W = xs[3];
  const int OC = ws[0], K = ws[2];
  if (ws[1] != C)
    throw InvalidInput("conv2d: weight input channels " +
                       std::to_string(ws[1]) + " != input channels " +
                       std::to_string(C));
  if (ws[3] != K || K % 2 == 0)
    throw InvalidInput("conv2d: kernel must be square with odd size");
  if (b.shape() != std::vector<int>{OC})
    throw InvalidInput("conv2d: bias shape mismatch");

  const std::size_t plane = static_cast<std::size_t>(H) * W;
  std::vector<S> out(static_cast<std::size_t>(N) * OC * plane);
  for (int n = 0; n < N; ++n) {
    S* yb = out.data() + static_cast<std::size_t>(n) * OC * plane;
    for (int oc = 0; oc < OC; ++oc)
      std::fill_n(yb + oc * plane, plane, b.value()[oc]);
    detail::conv2d_accumulate(x.value().data() + static_cast<std::size_t>(n) *
                                                     C * plane,
                              C, H, W, w.value().data(), OC, K, yb);
  }

  auto xn = x.handle();
  auto wn = w.handle();
  auto bn = b.handle();
  return detail::make_op<S>(
      {N, OC, H, W}, std::move(out), {x, w, b}, [=](Node<S>& self) {
        const std::size_t pl = static_cast<std::size_t>(H) * W;
        for (int n = 0; n < N; ++n) {
          const S* dy = self.grad.data() + static_cast<std::size_t>(n) * OC * pl;
          const S* xv = xn->value.data() + static_cast<std::size_t>(n) * C * pl;
          if (xn->requires_grad)
            detail::conv2d_backprop_input(
                dy, OC, H, W, wn->value.data(), C, K,
                xn->ensure_grad().data() + static_cast<std::size_t>(n) * C * pl);
          if (wn->requires_grad)
            detail::conv2d_backprop_weight(dy, xv, OC, C, H, W, K,
                                           wn->ensure_grad().data());
          if (bn->requires_grad) {
            auto& bg = bn->ensure_grad();
            for (int oc = 0; oc < OC; ++oc) {
              double acc = 0.0;
              const S* g = dy + oc * pl;
              for (std::size_t i = 0; i < pl; ++i) acc += g[i];
              bg[oc] += static_cast<S>(acc);
            }
          }
        }
      });
}

// --- avg_pool2: 2x2 window, stride 2 --------------------------------------

template <class S>
Tensor<S> avg_pool2(const Tensor<S>& x) {
  const auto& xs = x.shape();
  if (xs.size() != 4) throw InvalidInput("avg_pool2: expects rank-4 input");
  const int N = xs[0], C = xs[1], H = xs[2], W = xs[3];
  if (H % 2 != 0 || W % 2 != 0)
    throw InvalidInput("avg_pool2: spatial dims must be even, got " +
                       std::to_string(H) + "x" + std::to_string(W));
  const int OH = H / 2, OW = W / 2;
  std::vector<S> out(static_cast<std::size_t>(N) * C * OH * OW);
  const S* xv = x.value().data();
  for (int nc = 0; nc < N * C; ++nc) {
    const S* src = xv + static_cast<std::size_t>(nc) * H * W;
    S* dst = out.data() + static_cast<std::size_t>(nc) * OH * OW;
    for (int oh = 0; oh < OH; ++oh)
      for (int ow = 0; ow < OW; ++ow) {
        const S* p = src + (2 * oh) * W + 2 * ow;
        dst[oh * OW + ow] =
            static_cast<S>(0.25) * (p[0] + p[1] + p[W] + p[W + 1]);
      }
  }

  auto xn = x.handle();
  return detail::make_op<S>(
      {N, C, OH, OW}, std::move(out), {x}, [=](Node<S>& self) {
        if (!xn->requires_grad) return;
        auto& dx = xn->ensure_grad();
        for (int nc = 0; nc < N * C; ++nc) {
          const S* g = self.grad.data() + static_cast<std::size_t>(nc) * OH * OW;
          S* d = dx.data() + static_cast<std::size_t>(nc) * H * W;
          for (int oh = 0; oh < OH; ++oh)
            for (int ow = 0; ow < OW; ++ow) {
              const S q = static_cast<S>(0.25) * g[oh * OW + ow];
              S* p = d + (2 * oh) * W + 2 * ow;
              p[0] += q;
              p[1] += q;
              p[W] += q;
              p[W + 1] += q;
            }
        }
      });
}

// --- transposed_conv2: 4x4 kernel, stride 2, output exactly 2x input ------
//
// The raw stride-2 scatter produces (2h+2)x(2w+2); one row/column is cropped
// from each side. Equivalently output_padding=0, padding=1 in the usual
// deconvolution parameterization. Weight layout (out_ch, in_ch, 4, 4).

template <class S>
Tensor<S> transposed_conv2(const Tensor<S>& x, const Tensor<S>& w,
                           const Tensor<S>& b) {
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  if (xs.size() != 4 || ws.size() != 4)
    throw InvalidInput("transposed_conv2: expects rank-4 input and weights");
  const int N = xs[0], C = xs[1], H = xs[2], W = xs[3];
  const int OC = ws[0];
  if (ws[1] != C)
    throw InvalidInput("transposed_conv2: weight input channels " +
                       std::to_string(ws[1]) + " != input channels " +
                       std::to_string(C));
  if (ws[2] != 4 || ws[3] != 4)
    throw InvalidInput("transposed_conv2: kernel must be 4x4");
  if (b.shape() != std::vector<int>{OC})
    throw InvalidInput("transposed_conv2: bias shape mismatch");
  const int OH = 2 * H, OW = 2 * W;

  std::vector<S> out(static_cast<std::size_t>(N) * OC * OH * OW);
  const S* xv = x.value().data();
  const S* wv = w.value().data();
  for (int n = 0; n < N; ++n) {
    for (int oc = 0; oc < OC; ++oc) {
      S* yplane =
          out.data() + (static_cast<std::size_t>(n) * OC + oc) * OH * OW;
      std::fill_n(yplane, static_cast<std::size_t>(OH) * OW, b.value()[oc]);
      for (int ic = 0; ic < C; ++ic) {
        const S* xplane = xv + (static_cast<std::size_t>(n) * C + ic) * H * W;
        const S* wk = wv + (static_cast<std::size_t>(oc) * C + ic) * 16;
        for (int kh = 0; kh < 4; ++kh)
          for (int kw = 0; kw < 4; ++kw) {
            const S wvv = wk[kh * 4 + kw];
            if (wvv == S(0)) continue;
            // raw row 2*ih+kh maps to output row 2*ih+kh-1
            for (int ih = 0; ih < H; ++ih) {
              const int orow = 2 * ih + kh - 1;
              if (orow < 0 || orow >= OH) continue;
              const S* src = xplane + static_cast<std::size_t>(ih) * W;
              S* dst = yplane + static_cast<std::size_t>(orow) * OW;
              for (int iw = 0; iw < W; ++iw) {
                const int ocol = 2 * iw + kw - 1;
                if (ocol < 0 || ocol >= OW) continue;
                dst[ocol] += wvv * src[iw];
              }
            }
          }
      }
    }
  }

  auto xn = x.handle();
  auto wn = w.handle();
  auto bn = b.handle();
  return detail::make_op<S>(
      {N, OC, OH, OW}, std::move(out), {x, w, b}, [=](Node<S>& self) {
        for (int n = 0; n < N; ++n) {
          for (int oc = 0; oc < OC; ++oc) {
            const S* dy = self.grad.data() +
                          (static_cast<std::size_t>(n) * OC + oc) * OH * OW;
            if (bn->requires_grad) {
              double acc = 0.0;
              for (std::size_t i = 0;
                   i < static_cast<std::size_t>(OH) * OW; ++i)
                acc += dy[i];
              bn->ensure_grad()[oc] += static_cast<S>(acc);
            }
            for (int ic = 0; ic < C; ++ic) {
              const S* xplane =
                  xn->value.data() +
                  (static_cast<std::size_t>(n) * C + ic) * H * W;
              const S* wk =
                  wn->value.data() +
                  (static_cast<std::size_t>(oc) * C + ic) * 16;
              S* dxplane = xn->requires_grad
                               ? xn->ensure_grad().data() +
                                     (static_cast<std::size_t>(n) * C + ic) *
                                         H * W
                               : nullptr;
              S* dwk = wn->requires_grad
                           ? wn->ensure_grad().data() +
                                 (static_cast<std::size_t>(oc) * C + ic) * 16
                           : nullptr;
              for (int kh = 0; kh < 4; ++kh)
                for (int kw = 0; kw < 4; ++kw) {
                  double wacc = 0.0;
                  const S wvv = wk[kh * 4 + kw];
                  for (int ih = 0; ih < H; ++ih) {
                    const int orow = 2 * ih + kh - 1;
                    if (orow < 0 || orow >= OH) continue;
                    const S* g = dy + static_cast<std::size_t>(orow) * OW;
                    const S* src = xplane + static_cast<std::size_t>(ih) * W;
                    S* d = dxplane
                               ? dxplane + static_cast<std::size_t>(ih) * W
                               : nullptr;
                    for (int iw = 0; iw < W; ++iw) {
                      const int ocol = 2 * iw + kw - 1;
                      if (ocol < 0 || ocol >= OW) continue;
                      if (d) d[iw] += wvv * g[ocol];
                      if (dwk)
                        wacc += static_cast<double>(g[ocol]) *
                                static_cast<double>(src[iw]);
                    }
                  }
                  if (dwk) dwk[kh * 4 + kw] += static_cast<S>(wacc);
                }
            }
          }
        }
      });
}

// --- activations -----------------------------------------------------------

template <class S>
Tensor<S> relu(const Tensor<S>& x) {
  std::vector<S> out(x.value().size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = x.value()[i] > S(0) ? x.value()[i] : S(0);
  auto xn = x.handle();
  return detail::make_op<S>(x.shape(), std::move(out), {x},
                            [=](Node<S>& self) {
                              if (!xn->requires_grad) return;
                              auto& dx = xn->ensure_grad();
                              for (std::size_t i = 0; i < dx.size(); ++i)
                                if (xn->value[i] > S(0))
                                  dx[i] += self.grad[i];
                            });
}

// Sigmoid output is clamped to stay strictly inside (0,1) at the storage
// precision; the gradient uses the clamped value.
template <class S>
Tensor<S> sigmoid(const Tensor<S>& x) {
  constexpr S eps = detail::sigmoid_clamp_eps<S>;
  std::vector<S> out(x.value().size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double s = 1.0 / (1.0 + std::exp(-static_cast<double>(x.value()[i])));
    out[i] = std::clamp(static_cast<S>(s), eps, S(1) - eps);
  }
  auto xn = x.handle();
  return detail::make_op<S>(x.shape(), std::move(out), {x},
                            [=](Node<S>& self) {
                              if (!xn->requires_grad) return;
                              auto& dx = xn->ensure_grad();
                              for (std::size_t i = 0; i < dx.size(); ++i) {
                                const S s = self.value[i];
                                dx[i] += self.grad[i] * s * (S(1) - s);
                              }
                            });
}

// --- add -------------------------------------------------------------------

template <class S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.shape() != b.shape())
    throw InvalidInput("add: shape mismatch");
  std::vector<S> out(a.value().size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = a.value()[i] + b.value()[i];
  auto an = a.handle();
  auto bn = b.handle();
  return detail::make_op<S>(a.shape(), std::move(out), {a, b},
                            [=](Node<S>& self) {
                              if (an->requires_grad) {
                                auto& da = an->ensure_grad();
                                for (std::size_t i = 0; i < da.size(); ++i)
                                  da[i] += self.grad[i];
                              }
                              if (bn->requires_grad) {
                                auto& db = bn->ensure_grad();
                                for (std::size_t i = 0; i < db.size(); ++i)
                                  db[i] += self.grad[i];
                              }
                            });
}

// --- elementwise multiply ----------------------------------------------------

template <class S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.shape() != b.shape()) throw InvalidInput("mul: shape mismatch");
  std::vector<S> out(a.value().size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = a.value()[i] * b.value()[i];
  auto an = a.handle();
  auto bn = b.handle();
  return detail::make_op<S>(a.shape(), std::move(out), {a, b},
                            [=](Node<S>& self) {
                              if (an->requires_grad) {
                                auto& da = an->ensure_grad();
                                for (std::size_t i = 0; i < da.size(); ++i)
                                  da[i] += self.grad[i] * bn->value[i];
                              }
                              if (bn->requires_grad) {
                                auto& db = bn->ensure_grad();
                                for (std::size_t i = 0; i < db.size(); ++i)
                                  db[i] += self.grad[i] * an->value[i];
                              }
                            });
}

// --- global_sum_pool: (N,1,H,W) -> (N,1) -----------------------------------

template <class S>
Tensor<S> global_sum_pool(const Tensor<S>& x) {
  const auto& xs = x.shape();
  if (xs.size() != 4) throw InvalidInput("global_sum_pool: rank-4 expected");
  if (xs[1] != 1)
    throw InvalidInput("global_sum_pool: expects a single channel, got " +
                       std::to_string(xs[1]));
  const int N = xs[0];
  const std::size_t plane = static_cast<std::size_t>(xs[2]) * xs[3];
  std::vector<S> out(N);
  for (int n = 0; n < N; ++n) {
    double acc = 0.0;
    const S* p = x.value().data() + n * plane;
    for (std::size_t i = 0; i < plane; ++i) acc += p[i];
    out[n] = static_cast<S>(acc);
  }
  auto xn = x.handle();
  return detail::make_op<S>({N, 1}, std::move(out), {x}, [=](Node<S>& self) {
    if (!xn->requires_grad) return;
    auto& dx = xn->ensure_grad();
    for (int n = 0; n < N; ++n) {
      const S g = self.grad[n];
      S* d = dx.data() + n * plane;
      for (std::size_t i = 0; i < plane; ++i) d[i] += g;
    }
  });
}

// --- dense: (N,I) x (O,I) + (O) -> (N,O) -----------------------------------

template <class S>
Tensor<S> dense(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b) {
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  if (xs.size() != 2 || ws.size() != 2)
    throw InvalidInput("dense: expects rank-2 input and weights");
  const int N = xs[0], I = xs[1], O = ws[0];
  if (ws[1] != I)
    throw InvalidInput("dense: weight columns " + std::to_string(ws[1]) +
                       " != input features " + std::to_string(I));
  if (b.shape() != std::vector<int>{O})
    throw InvalidInput("dense: bias shape mismatch");
  std::vector<S> out(static_cast<std::size_t>(N) * O);
  for (int n = 0; n < N; ++n)
    for (int o = 0; o < O; ++o) {
      double acc = static_cast<double>(b.value()[o]);
      for (int i = 0; i < I; ++i)
        acc += static_cast<double>(w.value()[o * I + i]) *
               static_cast<double>(x.value()[n * I + i]);
      out[n * O + o] = static_cast<S>(acc);
    }
  auto xn = x.handle();
  auto wn = w.handle();
  auto bn = b.handle();
  return detail::make_op<S>({N, O}, std::move(out), {x, w, b},
                            [=](Node<S>& self) {
    for (int n = 0; n < N; ++n)
      for (int o = 0; o < O; ++o) {
        const S g = self.grad[n * O + o];
        if (g == S(0)) continue;
        if (bn->requires_grad) bn->ensure_grad()[o] += g;
        for (int i = 0; i < I; ++i) {
          if (wn->requires_grad)
            wn->ensure_grad()[o * I + i] += g * xn->value[n * I + i];
          if (xn->requires_grad)
            xn->ensure_grad()[n * I + i] += g * wn->value[o * I + i];
        }
      }
  });
}

// --- stack_scalars: B tensors of size 1 -> (B) ------------------------------

template <class S>
Tensor<S> stack_scalars(const std::vector<Tensor<S>>& xs) {
  if (xs.empty()) throw InvalidInput("stack_scalars: empty input");
  std::vector<S> out;
  out.reserve(xs.size());
  for (const auto& t : xs) {
    if (t.size() != 1)
      throw InvalidInput("stack_scalars: inputs must be scalars");
    out.push_back(t.value()[0]);
  }
  std::vector<std::shared_ptr<Node<S>>> handles;
  for (const auto& t : xs) handles.push_back(t.handle());
  return detail::make_op<S>({static_cast<int>(xs.size())}, std::move(out), xs,
                            [handles](Node<S>& self) {
                              for (std::size_t i = 0; i < handles.size(); ++i)
                                if (handles[i]->requires_grad)
                                  handles[i]->ensure_grad()[0] += self.grad[i];
                            });
}

// --- affine_sum: bias + sum_i coeff_i * scalar_i -> scalar ------------------

template <class S>
Tensor<S> affine_sum(const std::vector<Tensor<S>>& xs,
                     const std::vector<double>& coeffs, double bias = 0.0) {
  if (xs.size() != coeffs.size())
    throw InvalidInput("affine_sum: coefficient count mismatch");
  double acc = bias;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (xs[i].size() != 1)
      throw InvalidInput("affine_sum: inputs must be scalars");
    acc += coeffs[i] * static_cast<double>(xs[i].value()[0]);
  }
  std::vector<std::shared_ptr<Node<S>>> handles;
  for (const auto& t : xs) handles.push_back(t.handle());
  return detail::make_op<S>(
      {1}, {static_cast<S>(acc)}, xs, [handles, coeffs](Node<S>& self) {
        for (std::size_t i = 0; i < handles.size(); ++i)
          if (handles[i]->requires_grad)
            handles[i]->ensure_grad()[0] +=
                static_cast<S>(coeffs[i] * static_cast<double>(self.grad[0]));
      });
}

// --- pearson correlation loss: 1 - PCC(pred, obs) --------------------------
//
// `guard` is added under each square root (training mode). With guard = 0 a
// degenerate variance raises InvalidInput (standalone evaluation mode).

template <class S>
Tensor<S> pearson_loss_op(const Tensor<S>& pred,
                          const std::vector<double>& obs, double guard) {
  if (pred.shape().size() != 1)
    throw InvalidInput("pearson_loss: pred must be rank-1");
  const int n = pred.shape()[0];
  if (n < 2 || static_cast<int>(obs.size()) != n)
    throw InvalidInput("pearson_loss: need equal lengths n >= 2");

  double mx = 0.0, my = 0.0;
  for (int i = 0; i < n; ++i) {
    mx += static_cast<double>(pred.value()[i]);
    my += obs[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (int i = 0; i < n; ++i) {
    const double cx = static_cast<double>(pred.value()[i]) - mx;
    const double cy = obs[i] - my;
    sxx += cx * cx;
    syy += cy * cy;
    sxy += cx * cy;
  }
  if (guard == 0.0 && (sxx <= 0.0 || syy <= 0.0))
    throw InvalidInput("pearson_loss: degenerate variance");
  const double dx = std::sqrt(sxx + guard);
  const double dy = std::sqrt(syy + guard);
  const double r = sxy / (dx * dy);
  const double loss = 1.0 - r;

  auto pn = pred.handle();
  return detail::make_op<S>(
      {1}, {static_cast<S>(loss)}, {pred}, [=](Node<S>& self) {
        if (!pn->requires_grad) return;
        auto& dp = pn->ensure_grad();
        const double g = static_cast<double>(self.grad[0]);
        for (int i = 0; i < n; ++i) {
          const double cx = static_cast<double>(pn->value[i]) - mx;
          const double cy = obs[i] - my;
          // d(1-r)/dx_i = -(cy/(dx*dy) - r*cx/dx^2)
          const double dr = cy / (dx * dy) - r * cx / (dx * dx);
          dp[i] += static_cast<S>(-g * dr);
        }
      });
}

// --- range penalty: coeff / (max(x) - min(x)), capped below `floor` --------

template <class S>
Tensor<S> range_penalty_op(const Tensor<S>& x, double coeff, double floor_) {
  if (x.size() < 1) throw InvalidInput("range_penalty: empty input");
  std::size_t imax = 0, imin = 0;
  for (std::size_t i = 1; i < x.value().size(); ++i) {
    if (x.value()[i] > x.value()[imax]) imax = i;
    if (x.value()[i] < x.value()[imin]) imin = i;
  }
  const double range = static_cast<double>(x.value()[imax]) -
                       static_cast<double>(x.value()[imin]);
  const bool capped = range < floor_;
  const double val = coeff / (capped ? floor_ : range);

  auto xn = x.handle();
  return detail::make_op<S>(
      {1}, {static_cast<S>(val)}, {x}, [=](Node<S>& self) {
        if (!xn->requires_grad || capped) return;
        const double g = static_cast<double>(self.grad[0]);
        const double d = coeff / (range * range);
        auto& dx = xn->ensure_grad();
        dx[imax] += static_cast<S>(-g * d);
        dx[imin] += static_cast<S>(g * d);
      });
}

// --- population variance of a rectangular window of a (1,1,H,W) tensor -----

template <class S>
Tensor<S> window_variance_op(const Tensor<S>& x, int r0, int c0, int size) {
  const auto& xs = x.shape();
  if (xs.size() != 4 || xs[0] != 1 || xs[1] != 1)
    throw InvalidInput("window_variance: expects a (1,1,H,W) tensor");
  const int H = xs[2], W = xs[3];
  if (r0 < 0 || c0 < 0 || r0 + size > H || c0 + size > W)
    throw InvalidInput("window_variance: window does not fit the image");
  const int m = size * size;
  double mean = 0.0;
  for (int r = 0; r < size; ++r)
    for (int c = 0; c < size; ++c)
      mean += static_cast<double>(x.value()[(r0 + r) * W + (c0 + c)]);
  mean /= m;
  double var = 0.0;
  for (int r = 0; r < size; ++r)
    for (int c = 0; c < size; ++c) {
      const double d =
          static_cast<double>(x.value()[(r0 + r) * W + (c0 + c)]) - mean;
      var += d * d;
    }
  var /= m;

  auto xn = x.handle();
  return detail::make_op<S>(
      {1}, {static_cast<S>(var)}, {x}, [=](Node<S>& self) {
        if (!xn->requires_grad) return;
        const double g = static_cast<double>(self.grad[0]);
        auto& dx = xn->ensure_grad();
        for (int r = 0; r < size; ++r)
          for (int c = 0; c < size; ++c) {
            const std::size_t idx = (r0 + r) * W + (c0 + c);
            const double d = static_cast<double>(xn->value[idx]) - mean;
            dx[idx] += static_cast<S>(g * 2.0 * d / m);
          }
      });
}

// --- inverse population-variance penalty: 1 / (scale * var(x)) -------------

template <class S>
Tensor<S> inverse_variance_op(const Tensor<S>& x, double scale,
                              double floor_ = 1e-10) {
  if (x.shape().size() != 1 || x.size() < 2)
    throw InvalidInput("inverse_variance: rank-1 input of length >= 2");
  const int n = x.shape()[0];
  double mean = 0.0;
  for (int i = 0; i < n; ++i) mean += static_cast<double>(x.value()[i]);
  mean /= n;
  double var = 0.0;
  for (int i = 0; i < n; ++i) {
    const double d = static_cast<double>(x.value()[i]) - mean;
    var += d * d;
  }
  var /= n;
  const bool capped = var < floor_;
  const double veff = capped ? floor_ : var;
  const double val = 1.0 / (scale * veff);

  auto xn = x.handle();
  return detail::make_op<S>(
      {1}, {static_cast<S>(val)}, {x}, [=](Node<S>& self) {
        if (!xn->requires_grad || capped) return;
        const double g = static_cast<double>(self.grad[0]);
        const double d_dvar = -1.0 / (scale * veff * veff);
        auto& dx = xn->ensure_grad();
        for (int i = 0; i < n; ++i) {
          const double d = static_cast<double>(xn->value[i]) - mean;
          dx[i] += static_cast<S>(g * d_dvar * 2.0 * d / n);
        }
      });
}

}  // namespace hydrocorr::ad
