#include <doctest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "hydrocorr/adam.hpp"
#include "hydrocorr/nn_ops.hpp"
#include "hydrocorr/rng.hpp"

using namespace hydrocorr;
using ad::Tensor;

namespace {

template <class S>
Tensor<S> random_tensor(std::vector<int> shape, Rng& rng, bool grad,
                        double scale = 1.0) {
  std::int64_t n = 1;
  for (int d : shape) n *= d;
  std::vector<S> data(n);
  for (auto& v : data) v = static_cast<S>(scale * rng.normal());
  return Tensor<S>::leaf(std::move(shape), std::move(data), grad);
}

// Direct-summation convolution oracle, independent of the op implementation.
std::vector<double> conv_oracle(const std::vector<double>& x, int C, int H,
                                int W, const std::vector<double>& w, int OC,
                                int K, const std::vector<double>& b) {
  const int pad = K / 2;
  std::vector<double> y(static_cast<std::size_t>(OC) * H * W, 0.0);
  for (int oc = 0; oc < OC; ++oc)
    for (int oh = 0; oh < H; ++oh)
      for (int ow = 0; ow < W; ++ow) {
        double acc = b[oc];
        for (int ic = 0; ic < C; ++ic)
          for (int kh = 0; kh < K; ++kh)
            for (int kw = 0; kw < K; ++kw) {
              const int ih = oh + kh - pad, iw = ow + kw - pad;
              if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
              acc += w[((oc * C + ic) * K + kh) * K + kw] *
                     x[(ic * H + ih) * W + iw];
            }
        y[(oc * H + oh) * W + ow] = acc;
      }
  return y;
}

// Stride-2 4x4 correlation with 1-pixel padding: the adjoint of the
// transposed convolution under its cropping convention.
std::vector<double> conv_downsample_oracle(const std::vector<double>& y,
                                           int OC, int OH, int OW,
                                           const std::vector<double>& w,
                                           int C) {
  const int H = OH / 2, W = OW / 2;
  std::vector<double> x(static_cast<std::size_t>(C) * H * W, 0.0);
  for (int ic = 0; ic < C; ++ic)
    for (int ih = 0; ih < H; ++ih)
      for (int iw = 0; iw < W; ++iw) {
        double acc = 0.0;
        for (int oc = 0; oc < OC; ++oc)
          for (int kh = 0; kh < 4; ++kh)
            for (int kw = 0; kw < 4; ++kw) {
              const int orow = 2 * ih + kh - 1, ocol = 2 * iw + kw - 1;
              if (orow < 0 || orow >= OH || ocol < 0 || ocol >= OW) continue;
              acc += w[((oc * C + ic) * 4 + kh) * 4 + kw] *
                     y[(oc * OH + orow) * OW + ocol];
            }
        x[(ic * H + ih) * W + iw] = acc;
      }
  return x;
}

}  // namespace

TEST_SUITE("autodiff") {

TEST_CASE("conv2d of all-ones matches the direct summation oracle") {
  auto x = Tensor<double>::constant({1, 1, 3, 3}, std::vector<double>(9, 1.0));
  auto w = Tensor<double>::constant({1, 1, 3, 3}, std::vector<double>(9, 1.0));
  auto b = Tensor<double>::constant({1}, {0.0});
  auto y = ad::conv2d(x, w, b);
  CHECK(y.value()[4] == doctest::Approx(9.0));   // center
  CHECK(y.value()[0] == doctest::Approx(4.0));   // corners
  CHECK(y.value()[2] == doctest::Approx(4.0));
  CHECK(y.value()[6] == doctest::Approx(4.0));
  CHECK(y.value()[8] == doctest::Approx(4.0));

  Rng rng(11);
  std::vector<double> xr(2 * 5 * 6), wr(3 * 2 * 3 * 3), br(3);
  for (auto& v : xr) v = rng.normal();
  for (auto& v : wr) v = rng.normal();
  for (auto& v : br) v = rng.normal();
  auto yr = ad::conv2d(Tensor<double>::constant({1, 2, 5, 6}, xr),
                       Tensor<double>::constant({3, 2, 3, 3}, wr),
                       Tensor<double>::constant({3}, br));
  const auto oracle = conv_oracle(xr, 2, 5, 6, wr, 3, 3, br);
  for (std::size_t i = 0; i < oracle.size(); ++i)
    CHECK(yr.value()[i] == doctest::Approx(oracle[i]).epsilon(1e-12));
}

TEST_CASE("conv2d identity and zero kernels") {
  Rng rng(5);
  auto x = random_tensor<double>({1, 1, 4, 4}, rng, false);
  auto w1 = Tensor<double>::constant({1, 1, 1, 1}, {1.0});
  auto b0 = Tensor<double>::constant({1}, {0.0});
  auto y = ad::conv2d(x, w1, b0);
  for (std::size_t i = 0; i < 16; ++i) CHECK(y.value()[i] == x.value()[i]);

  auto wz = Tensor<double>::constant({1, 1, 3, 3}, std::vector<double>(9, 0.0));
  auto b = Tensor<double>::constant({1}, {2.5});
  auto yz = ad::conv2d(x, wz, b);
  for (std::size_t i = 0; i < 16; ++i) CHECK(yz.value()[i] == 2.5);
}

TEST_CASE("same padding preserves the shape for any odd kernel") {
  Rng rng(29);
  for (int k : {1, 3, 5}) {
    auto x = random_tensor<double>({1, 1, 7, 9}, rng, false);
    auto w = random_tensor<double>({2, 1, k, k}, rng, false);
    auto b = random_tensor<double>({2}, rng, false);
    auto y = ad::conv2d(x, w, b);
    CHECK(y.shape() == std::vector<int>{1, 2, 7, 9});
  }
}

TEST_CASE("conv2d rejects channel mismatch") {
  auto x = Tensor<double>::constant({1, 2, 4, 4}, std::vector<double>(32, 0.0));
  auto w = Tensor<double>::constant({1, 3, 3, 3}, std::vector<double>(27, 0.0));
  auto b = Tensor<double>::constant({1}, {0.0});
  CHECK_THROWS_AS(ad::conv2d(x, w, b), InvalidInput);
}

TEST_CASE("avg_pool2 arithmetic and errors") {
  auto x = Tensor<double>::constant({1, 1, 2, 2}, {1.0, 2.0, 3.0, 4.0});
  CHECK(ad::avg_pool2(x).value()[0] == doctest::Approx(2.5));

  auto c = Tensor<double>::constant({1, 1, 4, 4}, std::vector<double>(16, 7.0));
  auto pc = ad::avg_pool2(c);
  for (auto v : pc.value()) CHECK(v == doctest::Approx(7.0));

  auto odd = Tensor<double>::constant({1, 1, 3, 4}, std::vector<double>(12, 0.0));
  CHECK_THROWS_AS(ad::avg_pool2(odd), InvalidInput);
}

TEST_CASE("transposed_conv2 scatter oracle and bias broadcast") {
  // single input pixel, all-ones kernel: the raw scatter totals 16 but the
  // symmetric crop keeps the 2x2 center (sum 4)
  auto x = Tensor<double>::constant({1, 1, 1, 1}, {1.0});
  auto w = Tensor<double>::constant({1, 1, 4, 4}, std::vector<double>(16, 1.0));
  auto b = Tensor<double>::constant({1}, {0.0});
  auto y = ad::transposed_conv2(x, w, b);
  REQUIRE(y.value().size() == 4);
  double cropped_sum = 0.0;
  for (double v : y.value()) cropped_sum += v;
  CHECK(cropped_sum == doctest::Approx(4.0));
  // reconstruct the raw scatter total: x * sum(kernel)
  double kernel_sum = 0.0;
  for (double v : w.value()) kernel_sum += v;
  CHECK(x.value()[0] * kernel_sum == doctest::Approx(16.0));

  auto xz = Tensor<double>::constant({1, 2, 3, 3}, std::vector<double>(18, 0.0));
  auto wr = Tensor<double>::constant({1, 2, 4, 4}, std::vector<double>(32, 0.5));
  auto bb = Tensor<double>::constant({1}, {1.25});
  auto yz = ad::transposed_conv2(xz, wr, bb);
  CHECK(yz.shape() == std::vector<int>{1, 1, 6, 6});
  for (double v : yz.value()) CHECK(v == doctest::Approx(1.25));
}

TEST_CASE("transposed_conv2 is the adjoint of the stride-2 convolution") {
  Rng rng(7);
  for (int seed = 0; seed < 3; ++seed) {
    Rng r = rng.fork(seed);
    std::vector<double> xv(2 * 3 * 4), wv(1 * 2 * 4 * 4), yv(1 * 6 * 8);
    for (auto& v : xv) v = r.normal();
    for (auto& v : wv) v = r.normal();
    for (auto& v : yv) v = r.normal();

    auto x = Tensor<double>::constant({1, 2, 3, 4}, xv);
    auto w = Tensor<double>::constant({1, 2, 4, 4}, wv);
    auto b = Tensor<double>::constant({1}, {0.0});
    auto tx = ad::transposed_conv2(x, w, b);

    double lhs = 0.0;  // <y, tconv(x,w)>
    for (std::size_t i = 0; i < yv.size(); ++i) lhs += yv[i] * tx.value()[i];
    const auto down = conv_downsample_oracle(yv, 1, 6, 8, wv, 2);
    double rhs = 0.0;  // <conv_down(y,w), x>
    for (std::size_t i = 0; i < xv.size(); ++i) rhs += down[i] * xv[i];
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-4));
  }
}

TEST_CASE("elementwise activations") {
  auto x = Tensor<double>::constant({1, 1, 1, 3}, {0.0, -3.0, 2.0});
  auto s = ad::sigmoid(x);
  CHECK(s.value()[0] == doctest::Approx(0.5));
  auto r = ad::relu(x);
  CHECK(r.value()[1] == 0.0);
  CHECK(r.value()[2] == 2.0);

  // sigmoid gradient at 0 is 0.25
  auto xg = Tensor<double>::leaf({1, 1, 1, 1}, {0.0}, true);
  auto sg = ad::sigmoid(xg);
  auto pooled = ad::global_sum_pool(sg);
  auto loss = ad::affine_sum<double>({ad::stack_scalars<double>({pooled})},
                                     {1.0});
  ad::backward(loss);
  CHECK(xg.grad()[0] == doctest::Approx(0.25));
}

TEST_CASE("sigmoid stays strictly inside (0,1) for finite inputs") {
  Rng rng(13);
  std::vector<float> vals;
  for (int i = 0; i < 200; ++i)
    vals.push_back(static_cast<float>(rng.uniform(-80.0, 80.0)));
  vals.push_back(500.0f);
  vals.push_back(-500.0f);
  auto x = Tensor<float>::constant(
      {1, 1, 1, static_cast<int>(vals.size())}, vals);
  auto s = ad::sigmoid(x);
  for (float v : s.value()) {
    CHECK(v > 0.0f);
    CHECK(v < 1.0f);
  }
}

TEST_CASE("add semantics") {
  Rng rng(17);
  auto a = random_tensor<double>({1, 1, 2, 2}, rng, true);
  auto z = Tensor<double>::constant({1, 1, 2, 2}, std::vector<double>(4, 0.0));
  auto sum = ad::add(a, z);
  for (int i = 0; i < 4; ++i) CHECK(sum.value()[i] == a.value()[i]);

  auto b = random_tensor<double>({1, 1, 2, 2}, rng, true);
  auto loss = ad::affine_sum<double>(
      {ad::stack_scalars<double>({ad::global_sum_pool(ad::add(a, b))})}, {1.0});
  ad::backward(loss);
  for (int i = 0; i < 4; ++i) {
    CHECK(a.grad()[i] == doctest::Approx(1.0));
    CHECK(b.grad()[i] == doctest::Approx(1.0));
  }

  auto small = Tensor<double>::constant({1, 1, 1, 2}, {0.0, 0.0});
  CHECK_THROWS_AS(ad::add(a, small), InvalidInput);
}

TEST_CASE("global_sum_pool") {
  auto x = Tensor<double>::leaf({1, 1, 2, 2}, {0.0, 1.0, 1.0, 0.0}, true);
  auto s = ad::global_sum_pool(x);
  CHECK(s.value()[0] == doctest::Approx(2.0));

  auto z = Tensor<double>::constant({1, 1, 2, 2}, std::vector<double>(4, 0.0));
  CHECK(ad::global_sum_pool(z).value()[0] == 0.0);

  auto loss = ad::affine_sum<double>({ad::stack_scalars<double>({s})}, {1.0});
  ad::backward(loss);
  for (int i = 0; i < 4; ++i) CHECK(x.grad()[i] == doctest::Approx(1.0));

  auto multi =
      Tensor<double>::constant({1, 2, 2, 2}, std::vector<double>(8, 0.0));
  CHECK_THROWS_AS(ad::global_sum_pool(multi), InvalidInput);
}

TEST_CASE("dense layer") {
  auto x = Tensor<double>::constant({1, 1}, {3.0});
  auto w = Tensor<double>::constant({1, 1}, {2.0});
  auto b = Tensor<double>::constant({1}, {0.0});
  CHECK(ad::dense(x, w, b).value()[0] == doctest::Approx(6.0));

  auto wi = Tensor<double>::constant({1, 1}, {1.0});
  CHECK(ad::dense(x, wi, b).value()[0] == doctest::Approx(3.0));

  auto wbad = Tensor<double>::constant({1, 2}, {1.0, 1.0});
  CHECK_THROWS_AS(ad::dense(x, wbad, b), InvalidInput);
}

TEST_CASE("backward linear and quadratic identities") {
  // loss = sum(x): grad all ones
  auto x = Tensor<double>::leaf({1, 1, 1, 2}, {1.0, 2.0}, true);
  auto loss = ad::affine_sum<double>(
      {ad::stack_scalars<double>({ad::global_sum_pool(x)})}, {1.0});
  ad::backward(loss);
  CHECK(x.grad()[0] == doctest::Approx(1.0));
  CHECK(x.grad()[1] == doctest::Approx(1.0));

  // loss = sum(x^2) at [1,2]: grad [2,4]
  auto x2 = Tensor<double>::leaf({1, 1, 1, 2}, {1.0, 2.0}, true);
  auto l2 = ad::affine_sum<double>(
      {ad::stack_scalars<double>({ad::global_sum_pool(ad::mul(x2, x2))})},
      {1.0});
  ad::backward(l2);
  CHECK(x2.grad()[0] == doctest::Approx(2.0));
  CHECK(x2.grad()[1] == doctest::Approx(4.0));

  auto vec = Tensor<double>::leaf({3}, {1.0, 2.0, 3.0}, true);
  CHECK_THROWS_AS(ad::backward(vec), InvalidInput);
}

TEST_CASE("per-layer gradients match finite differences (3 seeds)") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    Rng rng(seed);
    {  // conv2d
      auto x = random_tensor<double>({1, 2, 6, 6}, rng, true);
      auto w = random_tensor<double>({3, 2, 3, 3}, rng, true);
      auto b = random_tensor<double>({3}, rng, true);
      auto build = [&] {
        auto y = ad::relu(ad::conv2d(x, w, b));
        // collapse channels through 1x1 conv to reach the pooled scalar
        auto w1 = Tensor<double>::constant({1, 3, 1, 1}, {0.3, -0.7, 1.1});
        auto b1 = Tensor<double>::constant({1}, {0.0});
        return ad::affine_sum<double>(
            {ad::stack_scalars<double>(
                {ad::global_sum_pool(ad::conv2d(y, w1, b1))})},
            {1.0});
      };
      auto res = gradcheck(build, {x, w, b});
      CHECK_MESSAGE(res.max_rel_err < 1e-3, "conv2d: ", res.worst);
    }
    {  // avg_pool2
      auto x = random_tensor<double>({1, 1, 4, 4}, rng, true);
      auto build = [&] {
        return ad::affine_sum<double>(
            {ad::stack_scalars<double>(
                {ad::global_sum_pool(ad::avg_pool2(x))})},
            {1.0});
      };
      auto res = gradcheck(build, {x});
      CHECK(res.max_rel_err < 1e-3);
      ad::Tensor<double> loss = build();
      x.zero_grad();
      ad::backward(loss);
      for (auto g : x.grad()) CHECK(g == doctest::Approx(0.25));
    }
    {  // transposed_conv2 + sigmoid
      auto x = random_tensor<double>({1, 2, 3, 3}, rng, true);
      auto w = random_tensor<double>({1, 2, 4, 4}, rng, true, 0.5);
      auto b = random_tensor<double>({1}, rng, true, 0.1);
      auto build = [&] {
        return ad::affine_sum<double>(
            {ad::stack_scalars<double>({ad::global_sum_pool(
                ad::sigmoid(ad::transposed_conv2(x, w, b)))})},
            {1.0});
      };
      auto res = gradcheck(build, {x, w, b});
      CHECK_MESSAGE(res.max_rel_err < 1e-3, "tconv: ", res.worst);
    }
    {  // dense
      auto x = random_tensor<double>({1, 3}, rng, true);
      auto w = random_tensor<double>({2, 3}, rng, true);
      auto b = random_tensor<double>({2}, rng, true);
      auto w2 = random_tensor<double>({1, 2}, rng, true);
      auto b2 = random_tensor<double>({1}, rng, true);
      auto build = [&] {
        auto y = ad::dense(ad::dense(x, w, b), w2, b2);  // (1,1)
        return ad::affine_sum<double>({ad::stack_scalars<double>({y})}, {1.0});
      };
      auto res = gradcheck(build, {x, w, b, w2, b2});
      CHECK_MESSAGE(res.max_rel_err < 1e-3, "dense: ", res.worst);
    }
    {  // elementwise mul
      auto a = random_tensor<double>({1, 1, 3, 3}, rng, true);
      auto b = random_tensor<double>({1, 1, 3, 3}, rng, true);
      auto build = [&] {
        return ad::affine_sum<double>(
            {ad::stack_scalars<double>(
                {ad::global_sum_pool(ad::mul(a, b))})},
            {1.0});
      };
      auto res = gradcheck(build, {a, b});
      CHECK_MESSAGE(res.max_rel_err < 1e-3, "mul: ", res.worst);
    }
  }
}

TEST_CASE("loss reduction ops match finite differences") {
  Rng rng(23);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    Rng r = rng.fork(seed);

    {  // pearson over a raw vector
      auto pred = random_tensor<double>({5}, r, true);
      std::vector<double> obs{0.4, 1.9, 0.7, 3.0, 2.2};
      auto build = [&] { return ad::pearson_loss_op(pred, obs, 1e-8); };
      auto res = gradcheck(build, {pred}, 1e-4);
      CHECK_MESSAGE(res.max_rel_err < 1e-3, "pearson: ", res.worst);
    }
    {  // range penalty
      auto x = random_tensor<double>({1, 1, 4, 4}, r, true);
      auto build = [&] { return ad::range_penalty_op(x, 10.0, 1e-6); };
      auto res = gradcheck(build, {x}, 1e-5);
      CHECK_MESSAGE(res.max_rel_err < 1e-3, "range: ", res.worst);
    }
    {  // window variance
      auto x = random_tensor<double>({1, 1, 8, 8}, r, true);
      auto build = [&] { return ad::window_variance_op(x, 1, 2, 6); };
      auto res = gradcheck(build, {x}, 1e-4);
      CHECK_MESSAGE(res.max_rel_err < 1e-3, "winvar: ", res.worst);
    }
    {  // inverse variance
      auto x = random_tensor<double>({6}, r, true);
      auto build = [&] { return ad::inverse_variance_op(x, 0.01); };
      auto res = gradcheck(build, {x}, 1e-5);
      CHECK_MESSAGE(res.max_rel_err < 1e-3, "invvar: ", res.worst);
    }
  }
}

TEST_CASE("adam first step follows the closed form") {
  auto make_layer = [](double w0, ad::Constraint c) {
    ad::LayerParams<float> l;
    l.name = "p";
    l.kind = ad::LayerKind::dense;
    l.constraint = c;
    l.weights = Tensor<float>::leaf({1, 1}, {static_cast<float>(w0)}, true);
    l.bias = Tensor<float>::leaf({1}, {0.0f}, true);
    return l;
  };

  SUBCASE("first step moves by about -lr*sign(g)") {
    for (double g : {0.5, -1.25, 3.0}) {
      auto layer = make_layer(1.0, ad::Constraint::none);
      auto st = ad::adam_init<float>({&layer}, 0.01);
      layer.weights.node()->ensure_grad()[0] = static_cast<float>(g);
      layer.bias.node()->ensure_grad()[0] = 0.0f;
      ad::adam_step<float>({&layer}, st);
      // closed form for step 1: delta = -lr * g / (|g| + eps)
      const double expect = 1.0 - 0.01 * g / (std::abs(g) + 1e-8);
      CHECK(layer.weights.value()[0] == doctest::Approx(expect).epsilon(1e-5));
      CHECK(st.step_count == 1);
    }
  }

  SUBCASE("zero grad leaves the parameter unchanged") {
    auto layer = make_layer(0.75, ad::Constraint::none);
    auto st = ad::adam_init<float>({&layer}, 0.01);
    layer.weights.node()->ensure_grad()[0] = 0.0f;
    layer.bias.node()->ensure_grad()[0] = 0.0f;
    ad::adam_step<float>({&layer}, st);
    CHECK(layer.weights.value()[0] == 0.75f);
    CHECK(st.step_count == 1);
  }

  SUBCASE("nonnegative constraint clamps after the update") {
    auto layer = make_layer(0.0, ad::Constraint::nonnegative);
    auto st = ad::adam_init<float>({&layer}, 0.01);
    layer.weights.node()->ensure_grad()[0] = 5.0f;  // pushes negative
    layer.bias.node()->ensure_grad()[0] = 0.0f;
    ad::adam_step<float>({&layer}, st);
    CHECK(layer.weights.value()[0] >= 0.0f);
  }

  SUBCASE("constrained weights stay nonnegative over many random steps") {
    Rng rng(31);
    auto layer = make_layer(0.05, ad::Constraint::nonnegative);
    auto st = ad::adam_init<float>({&layer}, 0.01);
    for (int i = 0; i < 200; ++i) {
      layer.weights.node()->ensure_grad()[0] =
          static_cast<float>(rng.normal() * 3.0);
      layer.bias.node()->ensure_grad()[0] = 0.0f;
      ad::adam_step<float>({&layer}, st);
      CHECK(layer.weights.value()[0] >= 0.0f);
    }
  }

  SUBCASE("missing grad is an error") {
    auto layer = make_layer(1.0, ad::Constraint::none);
    auto st = ad::adam_init<float>({&layer}, 0.01);
    CHECK_THROWS_AS(ad::adam_step<float>({&layer}, st), InvalidInput);
  }
}

}  // TEST_SUITE
