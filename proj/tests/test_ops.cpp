#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracles.hpp"
#include "rppg/gradcheck.hpp"
#include "rppg/model.hpp"

using namespace rppg;

namespace {
constexpr int kGradSeeds = 5;
}

TEST_CASE("conv2d: zero input gives the bias everywhere") {
  Tensor<double> x = Tensor<double>::zeros({1, 1, 3, 3});
  Rng rng(3);
  Tensor<double> w = oracle::random_tensor<double>({2, 1, 3, 3}, rng);
  Tensor<double> b = Tensor<double>::from_vector({2}, {0.7, -1.25});
  Tensor<double> y = conv2d(x, w, b);
  for (Index c = 0; c < 2; ++c)
    for (Index i = 0; i < 9; ++i) CHECK(y.data()[c * 9 + i] == b.data()[c]);
}

TEST_CASE("conv2d: identity kernel reproduces the input") {
  Rng rng(4);
  Tensor<double> x = oracle::random_tensor<double>({2, 1, 5, 4}, rng);
  Tensor<double> w = Tensor<double>::zeros({1, 1, 3, 3});
  w.data()[4] = 1.0;  // center tap
  Tensor<double> b = Tensor<double>::zeros({1});
  Tensor<double> y = conv2d(x, w, b);
  for (Index i = 0; i < x.size(); ++i) CHECK(y.data()[i] == x.data()[i]);
}

TEST_CASE("conv2d: matches quadruple-loop brute force on random input") {
  Rng rng(5);
  Tensor<double> x = oracle::random_tensor<double>({1, 2, 4, 4}, rng);
  Tensor<double> w = oracle::random_tensor<double>({1, 2, 3, 3}, rng);
  Tensor<double> b = oracle::random_tensor<double>({1}, rng);
  Tensor<double> got = conv2d(x, w, b);
  Tensor<double> want = oracle::conv2d_bruteforce(x, w, b);
  for (Index i = 0; i < got.size(); ++i) CHECK(got.data()[i] == doctest::Approx(want.data()[i]).epsilon(1e-13));

  // larger case with several frames and channels
  Tensor<double> x2 = oracle::random_tensor<double>({3, 4, 6, 5}, rng);
  Tensor<double> w2 = oracle::random_tensor<double>({2, 4, 3, 3}, rng);
  Tensor<double> b2 = oracle::random_tensor<double>({2}, rng);
  Tensor<double> got2 = conv2d(x2, w2, b2);
  Tensor<double> want2 = oracle::conv2d_bruteforce(x2, w2, b2);
  for (Index i = 0; i < got2.size(); ++i)
    CHECK(got2.data()[i] == doctest::Approx(want2.data()[i]).epsilon(1e-13));
}

TEST_CASE("conv2d: dimension errors") {
  Tensor<double> x = Tensor<double>::zeros({1, 2, 4, 4});
  CHECK_THROWS_AS(conv2d(x, Tensor<double>::zeros({1, 3, 3, 3}), Tensor<double>::zeros({1})), ShapeError);
  CHECK_THROWS_AS(conv2d(x, Tensor<double>::zeros({1, 2, 5, 5}), Tensor<double>::zeros({1})), ShapeError);
  CHECK_THROWS_AS(conv2d(x, Tensor<double>::zeros({1, 2, 3, 3}), Tensor<double>::zeros({2})), ShapeError);
}

TEST_CASE("conv1d_fixed: derivative filter annihilates constants on interior points") {
  Tensor<double> k = make_dtc_kernel<double>();
  // Exact zero for a constant whose multiples sum without rounding.
  Tensor<double> x = Tensor<double>::full({2, 16}, 3.5);
  Tensor<double> y = conv1d_fixed(x, k);
  for (Index c = 0; c < 2; ++c)
    for (Index t = 2; t <= 13; ++t) CHECK(y.data()[c * 16 + t] == 0.0);
  // Arbitrary constants cancel to rounding noise.
  Tensor<double> y2 = conv1d_fixed(Tensor<double>::full({1, 16}, 3.7), k);
  for (Index t = 2; t <= 13; ++t) CHECK(std::abs(y2.data()[t]) < 1e-14);
}

TEST_CASE("conv1d_fixed: ramp maps to the constant 10 on interior points") {
  Tensor<double> k = make_dtc_kernel<double>();
  const Index T = 20;
  Tensor<double> x({1, T});
  for (Index t = 0; t < T; ++t) x.data()[t] = static_cast<double>(t);
  Tensor<double> y = conv1d_fixed(x, k);
  for (Index t = 2; t <= T - 3; ++t) CHECK(y.data()[t] == 10.0);  // sum tau*w(tau) = 10
}

TEST_CASE("conv1d_fixed: bitwise equal to the sliding-dot-product oracle") {
  Rng rng(6);
  Tensor<double> x = oracle::random_tensor<double>({3, 33}, rng);
  const double taps[5] = {-2, -1, 0, 1, 2};
  Tensor<double> got = conv1d_fixed(x, make_dtc_kernel<double>());
  Tensor<double> want = oracle::conv1d_bruteforce(x, taps);
  CHECK(bitwise_equal(got, want));

  // arbitrary (non-derivative) taps as well
  Tensor<double> k2 = Tensor<double>::from_vector({5}, {0.3, -1.1, 0.25, 2.0, -0.7});
  const double taps2[5] = {0.3, -1.1, 0.25, 2.0, -0.7};
  CHECK(bitwise_equal(conv1d_fixed(x, k2), oracle::conv1d_bruteforce(x, taps2)));
}

TEST_CASE("conv1d_fixed: kernel is not a trainable leaf") {
  Tensor<double> x = Tensor<double>::zeros({1, 8});
  Tensor<double> k = make_dtc_kernel<double>();
  k.set_requires_grad(true);
  CHECK_THROWS_AS(conv1d_fixed(x, k), ContractError);
  CHECK_THROWS_AS(conv1d_fixed(Tensor<double>::zeros({8}), make_dtc_kernel<double>()), ShapeError);
}

TEST_CASE("avgpool2d: floor semantics on odd extents") {
  // 5x5 pools to 2x2 using the top-left 4x4 region.
  Tensor<double> x({1, 1, 5, 5});
  for (Index i = 0; i < 25; ++i) x.data()[i] = static_cast<double>(i);
  Tensor<double> y = avgpool2d(x);
  CHECK(y.shape() == Shape{1, 1, 2, 2});
  CHECK(y.data()[0] == doctest::Approx((0 + 1 + 5 + 6) / 4.0));
  CHECK(y.data()[3] == doctest::Approx((12 + 13 + 17 + 18) / 4.0));
}

TEST_CASE("batchnorm2d: already-normalized channel with unit scale is an identity up to eps") {
  const Index n = 4, hw = 4;
  Tensor<double> x({n, 1, 2, 2});
  Rng rng(7);
  for (Index i = 0; i < x.size(); ++i) x.array()[i] = rng.normal();
  // normalize exactly
  const double mu = x.array().mean();
  const double sd = std::sqrt((x.array() - mu).square().mean());
  x.array() = (x.array() - mu) / sd;

  Tensor<double> gamma = Tensor<double>::full({1}, 1.0);
  Tensor<double> beta = Tensor<double>::zeros({1});
  ArrayX<double> rm = ArrayX<double>::Zero(1), rv = ArrayX<double>::Ones(1);
  Tensor<double> y = batchnorm2d(x, gamma, beta, rm, rv, Mode::Train);
  for (Index i = 0; i < n * hw; ++i) CHECK(y.data()[i] == doctest::Approx(x.data()[i]).epsilon(1e-4));

  // running statistics moved toward the batch statistics with momentum 0.1
  CHECK(rm[0] == doctest::Approx(0.0).scale(1.0).epsilon(1e-9));
  CHECK(rv[0] == doctest::Approx(0.9 * 1.0 + 0.1 * 1.0).epsilon(1e-6));
}

TEST_CASE("batchnorm2d: inference mode uses running statistics and leaves them unchanged") {
  Tensor<double> x = Tensor<double>::full({2, 1, 2, 2}, 5.0);
  Tensor<double> gamma = Tensor<double>::full({1}, 2.0);
  Tensor<double> beta = Tensor<double>::full({1}, -1.0);
  ArrayX<double> rm = ArrayX<double>::Constant(1, 3.0), rv = ArrayX<double>::Constant(1, 4.0);
  Tensor<double> y = batchnorm2d(x, gamma, beta, rm, rv, Mode::Infer);
  const double want = 2.0 * (5.0 - 3.0) / std::sqrt(4.0 + 1e-5) - 1.0;
  for (Index i = 0; i < y.size(); ++i) CHECK(y.data()[i] == doctest::Approx(want).epsilon(1e-12));
  CHECK(rm[0] == 3.0);
  CHECK(rv[0] == 4.0);
}

TEST_CASE("softmax: uniform logits over 31 entries give 1/31 each") {
  Tensor<double> x = Tensor<double>::full({31}, 0.42);
  Tensor<double> p = softmax(x);
  for (Index i = 0; i < 31; ++i) CHECK(p.data()[i] == doctest::Approx(1.0 / 31.0).epsilon(1e-12));
  CHECK(p.array().sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("mse_reduce: identical signals give zero") {
  Rng rng(8);
  Tensor<double> x = oracle::random_tensor<double>({64}, rng);
  CHECK(mse_reduce(x, x).item() == 0.0);
}

TEST_CASE("concat_channels followed by slicing recovers the originals exactly") {
  Rng rng(9);
  Tensor<double> a = oracle::random_tensor<double>({2, 7}, rng);
  Tensor<double> b = oracle::random_tensor<double>({3, 7}, rng);
  Tensor<double> c = oracle::random_tensor<double>({1, 7}, rng);
  Tensor<double> cat = concat_channels<double>({a, b, c});
  CHECK(cat.shape() == Shape{6, 7});
  CHECK(bitwise_equal(slice_channels(cat, 0, 2), a));
  CHECK(bitwise_equal(slice_channels(cat, 2, 3), b));
  CHECK(bitwise_equal(slice_channels(cat, 5, 1), c));
}

TEST_CASE("spatial_mean collapses H and W per frame and channel") {
  Tensor<double> x({2, 3, 2, 2});
  for (Index i = 0; i < x.size(); ++i) x.data()[i] = static_cast<double>(i);
  Tensor<double> y = spatial_mean(x);
  CHECK(y.shape() == Shape{3, 2});
  // frame 0, channel 0 holds 0..3
  CHECK(y.data()[0] == doctest::Approx(1.5));
  // frame 1, channel 2 holds 20..23
  CHECK(y.data()[2 * 2 + 1] == doctest::Approx(21.5));
}

TEST_CASE("standardize rejects constant input") {
  CHECK_THROWS_AS(standardize(Tensor<double>::full({16}, 2.5)), DegenerateSignalError);
}

TEST_CASE("scalar plumbing ops behave") {
  Tensor<double> a = Tensor<double>::scalar(2.0);
  Tensor<double> b = Tensor<double>::scalar(-3.0);
  Tensor<double> c = Tensor<double>::scalar(1.0);
  Tensor<double> stacked = stack_scalars<double>({a, b, c});
  CHECK(stacked.shape() == Shape{3});
  CHECK(max_reduce(stacked).item() == 2.0);
  CHECK(dot(stacked, stacked).item() == doctest::Approx(14.0));
  Tensor<double> aff = affine(stacked, 2.0, 1.0);
  CHECK(aff.data()[1] == doctest::Approx(-5.0));
  CHECK(reshape(stacked, {3, 1}).shape() == Shape{3, 1});
  CHECK_THROWS_AS(reshape(stacked, {4}), ShapeError);
}

// ---------------------------------------------------------------------------
// Finite-difference checks, one per op.
// ---------------------------------------------------------------------------

TEST_CASE("gradcheck: conv2d") {
  for (std::uint64_t s = 0; s < kGradSeeds; ++s) {
    Rng rng(s);
    auto x = oracle::random_tensor<double>({2, 2, 4, 4}, rng, -1, 1, true);
    auto w = oracle::random_tensor<double>({3, 2, 3, 3}, rng, -1, 1, true);
    auto b = oracle::random_tensor<double>({3}, rng, -1, 1, true);
    auto target = oracle::random_tensor<double>({2, 3, 4, 4}, rng);
    auto r = check_gradients<double>([&] { return mse_reduce(conv2d(x, w, b), target); }, {x, w, b});
    CHECK(r.pass);
  }
}

TEST_CASE("gradcheck: conv1d_fixed routes gradient to input only") {
  for (std::uint64_t s = 0; s < kGradSeeds; ++s) {
    Rng rng(s + 10);
    auto x = oracle::random_tensor<double>({2, 11}, rng, -1, 1, true);
    auto k = make_dtc_kernel<double>();
    auto target = oracle::random_tensor<double>({2, 11}, rng);
    auto r = check_gradients<double>([&] { return mse_reduce(conv1d_fixed(x, k), target); }, {x});
    CHECK(r.pass);
    CHECK_FALSE(k.requires_grad());  // structurally no gradient entry
  }
}

TEST_CASE("gradcheck: tanh, avgpool, spatial_mean, reshape, affine") {
  for (std::uint64_t s = 0; s < kGradSeeds; ++s) {
    Rng rng(s + 20);
    auto x = oracle::random_tensor<double>({2, 2, 4, 4}, rng, -1, 1, true);
    auto target = oracle::random_tensor<double>({2, 8}, rng);
    auto r = check_gradients<double>(
        [&] {
          auto y = avgpool2d(rppg::tanh(x));
          return mse_reduce(reshape(affine(y, 0.7, 0.1), {2, 8}), target);
        },
        {x});
    CHECK(r.pass);

    auto z = oracle::random_tensor<double>({3, 2, 2, 2}, rng, -1, 1, true);
    auto t2 = oracle::random_tensor<double>({2, 3}, rng);
    auto r2 = check_gradients<double>([&] { return mse_reduce(spatial_mean(z), t2); }, {z});
    CHECK(r2.pass);
  }
}

TEST_CASE("gradcheck: batchnorm2d in both modes") {
  for (std::uint64_t s = 0; s < kGradSeeds; ++s) {
    Rng rng(s + 30);
    auto x = oracle::random_tensor<double>({3, 2, 3, 3}, rng, -1, 1, true);
    auto gm = oracle::random_tensor<double>({2}, rng, 0.5, 1.5, true);
    auto bt = oracle::random_tensor<double>({2}, rng, -0.5, 0.5, true);
    auto target = oracle::random_tensor<double>({3, 2, 3, 3}, rng);
    for (Mode mode : {Mode::Train, Mode::Infer}) {
      auto r = check_gradients<double>(
          [&] {
            ArrayX<double> rm = ArrayX<double>::Zero(2);
            ArrayX<double> rv = ArrayX<double>::Constant(2, 0.8);
            return mse_reduce(batchnorm2d(x, gm, bt, rm, rv, mode), target);
          },
          {x, gm, bt});
      CHECK(r.pass);
    }
  }
}

TEST_CASE("gradcheck: concat, conv1x1, softmax, standardize, dot, stack, max") {
  for (std::uint64_t s = 0; s < kGradSeeds; ++s) {
    Rng rng(s + 40);
    auto a = oracle::random_tensor<double>({2, 6}, rng, -1, 1, true);
    auto b = oracle::random_tensor<double>({3, 6}, rng, -1, 1, true);
    auto w = oracle::random_tensor<double>({1, 5}, rng, -1, 1, true);
    auto bias = oracle::random_tensor<double>({1}, rng, -1, 1, true);
    auto target = oracle::random_tensor<double>({1, 6}, rng);
    auto r = check_gradients<double>(
        [&] { return mse_reduce(conv1x1(concat_channels<double>({a, b}), w, bias), target); },
        {a, b, w, bias});
    CHECK(r.pass);

    auto logits = oracle::random_tensor<double>({9}, rng, -1, 1, true);
    auto sig = oracle::random_tensor<double>({9}, rng, -1, 1, true);
    auto r2 = check_gradients<double>([&] { return dot(softmax(logits), standardize(sig)); },
                                      {logits, sig});
    CHECK(r2.pass);

    auto s1 = oracle::random_tensor<double>({1}, rng, -1, 1, true);
    auto s2 = oracle::random_tensor<double>({1}, rng, -1, 1, true);
    auto s3 = oracle::random_tensor<double>({1}, rng, -1, 1, true);
    auto r3 = check_gradients<double>(
        [&] { return max_reduce(stack_scalars<double>({s1, s2, s3})); }, {s1, s2, s3});
    CHECK(r3.pass);
  }
}

TEST_CASE("float32 instantiation runs and stays close to float64") {
  Rng rng(50);
  Tensor<double> xd = oracle::random_tensor<double>({1, 2, 4, 4}, rng);
  Tensor<double> wd = oracle::random_tensor<double>({1, 2, 3, 3}, rng);
  Tensor<double> bd = oracle::random_tensor<double>({1}, rng);
  Tensor<float> xf = Tensor<float>::from_array({1, 2, 4, 4}, xd.array().cast<float>());
  Tensor<float> wf = Tensor<float>::from_array({1, 2, 3, 3}, wd.array().cast<float>());
  Tensor<float> bf = Tensor<float>::from_array({1}, bd.array().cast<float>());
  Tensor<double> yd = conv2d(xd, wd, bd);
  Tensor<float> yf = conv2d(xf, wf, bf);
  for (Index i = 0; i < yd.size(); ++i)
    CHECK(static_cast<double>(yf.data()[i]) == doctest::Approx(yd.data()[i]).epsilon(1e-4));
}
