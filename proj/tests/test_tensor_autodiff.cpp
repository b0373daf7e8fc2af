#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracles.hpp"
#include "rppg/gradcheck.hpp"
#include "rppg/ops.hpp"

using namespace rppg;

TEST_CASE("tensor shape and storage invariants") {
  Tensor<double> t({2, 3, 4});
  CHECK(t.size() == 24);
  CHECK(t.rank() == 3);
  CHECK(t.array().size() == numel(t.shape()));
  CHECK_FALSE(t.requires_grad());
  CHECK_THROWS_AS(t.grad(), ContractError);

  t.set_requires_grad(true);
  CHECK(t.grad().size() == t.size());  // grad present iff requires_grad, same extent
  t.set_requires_grad(false);
  CHECK_THROWS_AS(t.grad(), ContractError);

  CHECK_THROWS_AS(Tensor<double>({2, 0}), ShapeError);
  CHECK_THROWS_AS(Tensor<double>({-1}), ShapeError);
  CHECK_THROWS_AS(Tensor<double>::from_vector({3}, {1.0, 2.0}), ShapeError);
  CHECK_THROWS_AS(Tensor<double>::full({2, 2}, 1.0).item(), ContractError);
}

TEST_CASE("tensor handles alias, clone detaches") {
  Tensor<double> a = Tensor<double>::from_vector({3}, {1, 2, 3});
  Tensor<double> alias = a;
  alias.array()[0] = 9;
  CHECK(a.array()[0] == 9);

  Tensor<double> deep = a.clone();
  deep.array()[0] = -1;
  CHECK(a.array()[0] == 9);
  CHECK_FALSE(deep.same_node(a));
}

TEST_CASE("backward of sum of squares is 2w") {
  Tensor<double> w = Tensor<double>::from_vector({4}, {1, -2, 3, 0.5}, "w");
  w.set_requires_grad(true);
  Tape<double> tape;
  {
    auto scope = tape.activate();
    Tensor<double> loss = dot(w, w);
    tape.backward(loss);
  }
  for (Index i = 0; i < 4; ++i) CHECK(w.grad()[i] == doctest::Approx(2.0 * w.array()[i]).epsilon(1e-12));
}

TEST_CASE("gradients accumulate across separate tapes until cleared") {
  Tensor<double> w = Tensor<double>::from_vector({2}, {1, 2}, "w");
  w.set_requires_grad(true);
  for (int round = 0; round < 2; ++round) {
    Tape<double> tape;
    auto scope = tape.activate();
    tape.backward(dot(w, w));
  }
  CHECK(w.grad()[0] == doctest::Approx(4.0));
  w.zero_grad();
  CHECK(w.grad()[0] == 0.0);
}

TEST_CASE("tape rejects a second backward without new forward work") {
  Tensor<double> w = Tensor<double>::scalar(2.0, "w");
  w.set_requires_grad(true);
  Tape<double> tape;
  auto scope = tape.activate();
  Tensor<double> loss = dot(w, w);
  tape.backward(loss);
  CHECK_THROWS_AS(tape.backward(loss), TapeError);

  // A fresh forward pass re-arms the tape.
  Tensor<double> loss2 = dot(w, w);
  CHECK_NOTHROW(tape.backward(loss2));
}

TEST_CASE("tape rejects non-scalar and off-tape losses") {
  Tensor<double> w = Tensor<double>::from_vector({2}, {1, 2}, "w");
  w.set_requires_grad(true);
  Tape<double> tape;
  {
    auto scope = tape.activate();
    Tensor<double> vec = affine(w, 2.0, 0.0);
    CHECK_THROWS_AS(tape.backward(vec), ContractError);
  }
  Tape<double> fresh;
  CHECK_THROWS_AS(fresh.backward(Tensor<double>::scalar(1.0)), TapeError);
}

TEST_CASE("ops do not record when no tape is active") {
  Tensor<double> w = Tensor<double>::from_vector({2}, {1, 2}, "w");
  w.set_requires_grad(true);
  Tensor<double> y = affine(w, 3.0, 0.0);  // no active tape
  CHECK_FALSE(y.requires_grad());
  Tape<double> tape;
  CHECK(tape.size() == 0);
}

TEST_CASE("forward results are bitwise deterministic") {
  Rng rng(11);
  Tensor<double> x = oracle::random_tensor<double>({2, 3, 6, 6}, rng);
  Tensor<double> w = oracle::random_tensor<double>({4, 3, 3, 3}, rng);
  Tensor<double> b = oracle::random_tensor<double>({4}, rng);
  Tensor<double> y1 = conv2d(x, w, b);
  Tensor<double> y2 = conv2d(x, w, b);
  CHECK(bitwise_equal(y1, y2));
}

TEST_CASE("non-finite detection names the first offending op") {
  Tensor<double> x = Tensor<double>::from_vector({2}, {1.0, std::numeric_limits<double>::infinity()}, "x");
  x.set_requires_grad(true);
  Tape<double> tape;
  auto scope = tape.activate();
  Tensor<double> y = rppg::tanh(affine(x, 1.0, 0.0));
  (void)y;
  auto culprit = tape.first_non_finite();
  REQUIRE(culprit.has_value());
  CHECK(culprit->find("affine") != std::string::npos);
}

TEST_CASE("finite differences match tape gradients for composed scalar graph") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed);
    Tensor<double> w = oracle::random_tensor<double>({6}, rng, -1.0, 1.0, true);
    w.set_name("w");
    auto report = check_gradients<double>(
        [&] { return mse_reduce(rppg::tanh(affine(w, 1.3, -0.2)), Tensor<double>::zeros({6})); }, {w});
    CHECK(report.pass);
    CHECK(report.max_rel_err < 1e-4);
  }
}
