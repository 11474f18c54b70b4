#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN

#include "nova/tensor.hpp"

#include <cmath>
#include <vector>

#include "doctest.h"
#include "test_support.hpp"

using namespace nova;
using nova::test::finite_diff_grad;
using nova::test::max_rel_err;

namespace {

const double kFdStep = 1e-5;

// Runs f twice: once recording on a tape to get analytic gradients of `leaf`,
// once per finite-difference probe.
template <typename Fwd>
double check_grad(const Tensor<double>& leaf, Fwd fwd) {
  Tensor<double> x = leaf.clone();
  x.set_requires_grad(true);
  Tape<double> tape;
  Tensor<double> loss = fwd(&tape, x);
  tape.backward(loss);
  std::vector<double> analytic = x.grad();

  auto scalar_f = [&](const Tensor<double>& probe) {
    Tape<double> t2;
    Tensor<double> p = probe.clone();
    p.set_requires_grad(true);
    return fwd(&t2, p).item();
  };
  std::vector<double> numeric =
      finite_diff_grad<double>(scalar_f, leaf, kFdStep);
  return max_rel_err(analytic, numeric);
}

}  // namespace

TEST_CASE("matmul forward identities") {
  Tensor<float> eye({2, 2}, {1, 0, 0, 1});
  Tensor<float> a({2, 2}, {1, 2, 3, 4});
  Tensor<float> p = matmul<float>(nullptr, eye, a);
  CHECK(p.values() == std::vector<float>{1, 2, 3, 4});

  Tensor<float> row({1, 2}, {1, 0});
  Tensor<float> col({2, 1}, {0, 1});
  CHECK(matmul<float>(nullptr, row, col).item() == 0.0f);

  CHECK_THROWS_AS(matmul<float>(nullptr, row, row), ShapeError);
}

TEST_CASE("matmul gradients vs finite differences") {
  Rng rng(7);
  for (int seed = 0; seed < 10; ++seed) {
    Rng r = rng.fork(seed);
    Tensor<double> a = Tensor<double>::randn({3, 4}, r);
    Tensor<double> b = Tensor<double>::randn({4, 2}, r);

    double err_a = check_grad(a, [&](Tape<double>* t, const Tensor<double>& x) {
      return mean(t, matmul(t, x, b));
    });
    double err_b = check_grad(b, [&](Tape<double>* t, const Tensor<double>& x) {
      return mean(t, silu(t, matmul(t, a, x)));
    });
    CHECK(err_a < 1e-6);
    CHECK(err_b < 1e-6);
  }
}

TEST_CASE("matmul_nt matches matmul with transposed operand") {
  Rng rng(11);
  Tensor<double> a = Tensor<double>::randn({3, 5}, rng);
  Tensor<double> b = Tensor<double>::randn({4, 5}, rng);
  Tensor<double> bt = Tensor<double>::zeros({5, 4});
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 5; ++j)
      bt.data()[j * 4 + i] = b.data()[i * 5 + j];
  Tensor<double> x = matmul_nt<double>(nullptr, a, b);
  Tensor<double> y = matmul<double>(nullptr, a, bt);
  for (std::size_t i = 0; i < x.size(); ++i)
    CHECK(x.data()[i] == doctest::Approx(y.data()[i]).epsilon(1e-12));

  double err = check_grad(b, [&](Tape<double>* t, const Tensor<double>& p) {
    return mean(t, matmul_nt(t, a, p));
  });
  CHECK(err < 1e-6);
}

TEST_CASE("softmax_masked values") {
  Tensor<float> x({1, 3}, {0, 0, 0});
  BoolMask all = BoolMask::all_true(1, 3);
  Tensor<float> y = softmax_masked<float>(nullptr, x, all);
  for (std::size_t j = 0; j < 3; ++j)
    CHECK(y.data()[j] == doctest::Approx(1.0f / 3.0f));

  // Masked entries are exactly zero and do not disturb the rest, no matter
  // how extreme the masked values are.
  Tensor<float> z({1, 3}, {5.0f, -1e9f, 5.0f});
  BoolMask m(1, 3);
  m.set(0, 0, true);
  m.set(0, 2, true);
  Tensor<float> w = softmax_masked<float>(nullptr, z, m);
  CHECK(w.data()[0] == 0.5f);
  CHECK(w.data()[1] == 0.0f);
  CHECK(w.data()[2] == 0.5f);

  BoolMask none(1, 3);
  CHECK_THROWS_AS(softmax_masked<float>(nullptr, z, none), DomainError);
}

TEST_CASE("softmax_masked rows sum to one with exact zeros") {
  Rng rng(23);
  for (int seed = 0; seed < 10; ++seed) {
    Rng r = rng.fork(seed);
    Tensor<double> x = Tensor<double>::randn({4, 7}, r, 3.0);
    BoolMask m(4, 7);
    for (std::size_t i = 0; i < 4; ++i) {
      m.set(i, r.index(7), true);  // guarantee one unmasked entry
      for (std::size_t j = 0; j < 7; ++j)
        if (r.uniform() < 0.6) m.set(i, j, true);
    }
    Tensor<double> y = softmax_masked<double>(nullptr, x, m);
    for (std::size_t i = 0; i < 4; ++i) {
      double s = 0;
      for (std::size_t j = 0; j < 7; ++j) {
        if (!m.at(i, j)) CHECK(y.data()[i * 7 + j] == 0.0);
        s += y.data()[i * 7 + j];
      }
      CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
    }
  }
}

TEST_CASE("softmax_masked gradient vs finite differences") {
  Rng rng(31);
  for (int seed = 0; seed < 10; ++seed) {
    Rng r = rng.fork(seed);
    Tensor<double> x = Tensor<double>::randn({2, 4}, r);
    BoolMask m = BoolMask::all_true(2, 4);
    m.set(0, 2, false);
    Tensor<double> wsum = Tensor<double>::randn({2, 4}, r);
    double err = check_grad(x, [&](Tape<double>* t, const Tensor<double>& p) {
      return sum(t, mul(t, softmax_masked(t, p, m), wsum));
    });
    CHECK(err < 1e-6);
  }
}

TEST_CASE("layer_norm values") {
  Tensor<float> gain({4}, {1, 1, 1, 1});
  Tensor<float> bias({4}, {0, 0, 0, 0});
  Tensor<float> c = Tensor<float>::full({2, 4}, 3.5f);
  Tensor<float> y = layer_norm<float>(nullptr, c, gain, bias, 1e-5f);
  for (std::size_t i = 0; i < y.size(); ++i) CHECK(y.data()[i] == 0.0f);

  Tensor<float> x({1, 2}, {1, -1});
  Tensor<float> g2({2}, {1, 1});
  Tensor<float> b2({2}, {0, 0});
  Tensor<float> z = layer_norm<float>(nullptr, x, g2, b2, 1e-12f);
  CHECK(z.data()[0] == doctest::Approx(1.0f).epsilon(1e-5));
  CHECK(z.data()[1] == doctest::Approx(-1.0f).epsilon(1e-5));
}

TEST_CASE("layer_norm gradient vs finite differences") {
  Rng rng(41);
  for (int seed = 0; seed < 10; ++seed) {
    Rng r = rng.fork(seed);
    Tensor<double> x = Tensor<double>::randn({3, 5}, r);
    Tensor<double> gain = Tensor<double>::randn({5}, r, 0.5);
    Tensor<double> bias = Tensor<double>::randn({5}, r, 0.5);
    Tensor<double> w = Tensor<double>::randn({3, 5}, r);

    double ex = check_grad(x, [&](Tape<double>* t, const Tensor<double>& p) {
      return sum(t, mul(t, layer_norm(t, p, gain, bias, 1e-6), w));
    });
    double eg = check_grad(gain, [&](Tape<double>* t, const Tensor<double>& p) {
      return sum(t, mul(t, layer_norm(t, x, p, bias, 1e-6), w));
    });
    double eb = check_grad(bias, [&](Tape<double>* t, const Tensor<double>& p) {
      return sum(t, mul(t, layer_norm(t, x, gain, p, 1e-6), w));
    });
    CHECK(ex < 1e-6);
    CHECK(eg < 1e-6);
    CHECK(eb < 1e-6);
  }
}

TEST_CASE("normalize_rows zeroes constant rows through the eps floor") {
  Tensor<double> c = Tensor<double>::full({3, 8}, 2.0);
  Tensor<double> y = normalize_rows<double>(nullptr, c, 1e-6);
  for (std::size_t i = 0; i < y.size(); ++i) CHECK(y.data()[i] == 0.0);
}

TEST_CASE("elementwise suite") {
  Tensor<float> zero = Tensor<float>::scalar(0.0f);
  CHECK(silu<float>(nullptr, zero).item() == 0.0f);

  Rng rng(5);
  Tensor<float> x = Tensor<float>::randn({2, 3}, rng);
  Tensor<float> zs = Tensor<float>::zeros({2, 3});
  Tensor<float> same = add<float>(nullptr, x, zs);
  CHECK(same.values() == x.values());

  Tensor<double> one = Tensor<double>::scalar(1.0);
  double err = check_grad(one, [&](Tape<double>* t, const Tensor<double>& p) {
    return sum(t, silu(t, p));
  });
  CHECK(err < 1e-6);
}

TEST_CASE("elementwise gradients vs finite differences over seeds") {
  Rng rng(57);
  for (int seed = 0; seed < 10; ++seed) {
    Rng r = rng.fork(seed);
    Tensor<double> a = Tensor<double>::randn({3, 4}, r);
    Tensor<double> b = Tensor<double>::randn({3, 4}, r);
    Tensor<double> bias = Tensor<double>::randn({4}, r);

    auto composed = [&](Tape<double>* t, const Tensor<double>& p) {
      Tensor<double> u = mul(t, add(t, p, b), sub(t, p, b));
      u = add_rowwise(t, scale(t, u, 0.7), bias);
      return mean(t, silu(t, u));
    };
    CHECK(check_grad(a, composed) < 1e-5);

    auto through_bias = [&](Tape<double>* t, const Tensor<double>& p) {
      return mean(t, add_rowwise(t, a, p));
    };
    CHECK(check_grad(bias, through_bias) < 1e-6);
  }
}

TEST_CASE("reshape, slice, concat round-trips are bit-exact") {
  Rng rng(91);
  for (int seed = 0; seed < 10; ++seed) {
    Rng r = rng.fork(seed);
    Tensor<float> x = Tensor<float>::randn({6, 5}, r);

    Tensor<float> rt = reshape<float>(
        nullptr, reshape<float>(nullptr, x, {5, 6}), {6, 5});
    CHECK(rt.values() == x.values());

    Tensor<float> top = slice_rows<float>(nullptr, x, 0, 2);
    Tensor<float> mid = slice_rows<float>(nullptr, x, 2, 3);
    Tensor<float> bot = slice_rows<float>(nullptr, x, 5, 1);
    Tensor<float> cat = concat_rows<float>(nullptr, {top, mid, bot});
    CHECK(cat.values() == x.values());

    Tensor<float> left = slice_cols<float>(nullptr, x, 0, 2);
    Tensor<float> right = slice_cols<float>(nullptr, x, 2, 3);
    Tensor<float> ccat = concat_cols<float>(nullptr, {left, right});
    CHECK(ccat.values() == x.values());

    std::vector<std::size_t> idx = {3, 0, 5, 3};
    Tensor<float> gath = gather_rows<float>(nullptr, x, idx);
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = 0; j < 5; ++j)
        CHECK(gath.data()[i * 5 + j] == x.data()[idx[i] * 5 + j]);
  }
}

TEST_CASE("shape-op gradients vs finite differences") {
  Rng rng(101);
  for (int seed = 0; seed < 10; ++seed) {
    Rng r = rng.fork(seed);
    Tensor<double> x = Tensor<double>::randn({4, 6}, r);
    auto f2 = [&](Tape<double>* t, const Tensor<double>& p) {
      Tensor<double> a = slice_rows(t, p, 1, 2);
      Tensor<double> b = slice_cols(t, p, 2, 3);
      Tensor<double> c = gather_rows(t, p, {0, 0, 3});
      Tensor<double> lhs = concat_rows(t, {a, c});
      Tensor<double> r1 = sum(t, mul(t, lhs, lhs));
      Tensor<double> r2 = sum(t, silu(t, reshape(t, b, {3, 4})));
      return add(t, r1, r2);
    };
    double err = check_grad(x, [&](Tape<double>* t, const Tensor<double>& p) {
      return f2(t, p);
    });
    CHECK(err < 1e-5);
  }
}

TEST_CASE("backward basics") {
  Rng rng(3);
  Tensor<double> x = Tensor<double>::randn({3, 2}, rng);
  x.set_requires_grad(true);

  SUBCASE("sum gives all-ones gradient") {
    Tape<double> tape;
    tape.backward(sum(&tape, x));
    for (double g : x.grad()) CHECK(g == 1.0);
  }

  SUBCASE("half squared norm gives x back") {
    Tape<double> tape;
    Tensor<double> loss = scale(&tape, sum(&tape, mul(&tape, x, x)), 0.5);
    tape.backward(loss);
    for (std::size_t i = 0; i < x.size(); ++i)
      CHECK(x.grad()[i] == doctest::Approx(x.data()[i]).epsilon(1e-12));
  }

  SUBCASE("repeated backward accumulates additively") {
    Tape<double> tape;
    Tensor<double> loss = sum(&tape, x);
    tape.backward(loss);
    tape.backward(loss);
    for (double g : x.grad()) CHECK(g == 2.0);
  }

  SUBCASE("non-scalar loss is rejected") {
    Tape<double> tape;
    Tensor<double> y = silu(&tape, x);
    CHECK_THROWS_AS(tape.backward(y), ContractError);
  }

  SUBCASE("loss from another tape is rejected") {
    Tape<double> tape, other;
    Tensor<double> loss = sum(&other, x);
    CHECK_THROWS_AS(tape.backward(loss), ContractError);
  }
}

TEST_CASE("composed graph gradient vs finite differences") {
  Rng rng(77);
  for (int seed = 0; seed < 10; ++seed) {
    Rng r = rng.fork(seed);
    Tensor<double> w = Tensor<double>::randn({4, 3}, r);
    Tensor<double> x = Tensor<double>::randn({2, 4}, r);
    auto f = [&](Tape<double>* t, const Tensor<double>& p) {
      return mean(t, silu(t, matmul(t, x, p)));
    };
    CHECK(check_grad(w, f) < 1e-5);
  }
}
