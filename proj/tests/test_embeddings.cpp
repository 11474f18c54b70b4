#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN

#include "nova/embeddings.hpp"

#include <cmath>

#include "doctest.h"
#include "test_support.hpp"

using namespace nova;

TEST_CASE("sincos_1d basics") {
  Tensor<double> z = sincos_1d<double>(0, 8);
  for (std::size_t i = 0; i < 4; ++i) CHECK(z.data()[i] == 0.0);
  for (std::size_t i = 4; i < 8; ++i) CHECK(z.data()[i] == 1.0);

  Tensor<double> a = sincos_1d<double>(17, 12);
  Tensor<double> b = sincos_1d<double>(17, 12);
  CHECK(a.values() == b.values());

  Tensor<double> p1 = sincos_1d<double>(1, 2);
  CHECK(p1.data()[0] == doctest::Approx(0.84147).epsilon(1e-4));
  CHECK(p1.data()[1] == doctest::Approx(0.54030).epsilon(1e-4));

  CHECK_THROWS_AS(sincos_1d<double>(1, 7), ContractError);
}

TEST_CASE("sincos_2d layout and per-axis agreement") {
  Tensor<double> one = sincos_2d<double>(1, 1, 8);
  Tensor<double> half = sincos_1d<double>(0, 4);
  for (std::size_t j = 0; j < 4; ++j) {
    CHECK(one.data()[j] == half.data()[j]);
    CHECK(one.data()[4 + j] == half.data()[j]);
  }

  Tensor<double> grid = sincos_2d<double>(3, 5, 16);
  CHECK(grid.shape() == Shape{15, 16});

  // Entry at grid (row=1, col=2) equals independent per-axis evaluation.
  Tensor<double> row_emb = sincos_1d<double>(1, 8);
  Tensor<double> col_emb = sincos_1d<double>(2, 8);
  const double* cell = grid.data() + (1 * 5 + 2) * 16;
  for (std::size_t j = 0; j < 8; ++j) {
    CHECK(cell[j] == row_emb.data()[j]);
    CHECK(cell[8 + j] == col_emb.data()[j]);
  }

  CHECK_THROWS_AS(sincos_2d<double>(2, 2, 6), ContractError);
}

TEST_CASE("sincos_2d transpose swaps the two halves") {
  std::size_t h = 3, w = 4, d = 8;
  Tensor<double> g = sincos_2d<double>(h, w, d);
  Tensor<double> gt = sincos_2d<double>(w, h, d);
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) {
      const double* a = g.data() + (r * w + c) * d;
      const double* b = gt.data() + (c * h + r) * d;
      for (std::size_t j = 0; j < d / 2; ++j) {
        CHECK(a[j] == b[d / 2 + j]);
        CHECK(a[d / 2 + j] == b[j]);
      }
    }
}

TEST_CASE("motion_bucket quantization") {
  CHECK(motion_bucket(0.0, 8, 1.0) == 0);
  CHECK(motion_bucket(8.0, 8, 1.0) == 7);
  CHECK(motion_bucket(123.0, 8, 1.0) == 7);
  CHECK(motion_bucket(2.5, 8, 1.0) == 2);
  CHECK_THROWS_AS(motion_bucket(-0.1, 8, 1.0), ContractError);
}

TEST_CASE("patchify_frame geometry") {
  // 16x16 grid with stride 4 -> 16 tokens.
  Tensor<float> frame = Tensor<float>::zeros({16, 16, 1});
  Tensor<float> toks = patchify_frame(frame, 4);
  CHECK(toks.shape() == Shape{16, 16});

  // Stride-1 patchify is the identity on channels.
  Rng rng(3);
  Tensor<float> f2 = Tensor<float>::randn({2, 3, 5}, rng);
  Tensor<float> t2 = patchify_frame(f2, 1);
  CHECK(t2.shape() == Shape{6, 5});
  CHECK(t2.values() == f2.values());

  Tensor<float> back = unpatchify_frame(t2, 2, 3, 1, 5);
  CHECK(back.values() == f2.values());

  Tensor<float> f3 = Tensor<float>::randn({4, 6, 2}, rng);
  Tensor<float> t3 = patchify_frame(f3, 2);
  Tensor<float> b3 = unpatchify_frame(t3, 2, 3, 2, 2);
  CHECK(b3.values() == f3.values());

  CHECK_THROWS_AS(patchify_frame(f3, 5), ShapeError);
}

TEST_CASE("patch embedding projects tokens") {
  Rng rng(9);
  // Zero latent maps every token to the projection bias.
  PatchEmbed<float> pe = PatchEmbed<float>::init(3, 1, 6, rng);
  for (std::size_t j = 0; j < 6; ++j) pe.bias.data()[j] = 0.25f * (j + 1);
  Tensor<float> latent = Tensor<float>::zeros({2, 2, 2, 3});
  std::vector<Tensor<float>> frames = pe.forward_clip(nullptr, latent);
  REQUIRE(frames.size() == 2);
  for (const auto& fr : frames) {
    CHECK(fr.shape() == Shape{4, 6});
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 6; ++j)
        CHECK(fr.data()[i * 6 + j] == pe.bias.data()[j]);
  }

  // Identity projection with stride 1 reproduces latent channels.
  PatchEmbed<float> id = PatchEmbed<float>::init(3, 1, 3, rng);
  std::fill(id.weight.values().begin(), id.weight.values().end(), 0.0f);
  for (std::size_t j = 0; j < 3; ++j) id.weight.data()[j * 3 + j] = 1.0f;
  std::fill(id.bias.values().begin(), id.bias.values().end(), 0.0f);
  Tensor<float> lat = Tensor<float>::randn({1, 2, 2, 3}, rng);
  Tensor<float> toks = id.forward_clip(nullptr, lat)[0];
  CHECK(toks.values() == lat.values());
}

TEST_CASE("patch embedding gradient flows to projection") {
  Rng rng(21);
  PatchEmbed<double> pe = PatchEmbed<double>::init(2, 1, 4, rng);
  Tensor<double> tokens = Tensor<double>::randn({5, 2}, rng);

  Tape<double> tape;
  Tensor<double> out = pe.forward_tokens(&tape, tokens);
  tape.backward(mean(&tape, out));

  auto probe = [&](const Tensor<double>& w) {
    Tape<double> t;
    PatchEmbed<double> alt = pe;
    alt.weight = w.clone();
    return mean(&t, alt.forward_tokens(&t, tokens)).item();
  };
  std::vector<double> numeric =
      nova::test::finite_diff_grad<double>(probe, pe.weight, 1e-5);
  CHECK(nova::test::max_rel_err(pe.weight.grad(), numeric) < 1e-6);
}
