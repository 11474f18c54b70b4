#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN

#include "nova/codec.hpp"

#include "doctest.h"
#include "test_support.hpp"

using namespace nova;

TEST_CASE("unit strides are the identity") {
  Rng rng(2);
  Tensor<float> v = Tensor<float>::randn({2, 3, 3, 2}, rng);
  Tensor<float> lat = codec_encode(v, 1, 1);
  CHECK(lat.shape() == v.shape());
  CHECK(lat.values() == v.values());
}

TEST_CASE("latent shape arithmetic") {
  Tensor<float> v = Tensor<float>::zeros({4, 8, 8, 1});
  Tensor<float> lat = codec_encode(v, 4, 8);
  CHECK(lat.shape() == Shape{1, 1, 1, 256});
}

TEST_CASE("encode/decode is a bit-exact bijection") {
  Rng rng(11);
  for (int seed = 0; seed < 5; ++seed) {
    Rng r = rng.fork(seed);
    Tensor<float> v = Tensor<float>::randn({4, 8, 12, 3}, r);
    Tensor<float> lat = codec_encode(v, 2, 4);
    CHECK(lat.shape() == Shape{2, 2, 3, 96});
    Tensor<float> back = codec_decode(lat, 2, 4, 3);
    CHECK(back.values() == v.values());

    // Decode-then-encode on the latent side.
    Tensor<float> lat2 = codec_encode(back, 2, 4);
    CHECK(lat2.values() == lat.values());
  }
}

TEST_CASE("zero latent decodes to zero video") {
  Tensor<float> lat = Tensor<float>::zeros({1, 2, 2, 32});
  Tensor<float> v = codec_decode(lat, 2, 4, 1);
  CHECK(v.shape() == Shape{2, 8, 8, 1});
  for (float x : v.values()) CHECK(x == 0.0f);
}

TEST_CASE("shape guards") {
  Tensor<float> v = Tensor<float>::zeros({3, 8, 8, 1});
  CHECK_THROWS_AS(codec_encode(v, 2, 4), ShapeError);
  Tensor<float> lat = Tensor<float>::zeros({1, 2, 2, 31});
  CHECK_THROWS_AS(codec_decode(lat, 2, 4, 1), ShapeError);
}
