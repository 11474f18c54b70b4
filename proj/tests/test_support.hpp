#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "nova/rng.hpp"
#include "nova/tensor.hpp"

namespace nova::test {

// Central finite differences of a scalar function with respect to every
// entry of `x`, evaluated by reconstructing the forward pass from scratch.
// This is the independent oracle used by all gradient checks.
template <typename T>
std::vector<T> finite_diff_grad(const std::function<T(const Tensor<T>&)>& f,
                                const Tensor<T>& x, T h) {
  std::vector<T> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    Tensor<T> xp = x.clone();
    Tensor<T> xm = x.clone();
    xp.data()[i] += h;
    xm.data()[i] -= h;
    g[i] = (f(xp) - f(xm)) / (2 * h);
  }
  return g;
}

// Max mixed absolute/relative deviation: |a - n| / max(1, |n|).
template <typename T>
T max_rel_err(const std::vector<T>& analytic, const std::vector<T>& numeric) {
  T worst = T(0);
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    T denom = std::max(T(1), std::abs(numeric[i]));
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
  }
  return worst;
}

template <typename T>
Tensor<T> random_tensor(Shape shape, Rng& rng, T stddev = T(1),
                        bool requires_grad = false) {
  return Tensor<T>::randn(std::move(shape), rng, stddev, requires_grad);
}

// Scratch directory for file-based tests; wiped on construction.
class TempDir {
 public:
  explicit TempDir(const std::string& name) {
    path_ = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  const std::filesystem::path& path() const { return path_; }
  std::string str() const { return path_.string(); }

 private:
  std::filesystem::path path_;
};

}  // namespace nova::test

#include <unistd.h>

namespace nova::test {

// Redirects fd 1 into a file for the lifetime of the object (covers both
// std::cout and printf-style output).
class StdoutCapture {
 public:
  explicit StdoutCapture(const std::string& path) {
    std::fflush(stdout);
    saved_ = dup(1);
    FILE* f = std::fopen(path.c_str(), "w");
    dup2(fileno(f), 1);
    std::fclose(f);
  }
  ~StdoutCapture() {
    std::fflush(stdout);
    dup2(saved_, 1);
    close(saved_);
  }

 private:
  int saved_ = -1;
};

}  // namespace nova::test
