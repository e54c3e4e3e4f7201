#pragma once
#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "disp/errors.hpp"

namespace disp {

// Dense row-major tensor of doubles. Images are stored as {C,H,W}.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)), data(numel_of(shape), 0.0) {}
  Tensor(std::vector<int> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    if (static_cast<size_t>(numel_of(shape)) != data.size())
      throw ShapeError("tensor data length does not match shape");
  }

  static int64_t numel_of(const std::vector<int>& s) {
    int64_t n = 1;
    for (int e : s) {
      if (e < 0) throw ShapeError("negative extent");
      n *= e;
    }
    return n;
  }
  static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
  static Tensor full(std::vector<int> s, double v) {
    Tensor t(std::move(s));
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
  }
  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  int extent(int i) const { return shape[static_cast<size_t>(i)]; }

  double& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

  // {C,H,W} accessors
  double& at3(int c, int y, int x) {
    return data[(static_cast<size_t>(c) * shape[1] + y) * shape[2] + x];
  }
  double at3(int c, int y, int x) const {
    return data[(static_cast<size_t>(c) * shape[1] + y) * shape[2] + x];
  }
  // {R,C} accessors
  double& at2(int r, int c) { return data[static_cast<size_t>(r) * shape[1] + c]; }
  double at2(int r, int c) const { return data[static_cast<size_t>(r) * shape[1] + c]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
  bool all_finite() const;
  std::string shape_str() const;
};

Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(double s, const Tensor& a);
void axpy(double a, const Tensor& x, Tensor& y);  // y += a*x
double dot(const Tensor& a, const Tensor& b);
double max_abs_diff(const Tensor& a, const Tensor& b);

// Forward output paired with the reverse pass. `backward` maps the upstream
// gradient (same shape as `output`) to gradients for each input/parameter
// tensor of the op, in the order they appear in the op signature.
struct GradRecord {
  Tensor output;
  std::function<std::vector<Tensor>(const Tensor& upstream)> backward;
};

// Named gradient accumulator used by module-level forward traces.
using GradMap = std::map<std::string, Tensor>;
void accumulate(GradMap& gm, const std::string& name, const Tensor& g);

// Seeded helpers
Tensor randn(std::vector<int> shape, std::mt19937_64& rng, double stddev = 1.0);
Tensor rand_uniform(std::vector<int> shape, std::mt19937_64& rng, double lo, double hi);

}  // namespace disp
