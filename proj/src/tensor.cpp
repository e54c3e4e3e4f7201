#include "disp/tensor.hpp"

#include <cmath>
#include <sstream>

namespace disp {

bool Tensor::all_finite() const {
  for (double v : data)
    if (!std::isfinite(v)) return false;
  return true;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << "]";
  return os.str();
}

static void check_same(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
}

Tensor operator+(const Tensor& a, const Tensor& b) {
  check_same(a, b, "add");
  Tensor r = a;
  for (size_t i = 0; i < r.data.size(); ++i) r.data[i] += b.data[i];
  return r;
}

Tensor operator-(const Tensor& a, const Tensor& b) {
  check_same(a, b, "sub");
  Tensor r = a;
  for (size_t i = 0; i < r.data.size(); ++i) r.data[i] -= b.data[i];
  return r;
}

Tensor operator*(double s, const Tensor& a) {
  Tensor r = a;
  for (double& v : r.data) v *= s;
  return r;
}

void axpy(double a, const Tensor& x, Tensor& y) {
  check_same(x, y, "axpy");
  for (size_t i = 0; i < y.data.size(); ++i) y.data[i] += a * x.data[i];
}

double dot(const Tensor& a, const Tensor& b) {
  check_same(a, b, "dot");
  double s = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) s += a.data[i] * b.data[i];
  return s;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  check_same(a, b, "max_abs_diff");
  double m = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::fabs(a.data[i] - b.data[i]));
  return m;
}

void accumulate(GradMap& gm, const std::string& name, const Tensor& g) {
  auto it = gm.find(name);
  if (it == gm.end()) {
    gm.emplace(name, g);
  } else {
    axpy(1.0, g, it->second);
  }
}

Tensor randn(std::vector<int> shape, std::mt19937_64& rng, double stddev) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> nd(0.0, stddev);
  for (double& v : t.data) v = nd(rng);
  return t;
}

Tensor rand_uniform(std::vector<int> shape, std::mt19937_64& rng, double lo, double hi) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> ud(lo, hi);
  for (double& v : t.data) v = ud(rng);
  return t;
}

}  // namespace disp
