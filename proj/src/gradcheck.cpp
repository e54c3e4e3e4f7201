#include "disp/gradcheck.hpp"

#include <cmath>

namespace disp {

double finite_diff_check(const DiffOp& op, const std::vector<Tensor>& inputs,
                         const FdOptions& opts) {
  std::mt19937_64 rng(opts.seed ^ 0x9e3779b97f4a7c15ULL);
  GradRecord base = op(inputs);

  double max_rel = 0.0;
  for (int dir = 0; dir < opts.directions; ++dir) {
    Tensor u = randn(base.output.shape, rng);
    std::vector<Tensor> grads = base.backward(u);
    if (grads.size() != inputs.size())
      throw ShapeError("finite_diff_check: backward returned " + std::to_string(grads.size()) +
                       " gradients for " + std::to_string(inputs.size()) + " inputs");

    std::vector<Tensor> d;
    d.reserve(inputs.size());
    for (const Tensor& in : inputs) d.push_back(randn(in.shape, rng));

    auto shifted = [&](double h) {
      std::vector<Tensor> xs = inputs;
      for (size_t i = 0; i < xs.size(); ++i) axpy(h, d[i], xs[i]);
      return dot(u, op(xs).output);
    };
    const double fd = (shifted(opts.eps) - shifted(-opts.eps)) / (2.0 * opts.eps);

    double an = 0.0;
    for (size_t i = 0; i < grads.size(); ++i) an += dot(grads[i], d[i]);

    const double denom = std::max({std::fabs(fd), std::fabs(an), 1e-8});
    max_rel = std::max(max_rel, std::fabs(fd - an) / denom);
  }
  return max_rel;
}

}  // namespace disp
