#pragma once
#include <functional>
#include <vector>

#include "disp/tensor.hpp"

namespace disp {

using DiffOp = std::function<GradRecord(const std::vector<Tensor>&)>;

struct FdOptions {
  double eps = 1e-4;
  int directions = 8;
  uint64_t seed = 0;
};

// Central-difference directional-derivative check of an op's backward pass.
// Draws random upstream vectors u and input directions d and compares
// d<u, f(x)>/d(eps) against <backward(u), d>. Returns the max relative error
// over all sampled directions. Never mutates the inputs.
double finite_diff_check(const DiffOp& op, const std::vector<Tensor>& inputs,
                         const FdOptions& opts = {});

struct GradcheckEntry {
  std::string op;
  double max_rel_err = 0.0;
  double tolerance = 1e-4;
  bool pass() const { return max_rel_err < tolerance; }
};

struct GradcheckReport {
  std::vector<GradcheckEntry> entries;
  bool pass() const {
    for (const auto& e : entries)
      if (!e.pass()) return false;
    return true;
  }
};

// Random in-bounds instances of every differentiable op: neural primitives,
// the five ISP functions, the controller blocks and the surrogate network.
// `op_filter` empty means all ops.
GradcheckReport run_gradcheck_suite(uint64_t seed, int instances_per_op,
                                    const std::string& op_filter = "");

}  // namespace disp
