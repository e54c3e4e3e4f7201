#include "disp/flops.hpp"

namespace disp {

namespace {

int64_t dim(const FlopOp& op, const std::string& key) {
  auto it = op.dims.find(key);
  if (it == op.dims.end())
    throw ConfigError("flop_count: op '" + op.kind + "' missing dim '" + key + "'");
  return it->second;
}

int64_t pixels(const FlopOp& op) { return dim(op, "h") * dim(op, "w") * dim(op, "c"); }

}  // namespace

int64_t flop_count(const FlopGraph& graph) {
  int64_t total = 0;
  for (const FlopOp& op : graph) {
    if (op.kind == "fc") {
      total += 2 * dim(op, "n_in") * dim(op, "n_out");
    } else if (op.kind == "conv2d") {
      const int64_t k = dim(op, "k");
      total += 2 * dim(op, "f") * dim(op, "c") * k * k * dim(op, "h_out") * dim(op, "w_out");
    } else if (op.kind == "eltwise") {
      total += dim(op, "n");
    } else if (op.kind == "isp_ag") {
      total += 4 * pixels(op);
    } else if (op.kind == "isp_dn") {
      const int64_t k = dim(op, "k");
      total += 12 * k * k * pixels(op);
    } else if (op.kind == "isp_sn") {
      const int64_t k = dim(op, "k");
      total += (2 * k * k + 3) * pixels(op);
    } else if (op.kind == "isp_gm") {
      total += 12 * pixels(op);
    } else if (op.kind == "isp_cs") {
      total += 2 * pixels(op);
    } else {
      throw ConfigError("flop_count: unknown op kind '" + op.kind + "'");
    }
  }
  return total;
}

}  // namespace disp
