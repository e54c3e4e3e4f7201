#pragma once
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "disp/errors.hpp"

namespace disp {

// One node of a cost graph. Known kinds:
//   fc        dims: n_in, n_out                     -> 2*n_in*n_out
//   conv2d    dims: f, c, k, h_out, w_out           -> 2*f*c*k*k*h_out*w_out
//   eltwise   dims: n                               -> n
//   isp_ag    dims: h, w, c                         -> 4 per pixel
//   isp_dn    dims: h, w, c, k                      -> 12*k*k per pixel
//   isp_sn    dims: h, w, c, k                      -> 2*k*k+3 per pixel
//   isp_gm    dims: h, w, c                         -> 12 per pixel
//   isp_cs    dims: h, w, c                         -> 2 per pixel
struct FlopOp {
  std::string kind;
  std::map<std::string, int64_t> dims;
};

using FlopGraph = std::vector<FlopOp>;

int64_t flop_count(const FlopGraph& graph);

}  // namespace disp
