#pragma once

#include <algorithm>
#include <cstdint>

namespace milora {

// Exact work accounting for one generation request.  Every field is monotone
// non-decreasing while the request runs.
struct OpCounters {
  uint64_t router_evals = 0;   // router forward passes (per layer, per evaluation)
  uint64_t adapter_macs = 0;   // low-rank multiply-accumulates: rows*rank*(d_in+d_out)
  int64_t activated_params = 0;  // engaged adapter + router parameters (max over decisions)
  uint64_t decode_steps = 0;   // single-position forward passes after prefill

  void note_activated(int64_t n) { activated_params = std::max(activated_params, n); }
  void reset() { *this = OpCounters{}; }
};

}  // namespace milora
