#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "tpt/error.hpp"
#include "tpt/tensor.hpp"

namespace tpt::detail {

/// Flat-index maps from a broadcast output back into each operand.
struct BroadcastPlan {
  Shape out;
  bool same = false;
  std::vector<std::size_t> ia, ib;

  std::size_t a(std::size_t i) const { return same ? i : ia[i]; }
  std::size_t b(std::size_t i) const { return same ? i : ib[i]; }

  static BroadcastPlan make(const Shape& sa, const Shape& sb, const char* op) {
    BroadcastPlan p;
    if (sa == sb) {
      p.out = sa;
      p.same = true;
      return p;
    }
    const std::size_t r = std::max(sa.size(), sb.size());
    Shape pa(r - sa.size(), 1), pb(r - sb.size(), 1);
    pa.insert(pa.end(), sa.begin(), sa.end());
    pb.insert(pb.end(), sb.begin(), sb.end());
    p.out.resize(r);
    for (std::size_t i = 0; i < r; ++i) {
      if (pa[i] != pb[i] && pa[i] != 1 && pb[i] != 1) {
        throw ShapeError(std::string(op) + ": cannot broadcast " + shape_str(sa) + " with " +
                         shape_str(sb));
      }
      p.out[i] = pa[i] == 1 ? pb[i] : pa[i];
    }
    const auto strides = [&](const Shape& s) {
      std::vector<std::size_t> st(r, 0);
      std::size_t acc = 1;
      for (std::size_t i = r; i-- > 0;) {
        st[i] = (s[i] == 1 && p.out[i] != 1) ? 0 : acc;
        acc *= s[i];
      }
      return st;
    };
    const auto sta = strides(pa);
    const auto stb = strides(pb);
    const std::size_t n = numel(p.out);
    p.ia.resize(n);
    p.ib.resize(n);
    std::vector<std::size_t> idx(r, 0);
    std::size_t oa = 0, ob = 0;
    for (std::size_t i = 0; i < n; ++i) {
      p.ia[i] = oa;
      p.ib[i] = ob;
      for (std::size_t d = r; d-- > 0;) {
        ++idx[d];
        oa += sta[d];
        ob += stb[d];
        if (idx[d] < p.out[d]) break;
        oa -= sta[d] * idx[d];
        ob -= stb[d] * idx[d];
        idx[d] = 0;
      }
    }
    return p;
  }
};

}  // namespace tpt::detail
