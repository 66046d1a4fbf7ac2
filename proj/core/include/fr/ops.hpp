#pragma once

#include "fr/graph.hpp"

namespace fr {

enum class PadMode { Zero, Reflect };

// ---- elementwise ----
// add/sub/mul broadcast along any dimension that is 1 in one argument.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var neg(const Var& a);
Var relu(const Var& a);
Var sigmoid(const Var& a);
Var detach(const Var& a);

// ---- structure ----
Var concat_channels(const std::vector<Var>& xs);
Var crop2d(const Var& x, int top, int left, int h, int w);
Var pad_reflect(const Var& x, int top, int bottom, int left, int right);

// ---- convolution ----
// w: (Co, Ci, kh, kw) stored as Tensor with shape (Co, Ci, kh, kw);
// bias: (1, Co, 1, 1) or null. `pad` pixels on each side.
Var conv2d(const Var& x, const Var& w, const Var& bias, int stride, int pad,
           PadMode mode = PadMode::Zero);

// ---- resampling ----
Var avgpool2(const Var& x);             // 2x2 mean, stride 2 (bilinear half-scale)
Var upsample2(const Var& x);            // bilinear x2, align_corners=false
Var decimate2(const Var& x);            // keep even rows/cols
// out(b,c,y,x) = bilinear sample of x at (x+phi_u, y+phi_v), zero outside.
// Differentiable in both arguments. phi: (B,2,H,W), channel 0 horizontal.
Var backward_warp(const Var& x, const Var& phi);

// ---- cost volume ----
// Channel k = m*(2p+1)+n holds CA(shift(src; m,n) * warp) for the shift that
// places src at offset (m-p, n-p); m horizontal, n vertical, zero padding.
Var correlation(const Var& f_warp, const Var& f_src, int p);

// ---- pooling / attention helpers ----
Var global_avg_pool(const Var& x);      // (B,C,H,W) -> (B,C,1,1)
Var channel_max_mean(const Var& x);     // (B,C,H,W) -> (B,2,H,W): [max, mean]

// ---- gMLP ----
// x: (B,C,H,W) with H,W divisible by s. Per s-by-s patch, token matrix
// X (s^2 x C): out = (X W1) * relu(G (X W2) + gbias).
// w1,w2: (1,1,C,C); gate: (1,1,s^2,s^2); gbias: (1,1,s^2,1).
Var gmlp(const Var& x, const Var& w1, const Var& w2, const Var& gate,
         const Var& gbias, int s);

// softmax(logits) over xs; logits: (1,S,1,1), xs.size()==S.
Var softmax_weighted_sum(const std::vector<Var>& xs, const Var& logits);

// ---- reductions ----
Var sum_all(const Var& a);
Var mean_all(const Var& a);
Var mean_abs(const Var& a);
Var rms(const Var& a);                   // sqrt(mean(a^2) + 1e-24)
// mean over all 2-D DFT coefficients of |Re| + |Im| of each (b,c) slice.
Var spectral_abs_mean(const Var& a);

}  // namespace fr
