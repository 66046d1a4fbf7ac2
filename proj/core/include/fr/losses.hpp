#pragma once

#include "fr/network.hpp"
#include "fr/ops.hpp"

namespace fr {

// Band-pass edge extractor: x - G(Up(Down(G(x)))), 5-tap Gaussian
// [0.05 0.25 0.4 0.25 0.05], reflect boundaries, Down = even-index
// decimation of the blurred input, Up = bilinear x2.
Var dog_extract(const Var& x);

// Sobel gradient magnitude sqrt(gx^2 + gy^2 + 1e-8), reflect boundaries.
Var sobel_magnitude(const Var& x);

// All per-scale lists are finest-first and must share scale counts.
Var edge_loss(const std::vector<Var>& i_out, const std::vector<Var>& i_warp,
              const std::vector<Var>& i_gt);
Var global_loss(const std::vector<Var>& i_out, const std::vector<Var>& i_gt);
Var frequency_loss(const std::vector<Var>& i_out, const std::vector<Var>& i_gt);
// Masks are gradient-detached inside; they weight the Sobel difference.
Var detail_loss(const std::vector<Var>& i_out, const std::vector<Var>& i_gt,
                const std::vector<Var>& masks);

struct LossParts {
    Var total;
    double edge, global, freq, detail;
};

// lambda1*L_e + lambda2*L_g + lambda3*L_f + lambda4*L_d; throws if any
// component is non-finite (names the component).
LossParts total_loss(const std::vector<ScaleOutput>& outputs, const std::vector<Var>& i_gt,
                     const LossWeights& w);

}  // namespace fr
