#pragma once

#include "fr/ops.hpp"

namespace fr {

// Coarse-to-fine field refinement: phi_fine * (1 + 2 * Up(phi_coarse)).
// phi_coarse must be exactly half the spatial size of phi_fine.
Var compose_fields(const Var& phi_fine, const Var& phi_coarse);

// Additive variant used by the `additive_refine` ablation:
// phi_fine + 2 * Up(phi_coarse).
Var compose_fields_additive(const Var& phi_fine, const Var& phi_coarse);

// m * BW(x, phi) + (1 - m) * BW(x, -phi); m is Bx1xhxw in [0,1].
Var bidirectional_blend(const Var& x, const Var& phi, const Var& m);

// Non-autodiff convenience for evaluation paths.
Tensor warp_tensor(const Tensor& x, const Tensor& phi);

}  // namespace fr
