#include "fr/warp.hpp"

namespace fr {

Var compose_fields(const Var& phi_fine, const Var& phi_coarse) {
    const Tensor& f = phi_fine->value;
    const Tensor& c = phi_coarse->value;
    if (c.h() * 2 != f.h() || c.w() * 2 != f.w())
        throw std::invalid_argument("compose_fields: coarse field must be half resolution");
    Var up = upsample2(phi_coarse);
    return mul(phi_fine, add_scalar(scale(up, 2.0), 1.0));
}

Var compose_fields_additive(const Var& phi_fine, const Var& phi_coarse) {
    const Tensor& f = phi_fine->value;
    const Tensor& c = phi_coarse->value;
    if (c.h() * 2 != f.h() || c.w() * 2 != f.w())
        throw std::invalid_argument("compose_fields: coarse field must be half resolution");
    return add(phi_fine, scale(upsample2(phi_coarse), 2.0));
}

Var bidirectional_blend(const Var& x, const Var& phi, const Var& m) {
    const Tensor& mm = m->value;
    if (mm.c() != 1)
        throw std::invalid_argument("bidirectional_blend: mask must have one channel");
    for (size_t i = 0; i < mm.size(); ++i)
        if (mm[i] < 0.0 || mm[i] > 1.0)
            throw std::invalid_argument("bidirectional_blend: mask outside [0,1]");
    Var fwd = backward_warp(x, phi);
    Var rev = backward_warp(x, neg(phi));
    Var one_minus = add_scalar(neg(m), 1.0);
    return add(mul(m, fwd), mul(one_minus, rev));
}

Tensor warp_tensor(const Tensor& x, const Tensor& phi) {
    return backward_warp(make_const(x), make_const(phi))->value;
}

}  // namespace fr
