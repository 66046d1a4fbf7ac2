#include "fr/pipeline.hpp"

#include "fr/image.hpp"

namespace fr {

RegisterResult run_register(const Tensor& vi, const Tensor& ir, const Tensor& fused,
                            ParamStore& params, const RunConfig& cfg) {
    if (vi.h() != ir.h() || vi.w() != ir.w() || vi.h() != fused.h() || vi.w() != fused.w())
        throw std::invalid_argument("run_register: input size mismatch");
    // half-scale reductions need even dims at every level above the last
    int mult = std::max(1 << (cfg.pyramid_depth - 1), 2);
    PadInfo pad;
    Tensor pvi = pad_to_multiple(vi, mult, pad);
    PadInfo tmp;
    Tensor pir = pad_to_multiple(ir, mult, tmp);
    Tensor pf = pad_to_multiple(fused, mult, tmp);

    auto outputs = forward(make_const(pvi), make_const(pir), make_const(pf), params, cfg);
    RegisterResult r;
    r.out = unpad(outputs[0].i_out->value, pad);
    r.mask = unpad(outputs[0].mask->value, pad);
    r.field = unpad(outputs[0].field->value, pad);
    return r;
}

}  // namespace fr
