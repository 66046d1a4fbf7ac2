#pragma once

#include "fr/network.hpp"
#include "fr/train.hpp"

namespace fr {

struct RegisterResult {
    Tensor out;    // refined fused image, original resolution
    Tensor mask;   // M^0, 1x1xHxW
    Tensor field;  // phi^0, 1x2xHxW
};

// Pads inputs to the pyramid multiple, runs the network, un-pads outputs.
RegisterResult run_register(const Tensor& vi, const Tensor& ir, const Tensor& fused,
                            ParamStore& params, const RunConfig& cfg);

}  // namespace fr
