#pragma once

#include <map>
#include <string>
#include <vector>

#include "fr/config.hpp"
#include "fr/ops.hpp"
#include "fr/simulate.hpp"

namespace fr {

// Named learnable tensors. Values live in the leaf Vars; the graph built by
// each forward call references them, so Adam updates them in place.
struct ParamStore {
    std::map<std::string, Var> params;

    Var& at(const std::string& name);
    const Var& at(const std::string& name) const;
    void add(const std::string& name, Tensor init);
    size_t count() const { return params.size(); }
};

ParamStore init_network_params(const RunConfig& cfg, Rng& rng);

struct ScaleOutput {
    Var mask;     // M^i, Bx1xhxw in [0,1]
    Var field;    // phi^i, Bx2xhxw (refined)
    Var i_warp;   // bi-directionally warped fused image
    Var f_warp;   // warped fused feature
    Var i_bias;   // residual
    Var i_out;    // i_warp + i_bias
};

// Per-scale inputs I^0..I^{N-1} by repeated half-scale reduction.
std::vector<Var> image_pyramid(const Var& img, int depth);

// stream in {"f","vi","ir"}; one parameter set per stream.
std::vector<Var> extract_pyramid(const std::vector<Var>& images, const std::string& stream,
                                 ParamStore& ps, const RunConfig& cfg);

// Misregistration localization over the three pyramids; fields refined
// coarse-to-fine. Returns (mask, field) per scale, finest first.
std::vector<std::pair<Var, Var>> localize(const std::vector<Var>& feat_f,
                                          const std::vector<Var>& feat_vi,
                                          const std::vector<Var>& feat_ir, ParamStore& ps,
                                          const RunConfig& cfg);

// Modality Retainment Block at scale `level`.
struct MrbOut {
    Var f_ff;
    Var i_bias;
    Var i_out;
};
MrbOut mrb_forward(const Var& f_warp, const Var& f_vi, const Var& f_ir, const Var& i_warp,
                   int level, ParamStore& ps, const RunConfig& cfg);

std::vector<ScaleOutput> forward(const Var& i_vi, const Var& i_ir, const Var& i_f,
                                 ParamStore& ps, const RunConfig& cfg);

}  // namespace fr
