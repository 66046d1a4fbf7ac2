#include "fr/losses.hpp"

#include <cmath>

namespace fr {

namespace {

const double kGauss1d[5] = {0.05, 0.25, 0.4, 0.25, 0.05};

Var fixed_kernel_conv(const Var& x, const std::vector<std::vector<double>>& k) {
    // per-channel convolution expressed as a block-diagonal kernel
    const int C = x->value.c();
    const int kh = static_cast<int>(k.size());
    const int kw = static_cast<int>(k[0].size());
    Tensor w(C, C, kh, kw);
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < kh; ++y)
            for (int xx = 0; xx < kw; ++xx) w.at(c, c, y, xx) = k[y][xx];
    return conv2d(x, make_const(std::move(w)), nullptr, 1, kh / 2, PadMode::Reflect);
}

Var gaussian5(const Var& x) {
    std::vector<std::vector<double>> k(5, std::vector<double>(5));
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j) k[i][j] = kGauss1d[i] * kGauss1d[j];
    return fixed_kernel_conv(x, k);
}

Var sqrt_eps(const Var& a, double eps) {
    auto n = std::make_shared<Node>();
    n->value = a->value;
    for (size_t i = 0; i < n->value.size(); ++i) n->value[i] = std::sqrt(n->value[i] + eps);
    n->parents = {a};
    n->requires_grad = a->requires_grad;
    n->backprop = [](Node& self) {
        Tensor& pg = self.parents[0]->grad;
        for (size_t i = 0; i < pg.size(); ++i)
            pg[i] += self.grad[i] * 0.5 / self.value[i];
    };
    return n;
}

void check_scales(const std::vector<Var>& a, const std::vector<Var>& b, const char* name) {
    if (a.size() != b.size())
        throw std::invalid_argument(std::string(name) + ": scale count mismatch");
    for (size_t i = 0; i < a.size(); ++i)
        require_same_shape(a[i]->value, b[i]->value, name);
}

}  // namespace

Var dog_extract(const Var& x) {
    Var blurred = gaussian5(x);
    // blur at the upsampled size (2*ceil/2, one larger than x for odd
    // extents) and crop only for the final subtraction
    Var low = gaussian5(upsample2(decimate2(blurred)));
    if (low->value.h() != x->value.h() || low->value.w() != x->value.w())
        low = crop2d(low, 0, 0, x->value.h(), x->value.w());
    return sub(x, low);
}

Var sobel_magnitude(const Var& x) {
    Var gx = fixed_kernel_conv(x, {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}});
    Var gy = fixed_kernel_conv(x, {{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}});
    return sqrt_eps(add(mul(gx, gx), mul(gy, gy)), 1e-8);
}

Var edge_loss(const std::vector<Var>& i_out, const std::vector<Var>& i_warp,
              const std::vector<Var>& i_gt) {
    check_scales(i_out, i_gt, "edge_loss");
    check_scales(i_warp, i_gt, "edge_loss");
    Var total = make_const(Tensor::scalar(0.0));
    for (size_t i = 0; i < i_gt.size(); ++i) {
        Var egt = dog_extract(i_gt[i]);
        total = add(total, rms(sub(dog_extract(i_out[i]), egt)));
        total = add(total, rms(sub(dog_extract(i_warp[i]), egt)));
    }
    return total;
}

Var global_loss(const std::vector<Var>& i_out, const std::vector<Var>& i_gt) {
    check_scales(i_out, i_gt, "global_loss");
    Var total = make_const(Tensor::scalar(0.0));
    for (size_t i = 0; i < i_gt.size(); ++i)
        total = add(total, rms(sub(i_out[i], i_gt[i])));
    return total;
}

Var frequency_loss(const std::vector<Var>& i_out, const std::vector<Var>& i_gt) {
    check_scales(i_out, i_gt, "frequency_loss");
    Var total = make_const(Tensor::scalar(0.0));
    for (size_t i = 0; i < i_gt.size(); ++i)
        total = add(total, spectral_abs_mean(sub(i_out[i], i_gt[i])));
    return total;
}

Var detail_loss(const std::vector<Var>& i_out, const std::vector<Var>& i_gt,
                const std::vector<Var>& masks) {
    check_scales(i_out, i_gt, "detail_loss");
    if (masks.size() != i_out.size())
        throw std::invalid_argument("detail_loss: mask count mismatch");
    Var total = make_const(Tensor::scalar(0.0));
    for (size_t i = 0; i < i_gt.size(); ++i) {
        const Tensor& m = masks[i]->value;
        if (m.c() != 1 || m.h() != i_out[i]->value.h() || m.w() != i_out[i]->value.w())
            throw std::invalid_argument("detail_loss: mask shape mismatch");
        // mask is a constant weighting; letting its gradient through would
        // let the head zero the loss by predicting M = 0
        Var md = detach(masks[i]);
        Var d = sub(mul(sobel_magnitude(i_out[i]), md), mul(sobel_magnitude(i_gt[i]), md));
        total = add(total, mean_abs(d));
    }
    return total;
}

LossParts total_loss(const std::vector<ScaleOutput>& outputs, const std::vector<Var>& i_gt,
                     const LossWeights& w) {
    std::vector<Var> outs, warps, masks;
    for (const auto& s : outputs) {
        outs.push_back(s.i_out);
        warps.push_back(s.i_warp);
        masks.push_back(s.mask);
    }
    Var le = edge_loss(outs, warps, i_gt);
    Var lg = global_loss(outs, i_gt);
    Var lf = frequency_loss(outs, i_gt);
    Var ld = detail_loss(outs, i_gt, masks);
    LossParts parts;
    parts.edge = le->value[0];
    parts.global = lg->value[0];
    parts.freq = lf->value[0];
    parts.detail = ld->value[0];
    const char* names[4] = {"edge", "global", "frequency", "detail"};
    double vals[4] = {parts.edge, parts.global, parts.freq, parts.detail};
    for (int i = 0; i < 4; ++i)
        if (!std::isfinite(vals[i]))
            throw std::runtime_error(std::string("total_loss: non-finite ") + names[i] +
                                     " component");
    parts.total = add(add(scale(le, w.lambda_edge), scale(lg, w.lambda_global)),
                      add(scale(lf, w.lambda_freq), scale(ld, w.lambda_detail)));
    return parts;
}

}  // namespace fr
