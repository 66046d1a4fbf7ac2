#include "fr/simulate.hpp"

#include <cmath>
#include <sstream>

namespace fr {

std::string AffineParams::to_line() const {
    std::ostringstream o;
    o << "rot=" << rotation_deg << " tx=" << translate_x << " ty=" << translate_y
      << " scale=" << scale << " flip_h=" << flip_h << " flip_v=" << flip_v
      << " rot90_k=" << rot90_k;
    return o.str();
}

AffineParams sample_affine(Rng& rng) {
    std::uniform_real_distribution<double> rot(-2.0, 2.0);
    std::uniform_real_distribution<double> tr(-2.0, 2.0);
    std::uniform_real_distribution<double> sc(0.95, 1.08);
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    std::uniform_int_distribution<int> k(1, 3);
    AffineParams p;
    p.rotation_deg = rot(rng);
    p.translate_x = tr(rng);
    p.translate_y = tr(rng);
    p.scale = sc(rng);
    p.flip_h = coin(rng) < 0.5;
    p.flip_v = coin(rng) < 0.5;
    p.rot90_k = coin(rng) < 0.5 ? k(rng) : 0;
    return p;
}

Tensor apply_affine_continuous(const Tensor& img, const AffineParams& p) {
    const int H = img.h(), W = img.w();
    const double cx = (W - 1) / 2.0, cy = (H - 1) / 2.0;
    const double th = p.rotation_deg * M_PI / 180.0;
    const double ct = std::cos(th), st = std::sin(th);
    Tensor out(img.b(), img.c(), H, W);
    // inverse map: undo translation, rotation, scale
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            double dx = x - cx - p.translate_x;
            double dy = y - cy - p.translate_y;
            double rx = (ct * dx + st * dy) / p.scale;
            double ry = (-st * dx + ct * dy) / p.scale;
            double sx = std::clamp(rx + cx, 0.0, W - 1.0);
            double sy = std::clamp(ry + cy, 0.0, H - 1.0);
            int x0 = static_cast<int>(std::floor(sx));
            int y0 = static_cast<int>(std::floor(sy));
            int x1 = std::min(x0 + 1, W - 1);
            int y1 = std::min(y0 + 1, H - 1);
            double fx = sx - x0, fy = sy - y0;
            for (int b = 0; b < img.b(); ++b)
                for (int c = 0; c < img.c(); ++c)
                    out.at(b, c, y, x) =
                        (1 - fy) * ((1 - fx) * img.at(b, c, y0, x0) + fx * img.at(b, c, y0, x1)) +
                        fy * ((1 - fx) * img.at(b, c, y1, x0) + fx * img.at(b, c, y1, x1));
        }
    return out;
}

Tensor apply_discrete(const Tensor& img, const AffineParams& p) {
    Tensor out = img;
    auto flip = [](const Tensor& t, bool horiz) {
        Tensor o = t.zeros_like();
        for (int b = 0; b < t.b(); ++b)
            for (int c = 0; c < t.c(); ++c)
                for (int y = 0; y < t.h(); ++y)
                    for (int x = 0; x < t.w(); ++x)
                        o.at(b, c, y, x) =
                            horiz ? t.at(b, c, y, t.w() - 1 - x) : t.at(b, c, t.h() - 1 - y, x);
        return o;
    };
    auto rot90 = [](const Tensor& t) {
        // counter-clockwise quarter turn
        Tensor o(t.b(), t.c(), t.w(), t.h());
        for (int b = 0; b < t.b(); ++b)
            for (int c = 0; c < t.c(); ++c)
                for (int y = 0; y < t.h(); ++y)
                    for (int x = 0; x < t.w(); ++x)
                        o.at(b, c, t.w() - 1 - x, y) = t.at(b, c, y, x);
        return o;
    };
    if (p.flip_h) out = flip(out, true);
    if (p.flip_v) out = flip(out, false);
    for (int i = 0; i < p.rot90_k; ++i) out = rot90(out);
    return out;
}

Tensor apply_affine(const Tensor& img, const AffineParams& p) {
    return apply_discrete(apply_affine_continuous(img, p), p);
}

Tensor baseline_fuse(const Tensor& vi, const Tensor& ir, const std::string& variant) {
    if (vi.b() != ir.b() || vi.h() != ir.h() || vi.w() != ir.w())
        throw std::invalid_argument("baseline_fuse: shape mismatch");
    if (ir.c() != vi.c() && ir.c() != 1)
        throw std::invalid_argument("baseline_fuse: infrared channels must be 1 or match");
    Tensor out(vi.b(), vi.c(), vi.h(), vi.w());
    if (variant == "mean") {
        for (int b = 0; b < vi.b(); ++b)
            for (int c = 0; c < vi.c(); ++c)
                for (int y = 0; y < vi.h(); ++y)
                    for (int x = 0; x < vi.w(); ++x)
                        out.at(b, c, y, x) =
                            0.5 * vi.at(b, c, y, x) + 0.5 * ir.at(b, ir.c() == 1 ? 0 : c, y, x);
        return out;
    }
    if (variant != "max")
        throw std::invalid_argument("baseline_fuse: unknown variant " + variant);
    // max of visible luma and infrared luma drives the luminance; the
    // chrominance offsets of vi are carried over
    for (int b = 0; b < vi.b(); ++b)
        for (int y = 0; y < vi.h(); ++y)
            for (int x = 0; x < vi.w(); ++x) {
                double lv = 0, li = 0;
                if (vi.c() == 3)
                    lv = 0.299 * vi.at(b, 0, y, x) + 0.587 * vi.at(b, 1, y, x) +
                         0.114 * vi.at(b, 2, y, x);
                else
                    lv = vi.at(b, 0, y, x);
                if (ir.c() == 3)
                    li = 0.299 * ir.at(b, 0, y, x) + 0.587 * ir.at(b, 1, y, x) +
                         0.114 * ir.at(b, 2, y, x);
                else
                    li = ir.at(b, 0, y, x);
                double target = std::max(lv, li);
                for (int c = 0; c < vi.c(); ++c) {
                    double v = vi.at(b, c, y, x) + (target - lv);
                    out.at(b, c, y, x) = std::clamp(v, 0.0, 1.0);
                }
            }
    return out;
}

TrainingSample make_training_sample(const Tensor& vi, const Tensor& ir, Rng& rng,
                                    const RunConfig& cfg) {
    TrainingSample s;
    s.params = sample_affine(rng);
    AffineParams discrete_only;
    discrete_only.flip_h = s.params.flip_h;
    discrete_only.flip_v = s.params.flip_v;
    discrete_only.rot90_k = s.params.rot90_k;

    Tensor vi_aug = vi, ir_aug = ir;
    if (!cfg.deform_only_ir) {
        // pair-level augmentation: the large discrete ops move both streams,
        // only the small continuous affine misregisters the infrared
        vi_aug = apply_discrete(vi, discrete_only);
        ir_aug = apply_discrete(ir, discrete_only);
        s.infrared_deformed = apply_affine_continuous(ir_aug, s.params);
    } else {
        s.infrared_deformed = apply_affine(ir, s.params);
    }
    s.visible = vi_aug;
    s.fused_registered = baseline_fuse(vi_aug, ir_aug, cfg.fuser);
    s.fused_deformed = baseline_fuse(vi_aug, s.infrared_deformed, cfg.fuser);
    return s;
}

ShapesPair make_shapes_pair(Rng& rng, int size) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    ShapesPair p;
    p.vi = Tensor(1, 3, size, size);
    p.ir = Tensor(1, 3, size, size);
    p.mask = Tensor(1, 1, size, size);

    double fx = 2.0 + 6.0 * u(rng), fy = 2.0 + 6.0 * u(rng);
    double ph = 2 * M_PI * u(rng);
    double base = 0.25 + 0.3 * u(rng);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            double t = 0.5 + 0.5 * std::sin(2 * M_PI * (fx * x + fy * y) / size + ph);
            double v = base + 0.35 * t;
            p.vi.at(0, 0, y, x) = v;
            p.vi.at(0, 1, y, x) = std::clamp(v * (0.8 + 0.2 * t), 0.0, 1.0);
            p.vi.at(0, 2, y, x) = std::clamp(v * (0.9 - 0.2 * t), 0.0, 1.0);
            for (int c = 0; c < 3; ++c) p.ir.at(0, c, y, x) = 0.15 + 0.1 * t;
        }

    // a few bright blobs visible mostly in the infrared stream; the first
    // rectangle doubles as the scoring mask
    int nblobs = 2 + static_cast<int>(u(rng) * 2);
    for (int i = 0; i < nblobs; ++i) {
        int bw = size / 6 + static_cast<int>(u(rng) * size / 5);
        int bh = size / 6 + static_cast<int>(u(rng) * size / 5);
        int x0 = 3 + static_cast<int>(u(rng) * (size - bw - 6));
        int y0 = 3 + static_cast<int>(u(rng) * (size - bh - 6));
        double heat = 0.6 + 0.35 * u(rng);
        for (int y = y0; y < y0 + bh; ++y)
            for (int x = x0; x < x0 + bw; ++x) {
                for (int c = 0; c < 3; ++c)
                    p.ir.at(0, c, y, x) = std::max(p.ir.at(0, c, y, x), heat);
                if (i == 0) p.mask.at(0, 0, y, x) = 1.0;
                // faint footprint in the visible stream (shared content)
                for (int c = 0; c < 3; ++c)
                    p.vi.at(0, c, y, x) = std::clamp(p.vi.at(0, c, y, x) + 0.15, 0.0, 1.0);
            }
    }
    return p;
}

}  // namespace fr
