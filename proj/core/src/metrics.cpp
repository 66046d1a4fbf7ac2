#include "fr/metrics.hpp"

#include <cmath>

#include "fr/image.hpp"

namespace fr {

BinaryMask BinaryMask::from_tensor(const Tensor& t, double threshold) {
    Tensor g = to_gray(t);
    BinaryMask out(g.h(), g.w());
    for (int y = 0; y < g.h(); ++y)
        for (int x = 0; x < g.w(); ++x)
            out.at(y, x) = g.at(0, 0, y, x) >= threshold ? 1 : 0;
    return out;
}

namespace {
Tensor as_gray(const Tensor& img) {
    if (img.b() != 1) throw std::invalid_argument("metrics: expected batch of 1");
    return img.c() == 1 ? img : to_gray(img);
}
}  // namespace

double entropy(const Tensor& img) {
    Tensor g = as_gray(img);
    std::array<long, 256> hist{};
    for (size_t i = 0; i < g.size(); ++i) {
        int bin = static_cast<int>(std::clamp(g[i], 0.0, 1.0) * 255.0 + 0.5);
        ++hist[bin];
    }
    double n = static_cast<double>(g.size()), e = 0;
    for (long h : hist)
        if (h > 0) {
            double p = h / n;
            e -= p * std::log2(p);
        }
    return e;
}

double spatial_frequency(const Tensor& img) {
    Tensor g = as_gray(img);
    double rf = 0, cf = 0;
    long nr = 0, nc = 0;
    for (int y = 0; y < g.h(); ++y)
        for (int x = 1; x < g.w(); ++x) {
            double d = g.at(0, 0, y, x) - g.at(0, 0, y, x - 1);
            rf += d * d;
            ++nr;
        }
    for (int y = 1; y < g.h(); ++y)
        for (int x = 0; x < g.w(); ++x) {
            double d = g.at(0, 0, y, x) - g.at(0, 0, y - 1, x);
            cf += d * d;
            ++nc;
        }
    rf = nr ? rf / nr : 0;
    cf = nc ? cf / nc : 0;
    return std::sqrt(rf + cf);
}

double average_gradient(const Tensor& img) {
    Tensor g = as_gray(img);
    double acc = 0;
    long n = 0;
    for (int y = 0; y < g.h() - 1; ++y)
        for (int x = 0; x < g.w() - 1; ++x) {
            double dx = g.at(0, 0, y, x + 1) - g.at(0, 0, y, x);
            double dy = g.at(0, 0, y + 1, x) - g.at(0, 0, y, x);
            acc += std::sqrt((dx * dx + dy * dy) / 2.0);
            ++n;
        }
    return n ? acc / n : 0;
}

double std_dev(const Tensor& img) {
    Tensor g = as_gray(img);
    double mean = 0;
    for (size_t i = 0; i < g.size(); ++i) mean += g[i];
    mean /= g.size();
    double var = 0;
    for (size_t i = 0; i < g.size(); ++i) var += (g[i] - mean) * (g[i] - mean);
    return std::sqrt(var / g.size());
}

double iou(const BinaryMask& a, const BinaryMask& b) {
    if (a.h != b.h || a.w != b.w) throw std::invalid_argument("iou: dim mismatch");
    long inter = 0, uni = 0;
    for (size_t i = 0; i < a.m.size(); ++i) {
        bool av = a.m[i], bv = b.m[i];
        inter += av && bv;
        uni += av || bv;
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / uni;
}

double pr_score(const BinaryMask& pred, const BinaryMask& ref) {
    if (pred.h != ref.h || pred.w != ref.w) throw std::invalid_argument("pr_score: dim mismatch");
    long inter = 0, np = 0, nr = 0;
    for (size_t i = 0; i < pred.m.size(); ++i) {
        inter += pred.m[i] && ref.m[i];
        np += pred.m[i] != 0;
        nr += ref.m[i] != 0;
    }
    if (nr == 0) throw std::invalid_argument("pr_score: empty reference mask");
    if (np == 0) return 0.0;
    double p = static_cast<double>(inter) / np;
    double r = static_cast<double>(inter) / nr;
    return (p + r) > 0 ? 2 * p * r / (p + r) : 0.0;
}

double PriorMap::mean() const {
    double acc = 0;
    for (double v : ssim) acc += v;
    return ssim.empty() ? 0 : acc / ssim.size();
}

PriorMap prior_map(const Tensor& fused, const Tensor& gt, int patch, int stride) {
    Tensor a = as_gray(fused), b = as_gray(gt);
    require_same_shape(a, b, "prior_map");
    if (patch > a.h() || patch > a.w())
        throw std::invalid_argument("prior_map: patch larger than image");
    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    PriorMap out;
    out.patch = patch;
    out.stride = stride;
    out.gh = (a.h() - patch) / stride + 1;
    out.gw = (a.w() - patch) / stride + 1;
    out.ssim.resize(static_cast<size_t>(out.gh) * out.gw);
    const double n = static_cast<double>(patch) * patch;
    for (int gy = 0; gy < out.gh; ++gy)
        for (int gx = 0; gx < out.gw; ++gx) {
            double ma = 0, mb = 0;
            for (int y = 0; y < patch; ++y)
                for (int x = 0; x < patch; ++x) {
                    ma += a.at(0, 0, gy * stride + y, gx * stride + x);
                    mb += b.at(0, 0, gy * stride + y, gx * stride + x);
                }
            ma /= n;
            mb /= n;
            double va = 0, vb = 0, cov = 0;
            for (int y = 0; y < patch; ++y)
                for (int x = 0; x < patch; ++x) {
                    double da = a.at(0, 0, gy * stride + y, gx * stride + x) - ma;
                    double db = b.at(0, 0, gy * stride + y, gx * stride + x) - mb;
                    va += da * da;
                    vb += db * db;
                    cov += da * db;
                }
            va /= n;
            vb /= n;
            cov /= n;
            out.ssim[static_cast<size_t>(gy) * out.gw + gx] =
                ((2 * ma * mb + c1) * (2 * cov + c2)) /
                ((ma * ma + mb * mb + c1) * (va + vb + c2));
        }
    return out;
}

QualityReport quality_metrics(const Tensor& img) {
    return {entropy(img), spatial_frequency(img), average_gradient(img), std_dev(img)};
}

RunReport evaluate_run(const Tensor& before, const Tensor& after,
                       const std::vector<MaskTriple>& masks) {
    RunReport r;
    r.before = quality_metrics(before);
    r.after = quality_metrics(after);
    if (masks.empty()) {
        r.warnings.push_back("no masks supplied; quality metrics only");
        return r;
    }
    double ib = 0, ia = 0, pb = 0, pa = 0;
    for (const auto& t : masks) {
        ib += iou(t.ref, t.before);
        ia += iou(t.ref, t.after);
        pb += pr_score(t.before, t.ref);
        pa += pr_score(t.after, t.ref);
    }
    double n = static_cast<double>(masks.size());
    r.mean_iou_before = ib / n;
    r.mean_iou_after = ia / n;
    r.mean_pr_before = pb / n;
    r.mean_pr_after = pa / n;
    return r;
}

}  // namespace fr
