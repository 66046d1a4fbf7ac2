#pragma once

// Naive reference implementations used as independent oracles by the test
// and selftest suites. Everything here is written as direct loops over
// definitions, deliberately sharing no code with the op library.

#include <cmath>
#include <vector>

#include "fr/tensor.hpp"

namespace fr::oracle {

// bilinear sample with zero padding, displacement in output coordinates
inline Tensor warp(const Tensor& in, const Tensor& phi) {
    Tensor out = in.zeros_like();
    for (int b = 0; b < in.b(); ++b)
        for (int c = 0; c < in.c(); ++c)
            for (int y = 0; y < in.h(); ++y)
                for (int x = 0; x < in.w(); ++x) {
                    double sx = x + phi.at(b, 0, y, x);
                    double sy = y + phi.at(b, 1, y, x);
                    int x0 = static_cast<int>(std::floor(sx));
                    int y0 = static_cast<int>(std::floor(sy));
                    double acc = 0;
                    for (int dy = 0; dy <= 1; ++dy)
                        for (int dx = 0; dx <= 1; ++dx) {
                            int xi = x0 + dx, yi = y0 + dy;
                            if (xi < 0 || xi >= in.w() || yi < 0 || yi >= in.h()) continue;
                            double wx = dx ? sx - x0 : 1 - (sx - x0);
                            double wy = dy ? sy - y0 : 1 - (sy - y0);
                            acc += wx * wy * in.at(b, c, yi, xi);
                        }
                    out.at(b, c, y, x) = acc;
                }
    return out;
}

inline Tensor correlation(const Tensor& fw, const Tensor& fs, int p) {
    int d = 2 * p + 1;
    Tensor out(fw.b(), d * d, fw.h(), fw.w());
    for (int b = 0; b < fw.b(); ++b)
        for (int m = 0; m < d; ++m)
            for (int n = 0; n < d; ++n)
                for (int y = 0; y < fw.h(); ++y)
                    for (int x = 0; x < fw.w(); ++x) {
                        int sy = y + n - p, sx = x + m - p;
                        double acc = 0;
                        if (sy >= 0 && sy < fw.h() && sx >= 0 && sx < fw.w())
                            for (int c = 0; c < fw.c(); ++c)
                                acc += fs.at(b, c, sy, sx) * fw.at(b, c, y, x);
                        out.at(b, m * d + n, y, x) = acc / fw.c();
                    }
    return out;
}

inline int reflect(int i, int n) {
    while (i < 0 || i >= n) {
        if (i < 0) i = -i - 1;
        if (i >= n) i = 2 * n - 1 - i;
    }
    return i;
}

inline Tensor gauss5(const Tensor& x) {
    const double k[5] = {0.05, 0.25, 0.4, 0.25, 0.05};
    Tensor out = x.zeros_like();
    for (int b = 0; b < x.b(); ++b)
        for (int c = 0; c < x.c(); ++c)
            for (int y = 0; y < x.h(); ++y)
                for (int xx = 0; xx < x.w(); ++xx) {
                    double acc = 0;
                    for (int i = 0; i < 5; ++i)
                        for (int j = 0; j < 5; ++j)
                            acc += k[i] * k[j] *
                                   x.at(b, c, reflect(y + i - 2, x.h()),
                                        reflect(xx + j - 2, x.w()));
                    out.at(b, c, y, xx) = acc;
                }
    return out;
}

inline Tensor dog(const Tensor& x) {
    Tensor g = gauss5(x);
    int dh = (x.h() + 1) / 2, dw = (x.w() + 1) / 2;
    Tensor down(x.b(), x.c(), dh, dw);
    for (int b = 0; b < x.b(); ++b)
        for (int c = 0; c < x.c(); ++c)
            for (int y = 0; y < dh; ++y)
                for (int xx = 0; xx < dw; ++xx) down.at(b, c, y, xx) = g.at(b, c, 2 * y, 2 * xx);
    // bilinear x2, align_corners=false, clamped taps
    Tensor up(x.b(), x.c(), 2 * dh, 2 * dw);
    auto taps = [](int o, int n, int& i0, int& i1, double& f) {
        double s = (o + 0.5) / 2.0 - 0.5;
        double fl = std::floor(s);
        i0 = static_cast<int>(fl);
        i1 = i0 + 1;
        f = s - fl;
        i0 = std::clamp(i0, 0, n - 1);
        i1 = std::clamp(i1, 0, n - 1);
    };
    for (int b = 0; b < x.b(); ++b)
        for (int c = 0; c < x.c(); ++c)
            for (int y = 0; y < up.h(); ++y)
                for (int xx = 0; xx < up.w(); ++xx) {
                    int y0, y1, x0, x1;
                    double fy, fx;
                    taps(y, dh, y0, y1, fy);
                    taps(xx, dw, x0, x1, fx);
                    up.at(b, c, y, xx) =
                        (1 - fy) * ((1 - fx) * down.at(b, c, y0, x0) + fx * down.at(b, c, y0, x1)) +
                        fy * ((1 - fx) * down.at(b, c, y1, x0) + fx * down.at(b, c, y1, x1));
                }
    Tensor up2 = gauss5(up);
    Tensor out = x.zeros_like();
    for (int b = 0; b < x.b(); ++b)
        for (int c = 0; c < x.c(); ++c)
            for (int y = 0; y < x.h(); ++y)
                for (int xx = 0; xx < x.w(); ++xx)
                    out.at(b, c, y, xx) = x.at(b, c, y, xx) - up2.at(b, c, y, xx);
    return out;
}

inline double rms(const Tensor& a, const Tensor& b) {
    double acc = 0;
    for (size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(acc / a.size());
}

inline double edge_loss(const std::vector<Tensor>& out, const std::vector<Tensor>& warp,
                        const std::vector<Tensor>& gt) {
    double acc = 0;
    for (size_t i = 0; i < gt.size(); ++i) {
        Tensor eg = dog(gt[i]);
        acc += rms(dog(out[i]), eg) + rms(dog(warp[i]), eg);
    }
    return acc;
}

inline double global_loss(const std::vector<Tensor>& out, const std::vector<Tensor>& gt) {
    double acc = 0;
    for (size_t i = 0; i < gt.size(); ++i) acc += rms(out[i], gt[i]);
    return acc;
}

// direct O(n^2) DFT per axis pair
inline double frequency_loss(const std::vector<Tensor>& out, const std::vector<Tensor>& gt) {
    double total = 0;
    for (size_t i = 0; i < gt.size(); ++i) {
        const Tensor& a = out[i];
        const Tensor& b = gt[i];
        double acc = 0;
        for (int bb = 0; bb < a.b(); ++bb)
            for (int c = 0; c < a.c(); ++c)
                for (int k = 0; k < a.h(); ++k)
                    for (int l = 0; l < a.w(); ++l) {
                        double re = 0, im = 0;
                        for (int y = 0; y < a.h(); ++y)
                            for (int x = 0; x < a.w(); ++x) {
                                double d = a.at(bb, c, y, x) - b.at(bb, c, y, x);
                                double ang = -2.0 * M_PI *
                                             (static_cast<double>(k) * y / a.h() +
                                              static_cast<double>(l) * x / a.w());
                                re += d * std::cos(ang);
                                im += d * std::sin(ang);
                            }
                        acc += std::fabs(re) + std::fabs(im);
                    }
        total += acc / a.size();
    }
    return total;
}

inline Tensor sobel_mag(const Tensor& x) {
    const double kx[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
    const double ky[3][3] = {{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}};
    Tensor out = x.zeros_like();
    for (int b = 0; b < x.b(); ++b)
        for (int c = 0; c < x.c(); ++c)
            for (int y = 0; y < x.h(); ++y)
                for (int xx = 0; xx < x.w(); ++xx) {
                    double gx = 0, gy = 0;
                    for (int i = 0; i < 3; ++i)
                        for (int j = 0; j < 3; ++j) {
                            double v = x.at(b, c, reflect(y + i - 1, x.h()),
                                            reflect(xx + j - 1, x.w()));
                            gx += kx[i][j] * v;
                            gy += ky[i][j] * v;
                        }
                    out.at(b, c, y, xx) = std::sqrt(gx * gx + gy * gy + 1e-8);
                }
    return out;
}

inline double detail_loss(const std::vector<Tensor>& out, const std::vector<Tensor>& gt,
                          const std::vector<Tensor>& masks) {
    double total = 0;
    for (size_t i = 0; i < gt.size(); ++i) {
        Tensor so = sobel_mag(out[i]);
        Tensor sg = sobel_mag(gt[i]);
        double acc = 0;
        for (int b = 0; b < so.b(); ++b)
            for (int c = 0; c < so.c(); ++c)
                for (int y = 0; y < so.h(); ++y)
                    for (int x = 0; x < so.w(); ++x) {
                        double m = masks[i].at(b, 0, y, x);
                        acc += std::fabs(so.at(b, c, y, x) * m - sg.at(b, c, y, x) * m);
                    }
        total += acc / so.size();
    }
    return total;
}

inline double spatial_frequency(const Tensor& g) {
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
    return std::sqrt((nr ? rf / nr : 0) + (nc ? cf / nc : 0));
}

inline double average_gradient(const Tensor& g) {
    double acc = 0;
    long n = 0;
    for (int y = 0; y + 1 < g.h(); ++y)
        for (int x = 0; x + 1 < g.w(); ++x) {
            double dx = g.at(0, 0, y, x + 1) - g.at(0, 0, y, x);
            double dy = g.at(0, 0, y + 1, x) - g.at(0, 0, y, x);
            acc += std::sqrt((dx * dx + dy * dy) / 2.0);
            ++n;
        }
    return n ? acc / n : 0;
}

inline double std_dev(const Tensor& g) {
    double m = 0;
    for (size_t i = 0; i < g.size(); ++i) m += g[i];
    m /= g.size();
    double v = 0;
    for (size_t i = 0; i < g.size(); ++i) v += (g[i] - m) * (g[i] - m);
    return std::sqrt(v / g.size());
}

}  // namespace fr::oracle
