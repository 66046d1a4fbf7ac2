#include "fr/ops.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <unordered_set>

namespace fr {

// ---------------------------------------------------------------- backward()

void backward(const Var& loss) {
    if (loss->value.size() != 1)
        throw std::invalid_argument("backward: loss must be scalar");
    // topo order by DFS
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<Node*> stack{loss.get()};
    std::vector<std::pair<Node*, size_t>> dfs;
    dfs.push_back({loss.get(), 0});
    seen.insert(loss.get());
    while (!dfs.empty()) {
        auto& [n, i] = dfs.back();
        if (i < n->parents.size()) {
            Node* p = n->parents[i++].get();
            if (!seen.count(p)) {
                seen.insert(p);
                dfs.push_back({p, 0});
            }
        } else {
            order.push_back(n);
            dfs.pop_back();
        }
    }
    for (Node* n : order) {
        n->grad = n->value.zeros_like();
    }
    loss->grad[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backprop) n->backprop(*n);
    }
}

// ---------------------------------------------------------------- broadcast

namespace {

std::array<int, 4> broadcast_shape(const Tensor& a, const Tensor& b, const char* op) {
    std::array<int, 4> s;
    for (int i = 0; i < 4; ++i) {
        int da = a.shape()[i], db = b.shape()[i];
        if (da == db) s[i] = da;
        else if (da == 1) s[i] = db;
        else if (db == 1) s[i] = da;
        else
            throw std::invalid_argument(std::string(op) + ": incompatible shapes " +
                                        a.shape_str() + " vs " + b.shape_str());
    }
    return s;
}

// accumulate `g` (shaped like out) into `dst` (possibly broadcast-reduced)
void reduce_into(Tensor& dst, const Tensor& g) {
    if (dst.same_shape(g)) {
        for (size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
        return;
    }
    for (int b = 0; b < g.b(); ++b)
        for (int c = 0; c < g.c(); ++c)
            for (int y = 0; y < g.h(); ++y)
                for (int x = 0; x < g.w(); ++x)
                    dst.at(dst.b() == 1 ? 0 : b, dst.c() == 1 ? 0 : c,
                           dst.h() == 1 ? 0 : y, dst.w() == 1 ? 0 : x) += g.at(b, c, y, x);
}

template <class F>
Var binary_op(const Var& a, const Var& b, const char* name, F fwd,
              std::function<void(Node&, Node&, Node&)> bwd) {
    auto shp = broadcast_shape(a->value, b->value, name);
    auto n = std::make_shared<Node>();
    n->value = Tensor(shp[0], shp[1], shp[2], shp[3]);
    const Tensor& ta = a->value;
    const Tensor& tb = b->value;
    if (ta.same_shape(tb)) {
        for (size_t i = 0; i < ta.size(); ++i) n->value[i] = fwd(ta[i], tb[i]);
    } else {
        for (int bb = 0; bb < shp[0]; ++bb)
            for (int c = 0; c < shp[1]; ++c)
                for (int y = 0; y < shp[2]; ++y)
                    for (int x = 0; x < shp[3]; ++x)
                        n->value.at(bb, c, y, x) =
                            fwd(ta.at(ta.b() == 1 ? 0 : bb, ta.c() == 1 ? 0 : c,
                                      ta.h() == 1 ? 0 : y, ta.w() == 1 ? 0 : x),
                                tb.at(tb.b() == 1 ? 0 : bb, tb.c() == 1 ? 0 : c,
                                      tb.h() == 1 ? 0 : y, tb.w() == 1 ? 0 : x));
    }
    n->parents = {a, b};
    n->requires_grad = a->requires_grad || b->requires_grad;
    n->backprop = [bwd](Node& self) {
        bwd(self, *self.parents[0], *self.parents[1]);
    };
    return n;
}

// broadcast-aware accumulation of elementwise-product style gradients
void accum_bcast(Tensor& dst, const Tensor& g, const Tensor& other, bool times_other) {
    if (dst.same_shape(g) && (!times_other || other.same_shape(g))) {
        if (times_other)
            for (size_t i = 0; i < g.size(); ++i) dst[i] += g[i] * other[i];
        else
            for (size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
        return;
    }
    for (int b = 0; b < g.b(); ++b)
        for (int c = 0; c < g.c(); ++c)
            for (int y = 0; y < g.h(); ++y)
                for (int x = 0; x < g.w(); ++x) {
                    double v = g.at(b, c, y, x);
                    if (times_other)
                        v *= other.at(other.b() == 1 ? 0 : b, other.c() == 1 ? 0 : c,
                                      other.h() == 1 ? 0 : y, other.w() == 1 ? 0 : x);
                    dst.at(dst.b() == 1 ? 0 : b, dst.c() == 1 ? 0 : c,
                           dst.h() == 1 ? 0 : y, dst.w() == 1 ? 0 : x) += v;
                }
}

int reflect_index(int i, int n) {
    // edge-inclusive reflection; valid for any pad smaller than a few n
    while (i < 0 || i >= n) {
        if (i < 0) i = -i - 1;
        if (i >= n) i = 2 * n - 1 - i;
    }
    return i;
}

}  // namespace

// ---------------------------------------------------------------- elementwise

Var add(const Var& a, const Var& b) {
    return binary_op(a, b, "add", [](double x, double y) { return x + y; },
                     [](Node& self, Node& pa, Node& pb) {
                         accum_bcast(pa.grad, self.grad, self.grad, false);
                         accum_bcast(pb.grad, self.grad, self.grad, false);
                     });
}

Var sub(const Var& a, const Var& b) {
    return binary_op(a, b, "sub", [](double x, double y) { return x - y; },
                     [](Node& self, Node& pa, Node& pb) {
                         accum_bcast(pa.grad, self.grad, self.grad, false);
                         Tensor neg_g = self.grad;
                         for (size_t i = 0; i < neg_g.size(); ++i) neg_g[i] = -neg_g[i];
                         accum_bcast(pb.grad, neg_g, neg_g, false);
                     });
}

Var mul(const Var& a, const Var& b) {
    return binary_op(a, b, "mul", [](double x, double y) { return x * y; },
                     [](Node& self, Node& pa, Node& pb) {
                         accum_bcast(pa.grad, self.grad, pb.value, true);
                         accum_bcast(pb.grad, self.grad, pa.value, true);
                     });
}

Var scale(const Var& a, double s) {
    auto n = std::make_shared<Node>();
    n->value = a->value;
    for (size_t i = 0; i < n->value.size(); ++i) n->value[i] *= s;
    n->parents = {a};
    n->requires_grad = a->requires_grad;
    n->backprop = [s](Node& self) {
        Tensor& pg = self.parents[0]->grad;
        for (size_t i = 0; i < pg.size(); ++i) pg[i] += s * self.grad[i];
    };
    return n;
}

Var add_scalar(const Var& a, double s) {
    auto n = std::make_shared<Node>();
    n->value = a->value;
    for (size_t i = 0; i < n->value.size(); ++i) n->value[i] += s;
    n->parents = {a};
    n->requires_grad = a->requires_grad;
    n->backprop = [](Node& self) {
        Tensor& pg = self.parents[0]->grad;
        for (size_t i = 0; i < pg.size(); ++i) pg[i] += self.grad[i];
    };
    return n;
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var relu(const Var& a) {
    auto n = std::make_shared<Node>();
    n->value = a->value;
    for (size_t i = 0; i < n->value.size(); ++i)
        if (n->value[i] < 0) n->value[i] = 0;
    n->parents = {a};
    n->requires_grad = a->requires_grad;
    n->backprop = [](Node& self) {
        Tensor& pg = self.parents[0]->grad;
        const Tensor& x = self.parents[0]->value;
        for (size_t i = 0; i < pg.size(); ++i)
            if (x[i] > 0) pg[i] += self.grad[i];
    };
    return n;
}

Var sigmoid(const Var& a) {
    auto n = std::make_shared<Node>();
    n->value = a->value;
    for (size_t i = 0; i < n->value.size(); ++i)
        n->value[i] = 1.0 / (1.0 + std::exp(-n->value[i]));
    n->parents = {a};
    n->requires_grad = a->requires_grad;
    n->backprop = [](Node& self) {
        Tensor& pg = self.parents[0]->grad;
        for (size_t i = 0; i < pg.size(); ++i) {
            double y = self.value[i];
            pg[i] += self.grad[i] * y * (1.0 - y);
        }
    };
    return n;
}

Var detach(const Var& a) { return make_const(a->value); }

// ---------------------------------------------------------------- structure

Var concat_channels(const std::vector<Var>& xs) {
    if (xs.empty()) throw std::invalid_argument("concat: empty input");
    int b = xs[0]->value.b(), h = xs[0]->value.h(), w = xs[0]->value.w();
    int ctot = 0;
    for (auto& x : xs) {
        if (x->value.b() != b || x->value.h() != h || x->value.w() != w)
            throw std::invalid_argument("concat: mismatched dims");
        ctot += x->value.c();
    }
    auto n = std::make_shared<Node>();
    n->value = Tensor(b, ctot, h, w);
    int coff = 0;
    for (auto& x : xs) {
        const Tensor& t = x->value;
        for (int bb = 0; bb < b; ++bb)
            for (int c = 0; c < t.c(); ++c)
                std::copy(&t.at(bb, c, 0, 0), &t.at(bb, c, 0, 0) + h * w,
                          &n->value.at(bb, coff + c, 0, 0));
        coff += t.c();
        n->parents.push_back(x);
        n->requires_grad = n->requires_grad || x->requires_grad;
    }
    n->backprop = [b, h, w](Node& self) {
        int coff = 0;
        for (auto& p : self.parents) {
            Tensor& pg = p->grad;
            for (int bb = 0; bb < b; ++bb)
                for (int c = 0; c < pg.c(); ++c) {
                    const double* src = &self.grad.at(bb, coff + c, 0, 0);
                    double* dst = &pg.at(bb, c, 0, 0);
                    for (int i = 0; i < h * w; ++i) dst[i] += src[i];
                }
            coff += pg.c();
        }
    };
    return n;
}

Var crop2d(const Var& x, int top, int left, int h, int w) {
    const Tensor& t = x->value;
    if (top < 0 || left < 0 || top + h > t.h() || left + w > t.w())
        throw std::out_of_range("crop2d: window out of bounds");
    auto n = std::make_shared<Node>();
    n->value = Tensor(t.b(), t.c(), h, w);
    for (int b = 0; b < t.b(); ++b)
        for (int c = 0; c < t.c(); ++c)
            for (int y = 0; y < h; ++y)
                std::copy(&t.at(b, c, top + y, left), &t.at(b, c, top + y, left) + w,
                          &n->value.at(b, c, y, 0));
    n->parents = {x};
    n->requires_grad = x->requires_grad;
    n->backprop = [top, left, h, w](Node& self) {
        Tensor& pg = self.parents[0]->grad;
        for (int b = 0; b < pg.b(); ++b)
            for (int c = 0; c < pg.c(); ++c)
                for (int y = 0; y < h; ++y)
                    for (int xx = 0; xx < w; ++xx)
                        pg.at(b, c, top + y, left + xx) += self.grad.at(b, c, y, xx);
    };
    return n;
}

Var pad_reflect(const Var& x, int top, int bottom, int left, int right) {
    const Tensor& t = x->value;
    auto n = std::make_shared<Node>();
    n->value = Tensor(t.b(), t.c(), t.h() + top + bottom, t.w() + left + right);
    for (int b = 0; b < t.b(); ++b)
        for (int c = 0; c < t.c(); ++c)
            for (int y = 0; y < n->value.h(); ++y) {
                int sy = reflect_index(y - top, t.h());
                for (int xx = 0; xx < n->value.w(); ++xx)
                    n->value.at(b, c, y, xx) = t.at(b, c, sy, reflect_index(xx - left, t.w()));
            }
    n->parents = {x};
    n->requires_grad = x->requires_grad;
    n->backprop = [top, left](Node& self) {
        Tensor& pg = self.parents[0]->grad;
        const Tensor& g = self.grad;
        for (int b = 0; b < g.b(); ++b)
            for (int c = 0; c < g.c(); ++c)
                for (int y = 0; y < g.h(); ++y) {
                    int sy = reflect_index(y - top, pg.h());
                    for (int xx = 0; xx < g.w(); ++xx)
                        pg.at(b, c, sy, reflect_index(xx - left, pg.w())) += g.at(b, c, y, xx);
                }
    };
    return n;
}

// ---------------------------------------------------------------- conv2d

Var conv2d(const Var& x, const Var& w, const Var& bias, int stride, int pad, PadMode mode) {
    const Tensor& in = x->value;
    const Tensor& wt = w->value;
    if (wt.c() != in.c())
        throw std::invalid_argument("conv2d: channel mismatch");
    const int kh = wt.h(), kw = wt.w();
    const int oh = (in.h() + 2 * pad - kh) / stride + 1;
    const int ow = (in.w() + 2 * pad - kw) / stride + 1;
    auto n = std::make_shared<Node>();
    n->value = Tensor(in.b(), wt.b(), oh, ow);
    const bool refl = (mode == PadMode::Reflect);

    for (int b = 0; b < in.b(); ++b)
        for (int oc = 0; oc < wt.b(); ++oc) {
            double bv = bias ? bias->value.at(0, oc, 0, 0) : 0.0;
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox) {
                    double acc = bv;
                    for (int ic = 0; ic < in.c(); ++ic)
                        for (int ky = 0; ky < kh; ++ky) {
                            int iy = oy * stride - pad + ky;
                            if (refl) iy = reflect_index(iy, in.h());
                            else if (iy < 0 || iy >= in.h()) continue;
                            for (int kx = 0; kx < kw; ++kx) {
                                int ix = ox * stride - pad + kx;
                                if (refl) ix = reflect_index(ix, in.w());
                                else if (ix < 0 || ix >= in.w()) continue;
                                acc += wt.at(oc, ic, ky, kx) * in.at(b, ic, iy, ix);
                            }
                        }
                    n->value.at(b, oc, oy, ox) = acc;
                }
        }

    n->parents = bias ? std::vector<Var>{x, w, bias} : std::vector<Var>{x, w};
    n->requires_grad = x->requires_grad || w->requires_grad || (bias && bias->requires_grad);
    n->backprop = [stride, pad, refl](Node& self) {
        Node& px = *self.parents[0];
        Node& pw = *self.parents[1];
        Node* pb = self.parents.size() > 2 ? self.parents[2].get() : nullptr;
        const Tensor& in = px.value;
        const Tensor& wt = pw.value;
        const Tensor& g = self.grad;
        const int kh = wt.h(), kw = wt.w();
        for (int b = 0; b < in.b(); ++b)
            for (int oc = 0; oc < wt.b(); ++oc)
                for (int oy = 0; oy < g.h(); ++oy)
                    for (int ox = 0; ox < g.w(); ++ox) {
                        double gv = g.at(b, oc, oy, ox);
                        if (gv == 0.0) continue;
                        if (pb) pb->grad.at(0, oc, 0, 0) += gv;
                        for (int ic = 0; ic < in.c(); ++ic)
                            for (int ky = 0; ky < kh; ++ky) {
                                int iy = oy * stride - pad + ky;
                                if (refl) iy = reflect_index(iy, in.h());
                                else if (iy < 0 || iy >= in.h()) continue;
                                for (int kx = 0; kx < kw; ++kx) {
                                    int ix = ox * stride - pad + kx;
                                    if (refl) ix = reflect_index(ix, in.w());
                                    else if (ix < 0 || ix >= in.w()) continue;
                                    pw.grad.at(oc, ic, ky, kx) += gv * in.at(b, ic, iy, ix);
                                    px.grad.at(b, ic, iy, ix) += gv * wt.at(oc, ic, ky, kx);
                                }
                            }
                    }
    };
    return n;
}

// ---------------------------------------------------------------- resampling

Var avgpool2(const Var& x) {
    const Tensor& in = x->value;
    if (in.h() % 2 || in.w() % 2)
        throw std::invalid_argument("avgpool2: odd spatial dims");
    auto n = std::make_shared<Node>();
    n->value = Tensor(in.b(), in.c(), in.h() / 2, in.w() / 2);
    for (int b = 0; b < in.b(); ++b)
        for (int c = 0; c < in.c(); ++c)
            for (int y = 0; y < n->value.h(); ++y)
                for (int xx = 0; xx < n->value.w(); ++xx)
                    n->value.at(b, c, y, xx) =
                        0.25 * (in.at(b, c, 2 * y, 2 * xx) + in.at(b, c, 2 * y, 2 * xx + 1) +
                                in.at(b, c, 2 * y + 1, 2 * xx) + in.at(b, c, 2 * y + 1, 2 * xx + 1));
    n->parents = {x};
    n->requires_grad = x->requires_grad;
    n->backprop = [](Node& self) {
        Tensor& pg = self.parents[0]->grad;
        const Tensor& g = self.grad;
        for (int b = 0; b < g.b(); ++b)
            for (int c = 0; c < g.c(); ++c)
                for (int y = 0; y < g.h(); ++y)
                    for (int xx = 0; xx < g.w(); ++xx) {
                        double gv = 0.25 * g.at(b, c, y, xx);
                        pg.at(b, c, 2 * y, 2 * xx) += gv;
                        pg.at(b, c, 2 * y, 2 * xx + 1) += gv;
                        pg.at(b, c, 2 * y + 1, 2 * xx) += gv;
                        pg.at(b, c, 2 * y + 1, 2 * xx + 1) += gv;
                    }
    };
    return n;
}

namespace {
// source coordinate and clamped taps for bilinear x2, align_corners=false
inline void up2_taps(int o, int n, int& i0, int& i1, double& f) {
    double s = (o + 0.5) / 2.0 - 0.5;
    double fl = std::floor(s);
    i0 = static_cast<int>(fl);
    i1 = i0 + 1;
    f = s - fl;
    i0 = std::clamp(i0, 0, n - 1);
    i1 = std::clamp(i1, 0, n - 1);
}
}  // namespace

Var upsample2(const Var& x) {
    const Tensor& in = x->value;
    auto n = std::make_shared<Node>();
    n->value = Tensor(in.b(), in.c(), in.h() * 2, in.w() * 2);
    for (int b = 0; b < in.b(); ++b)
        for (int c = 0; c < in.c(); ++c)
            for (int y = 0; y < n->value.h(); ++y) {
                int y0, y1;
                double fy;
                up2_taps(y, in.h(), y0, y1, fy);
                for (int xx = 0; xx < n->value.w(); ++xx) {
                    int x0, x1;
                    double fx;
                    up2_taps(xx, in.w(), x0, x1, fx);
                    n->value.at(b, c, y, xx) =
                        (1 - fy) * ((1 - fx) * in.at(b, c, y0, x0) + fx * in.at(b, c, y0, x1)) +
                        fy * ((1 - fx) * in.at(b, c, y1, x0) + fx * in.at(b, c, y1, x1));
                }
            }
    n->parents = {x};
    n->requires_grad = x->requires_grad;
    n->backprop = [](Node& self) {
        Tensor& pg = self.parents[0]->grad;
        const Tensor& g = self.grad;
        for (int b = 0; b < g.b(); ++b)
            for (int c = 0; c < g.c(); ++c)
                for (int y = 0; y < g.h(); ++y) {
                    int y0, y1;
                    double fy;
                    up2_taps(y, pg.h(), y0, y1, fy);
                    for (int xx = 0; xx < g.w(); ++xx) {
                        int x0, x1;
                        double fx;
                        up2_taps(xx, pg.w(), x0, x1, fx);
                        double gv = g.at(b, c, y, xx);
                        pg.at(b, c, y0, x0) += gv * (1 - fy) * (1 - fx);
                        pg.at(b, c, y0, x1) += gv * (1 - fy) * fx;
                        pg.at(b, c, y1, x0) += gv * fy * (1 - fx);
                        pg.at(b, c, y1, x1) += gv * fy * fx;
                    }
                }
    };
    return n;
}

Var decimate2(const Var& x) {
    const Tensor& in = x->value;
    auto n = std::make_shared<Node>();
    n->value = Tensor(in.b(), in.c(), (in.h() + 1) / 2, (in.w() + 1) / 2);
    for (int b = 0; b < in.b(); ++b)
        for (int c = 0; c < in.c(); ++c)
            for (int y = 0; y < n->value.h(); ++y)
                for (int xx = 0; xx < n->value.w(); ++xx)
                    n->value.at(b, c, y, xx) = in.at(b, c, 2 * y, 2 * xx);
    n->parents = {x};
    n->requires_grad = x->requires_grad;
    n->backprop = [](Node& self) {
        Tensor& pg = self.parents[0]->grad;
        const Tensor& g = self.grad;
        for (int b = 0; b < g.b(); ++b)
            for (int c = 0; c < g.c(); ++c)
                for (int y = 0; y < g.h(); ++y)
                    for (int xx = 0; xx < g.w(); ++xx)
                        pg.at(b, c, 2 * y, 2 * xx) += g.at(b, c, y, xx);
    };
    return n;
}

Var backward_warp(const Var& x, const Var& phi) {
    const Tensor& in = x->value;
    const Tensor& f = phi->value;
    if (f.c() != 2 || f.b() != in.b() || f.h() != in.h() || f.w() != in.w())
        throw std::invalid_argument("backward_warp: field must be Bx2xHxW matching image");
    auto n = std::make_shared<Node>();
    n->value = in.zeros_like();
    const int H = in.h(), W = in.w();
    for (int b = 0; b < in.b(); ++b)
        for (int y = 0; y < H; ++y)
            for (int xx = 0; xx < W; ++xx) {
                double sx = xx + f.at(b, 0, y, xx);
                double sy = y + f.at(b, 1, y, xx);
                int x0 = static_cast<int>(std::floor(sx));
                int y0 = static_cast<int>(std::floor(sy));
                double fx = sx - x0, fy = sy - y0;
                for (int c = 0; c < in.c(); ++c) {
                    double acc = 0.0;
                    for (int dy = 0; dy < 2; ++dy) {
                        int yi = y0 + dy;
                        if (yi < 0 || yi >= H) continue;
                        double wy = dy ? fy : 1 - fy;
                        for (int dx = 0; dx < 2; ++dx) {
                            int xi = x0 + dx;
                            if (xi < 0 || xi >= W) continue;
                            acc += wy * (dx ? fx : 1 - fx) * in.at(b, c, yi, xi);
                        }
                    }
                    n->value.at(b, c, y, xx) = acc;
                }
            }
    n->parents = {x, phi};
    n->requires_grad = x->requires_grad || phi->requires_grad;
    n->backprop = [](Node& self) {
        Node& px = *self.parents[0];
        Node& pf = *self.parents[1];
        const Tensor& in = px.value;
        const Tensor& f = pf.value;
        const Tensor& g = self.grad;
        const int H = in.h(), W = in.w();
        for (int b = 0; b < in.b(); ++b)
            for (int y = 0; y < H; ++y)
                for (int xx = 0; xx < W; ++xx) {
                    double sx = xx + f.at(b, 0, y, xx);
                    double sy = y + f.at(b, 1, y, xx);
                    int x0 = static_cast<int>(std::floor(sx));
                    int y0 = static_cast<int>(std::floor(sy));
                    double fx = sx - x0, fy = sy - y0;
                    double du = 0.0, dv = 0.0;
                    for (int c = 0; c < in.c(); ++c) {
                        double gv = g.at(b, c, y, xx);
                        if (gv == 0.0) continue;
                        for (int dy = 0; dy < 2; ++dy) {
                            int yi = y0 + dy;
                            if (yi < 0 || yi >= H) continue;
                            double wy = dy ? fy : 1 - fy;
                            double dwy = dy ? 1.0 : -1.0;
                            for (int dx = 0; dx < 2; ++dx) {
                                int xi = x0 + dx;
                                if (xi < 0 || xi >= W) continue;
                                double wx = dx ? fx : 1 - fx;
                                double dwx = dx ? 1.0 : -1.0;
                                double v = in.at(b, c, yi, xi);
                                px.grad.at(b, c, yi, xi) += gv * wy * wx;
                                du += gv * wy * dwx * v;
                                dv += gv * dwy * wx * v;
                            }
                        }
                    }
                    pf.grad.at(b, 0, y, xx) += du;
                    pf.grad.at(b, 1, y, xx) += dv;
                }
    };
    return n;
}

// ---------------------------------------------------------------- correlation

Var correlation(const Var& f_warp, const Var& f_src, int p) {
    const Tensor& fw = f_warp->value;
    const Tensor& fs = f_src->value;
    require_same_shape(fw, fs, "correlation");
    if (p < 1) throw std::invalid_argument("correlation: p must be >= 1");
    const int K = (2 * p + 1) * (2 * p + 1);
    const int H = fw.h(), W = fw.w(), C = fw.c();
    auto n = std::make_shared<Node>();
    n->value = Tensor(fw.b(), K, H, W);
    for (int b = 0; b < fw.b(); ++b)
        for (int m = 0; m <= 2 * p; ++m)
            for (int nn = 0; nn <= 2 * p; ++nn) {
                int k = m * (2 * p + 1) + nn;
                for (int y = 0; y < H; ++y) {
                    int sy = y + nn - p;
                    for (int xx = 0; xx < W; ++xx) {
                        int sx = xx + m - p;
                        double acc = 0.0;
                        if (sy >= 0 && sy < H && sx >= 0 && sx < W)
                            for (int c = 0; c < C; ++c)
                                acc += fs.at(b, c, sy, sx) * fw.at(b, c, y, xx);
                        n->value.at(b, k, y, xx) = acc / C;
                    }
                }
            }
    n->parents = {f_warp, f_src};
    n->requires_grad = f_warp->requires_grad || f_src->requires_grad;
    n->backprop = [p](Node& self) {
        Node& pw = *self.parents[0];
        Node& ps = *self.parents[1];
        const Tensor& fw = pw.value;
        const Tensor& fs = ps.value;
        const Tensor& g = self.grad;
        const int H = fw.h(), W = fw.w(), C = fw.c();
        for (int b = 0; b < fw.b(); ++b)
            for (int m = 0; m <= 2 * p; ++m)
                for (int nn = 0; nn <= 2 * p; ++nn) {
                    int k = m * (2 * p + 1) + nn;
                    for (int y = 0; y < H; ++y) {
                        int sy = y + nn - p;
                        if (sy < 0 || sy >= H) continue;
                        for (int xx = 0; xx < W; ++xx) {
                            int sx = xx + m - p;
                            if (sx < 0 || sx >= W) continue;
                            double gv = g.at(b, k, y, xx) / C;
                            if (gv == 0.0) continue;
                            for (int c = 0; c < C; ++c) {
                                pw.grad.at(b, c, y, xx) += gv * fs.at(b, c, sy, sx);
                                ps.grad.at(b, c, sy, sx) += gv * fw.at(b, c, y, xx);
                            }
                        }
                    }
                }
    };
    return n;
}

// ---------------------------------------------------------------- pooling

Var global_avg_pool(const Var& x) {
    const Tensor& in = x->value;
    auto n = std::make_shared<Node>();
    n->value = Tensor(in.b(), in.c(), 1, 1);
    const double inv = 1.0 / (in.h() * in.w());
    for (int b = 0; b < in.b(); ++b)
        for (int c = 0; c < in.c(); ++c) {
            double acc = 0;
            const double* p = &in.at(b, c, 0, 0);
            for (int i = 0; i < in.h() * in.w(); ++i) acc += p[i];
            n->value.at(b, c, 0, 0) = acc * inv;
        }
    n->parents = {x};
    n->requires_grad = x->requires_grad;
    n->backprop = [inv](Node& self) {
        Tensor& pg = self.parents[0]->grad;
        for (int b = 0; b < pg.b(); ++b)
            for (int c = 0; c < pg.c(); ++c) {
                double gv = self.grad.at(b, c, 0, 0) * inv;
                double* p = &pg.at(b, c, 0, 0);
                for (int i = 0; i < pg.h() * pg.w(); ++i) p[i] += gv;
            }
    };
    return n;
}

Var channel_max_mean(const Var& x) {
    const Tensor& in = x->value;
    auto n = std::make_shared<Node>();
    n->value = Tensor(in.b(), 2, in.h(), in.w());
    const double inv = 1.0 / in.c();
    for (int b = 0; b < in.b(); ++b)
        for (int y = 0; y < in.h(); ++y)
            for (int xx = 0; xx < in.w(); ++xx) {
                double mx = in.at(b, 0, y, xx), mean = 0;
                for (int c = 0; c < in.c(); ++c) {
                    double v = in.at(b, c, y, xx);
                    mx = std::max(mx, v);
                    mean += v;
                }
                n->value.at(b, 0, y, xx) = mx;
                n->value.at(b, 1, y, xx) = mean * inv;
            }
    n->parents = {x};
    n->requires_grad = x->requires_grad;
    n->backprop = [inv](Node& self) {
        Node& px = *self.parents[0];
        const Tensor& in = px.value;
        for (int b = 0; b < in.b(); ++b)
            for (int y = 0; y < in.h(); ++y)
                for (int xx = 0; xx < in.w(); ++xx) {
                    double gmax = self.grad.at(b, 0, y, xx);
                    double gmean = self.grad.at(b, 1, y, xx) * inv;
                    int arg = 0;
                    double mx = in.at(b, 0, y, xx);
                    for (int c = 1; c < in.c(); ++c)
                        if (in.at(b, c, y, xx) > mx) {
                            mx = in.at(b, c, y, xx);
                            arg = c;
                        }
                    for (int c = 0; c < in.c(); ++c) px.grad.at(b, c, y, xx) += gmean;
                    px.grad.at(b, arg, y, xx) += gmax;
                }
    };
    return n;
}

// ---------------------------------------------------------------- gMLP

Var gmlp(const Var& x, const Var& w1, const Var& w2, const Var& gate,
         const Var& gbias, int s) {
    const Tensor& in = x->value;
    const int C = in.c(), T = s * s;
    if (in.h() % s || in.w() % s)
        throw std::invalid_argument("gmlp: dims not divisible by patch size");
    if (w1->value.h() != C || w1->value.w() != C || w2->value.h() != C || w2->value.w() != C)
        throw std::invalid_argument("gmlp: projection must be CxC");
    if (gate->value.h() != T || gate->value.w() != T)
        throw std::invalid_argument("gmlp: gate must be s^2 x s^2");
    auto n = std::make_shared<Node>();
    n->value = in.zeros_like();
    const Tensor& W1 = w1->value;
    const Tensor& W2 = w2->value;
    const Tensor& G = gate->value;
    const Tensor& gb = gbias->value;

    // scratch per patch: X, A=XW1, B2=XW2, Z=G*B2+gb, out=A*relu(Z)
    std::vector<double> X(T * C), A(T * C), B2(T * C), Z(T * C);
    for (int b = 0; b < in.b(); ++b)
        for (int py = 0; py < in.h() / s; ++py)
            for (int px = 0; px < in.w() / s; ++px) {
                for (int t = 0; t < T; ++t) {
                    int y = py * s + t / s, xx = px * s + t % s;
                    for (int c = 0; c < C; ++c) X[t * C + c] = in.at(b, c, y, xx);
                }
                for (int t = 0; t < T; ++t)
                    for (int c = 0; c < C; ++c) {
                        double a = 0, bb2 = 0;
                        for (int r = 0; r < C; ++r) {
                            a += X[t * C + r] * W1.at(0, 0, r, c);
                            bb2 += X[t * C + r] * W2.at(0, 0, r, c);
                        }
                        A[t * C + c] = a;
                        B2[t * C + c] = bb2;
                    }
                for (int t = 0; t < T; ++t)
                    for (int c = 0; c < C; ++c) {
                        double z = gb.at(0, 0, t, 0);
                        for (int u = 0; u < T; ++u) z += G.at(0, 0, t, u) * B2[u * C + c];
                        Z[t * C + c] = z;
                    }
                for (int t = 0; t < T; ++t) {
                    int y = py * s + t / s, xx = px * s + t % s;
                    for (int c = 0; c < C; ++c)
                        n->value.at(b, c, y, xx) =
                            A[t * C + c] * std::max(0.0, Z[t * C + c]);
                }
            }

    n->parents = {x, w1, w2, gate, gbias};
    n->requires_grad = true;
    n->backprop = [s](Node& self) {
        Node& px = *self.parents[0];
        Node& pw1 = *self.parents[1];
        Node& pw2 = *self.parents[2];
        Node& pg = *self.parents[3];
        Node& pgb = *self.parents[4];
        const Tensor& in = px.value;
        const Tensor& W1 = pw1.value;
        const Tensor& W2 = pw2.value;
        const Tensor& G = pg.value;
        const Tensor& gb = pgb.value;
        const int C = in.c(), T = s * s;
        std::vector<double> X(T * C), A(T * C), B2(T * C), Z(T * C);
        std::vector<double> dA(T * C), dZ(T * C), dB2(T * C), dX(T * C);
        for (int b = 0; b < in.b(); ++b)
            for (int py = 0; py < in.h() / s; ++py)
                for (int px2 = 0; px2 < in.w() / s; ++px2) {
                    // recompute forward intermediates
                    for (int t = 0; t < T; ++t) {
                        int y = py * s + t / s, xx = px2 * s + t % s;
                        for (int c = 0; c < C; ++c) X[t * C + c] = in.at(b, c, y, xx);
                    }
                    for (int t = 0; t < T; ++t)
                        for (int c = 0; c < C; ++c) {
                            double a = 0, bb2 = 0;
                            for (int r = 0; r < C; ++r) {
                                a += X[t * C + r] * W1.at(0, 0, r, c);
                                bb2 += X[t * C + r] * W2.at(0, 0, r, c);
                            }
                            A[t * C + c] = a;
                            B2[t * C + c] = bb2;
                        }
                    for (int t = 0; t < T; ++t)
                        for (int c = 0; c < C; ++c) {
                            double z = gb.at(0, 0, t, 0);
                            for (int u = 0; u < T; ++u) z += G.at(0, 0, t, u) * B2[u * C + c];
                            Z[t * C + c] = z;
                        }
                    // backward
                    for (int t = 0; t < T; ++t) {
                        int y = py * s + t / s, xx = px2 * s + t % s;
                        for (int c = 0; c < C; ++c) {
                            double go = self.grad.at(b, c, y, xx);
                            double zr = std::max(0.0, Z[t * C + c]);
                            dA[t * C + c] = go * zr;
                            dZ[t * C + c] = (Z[t * C + c] > 0) ? go * A[t * C + c] : 0.0;
                        }
                    }
                    for (int t = 0; t < T; ++t)
                        for (int c = 0; c < C; ++c) {
                            double v = dZ[t * C + c];
                            if (v != 0.0) {
                                pgb.grad.at(0, 0, t, 0) += v;
                                for (int u = 0; u < T; ++u)
                                    pg.grad.at(0, 0, t, u) += v * B2[u * C + c];
                            }
                        }
                    for (int u = 0; u < T; ++u)
                        for (int c = 0; c < C; ++c) {
                            double acc = 0;
                            for (int t = 0; t < T; ++t) acc += G.at(0, 0, t, u) * dZ[t * C + c];
                            dB2[u * C + c] = acc;
                        }
                    for (int t = 0; t < T; ++t)
                        for (int r = 0; r < C; ++r) {
                            double xv = X[t * C + r];
                            double acc = 0;
                            for (int c = 0; c < C; ++c) {
                                pw1.grad.at(0, 0, r, c) += xv * dA[t * C + c];
                                pw2.grad.at(0, 0, r, c) += xv * dB2[t * C + c];
                                acc += dA[t * C + c] * W1.at(0, 0, r, c) +
                                       dB2[t * C + c] * W2.at(0, 0, r, c);
                            }
                            dX[t * C + r] = acc;
                        }
                    for (int t = 0; t < T; ++t) {
                        int y = py * s + t / s, xx = px2 * s + t % s;
                        for (int c = 0; c < C; ++c)
                            px.grad.at(b, c, y, xx) += dX[t * C + c];
                    }
                }
    };
    return n;
}

Var softmax_weighted_sum(const std::vector<Var>& xs, const Var& logits) {
    const int S = static_cast<int>(xs.size());
    if (logits->value.size() != static_cast<size_t>(S))
        throw std::invalid_argument("softmax_weighted_sum: logit count mismatch");
    for (int i = 1; i < S; ++i) require_same_shape(xs[0]->value, xs[i]->value, "softmax_weighted_sum");
    std::vector<double> w(S);
    double mx = logits->value[0];
    for (int i = 1; i < S; ++i) mx = std::max(mx, logits->value[static_cast<size_t>(i)]);
    double sum = 0;
    for (int i = 0; i < S; ++i) {
        w[i] = std::exp(logits->value[static_cast<size_t>(i)] - mx);
        sum += w[i];
    }
    for (int i = 0; i < S; ++i) w[i] /= sum;

    auto n = std::make_shared<Node>();
    n->value = xs[0]->value.zeros_like();
    for (int i = 0; i < S; ++i)
        for (size_t j = 0; j < n->value.size(); ++j)
            n->value[j] += w[i] * xs[i]->value[j];
    n->parents = xs;
    n->parents.push_back(logits);
    n->requires_grad = true;
    n->backprop = [w, S](Node& self) {
        Node& pl = *self.parents[S];
        std::vector<double> dw(S, 0.0);
        for (int i = 0; i < S; ++i) {
            Node& pi = *self.parents[i];
            double acc = 0;
            for (size_t j = 0; j < self.grad.size(); ++j) {
                pi.grad[j] += w[i] * self.grad[j];
                acc += self.grad[j] * pi.value[j];
            }
            dw[i] = acc;
        }
        for (int k = 0; k < S; ++k) {
            double acc = 0;
            for (int i = 0; i < S; ++i)
                acc += dw[i] * w[i] * ((i == k ? 1.0 : 0.0) - w[k]);
            pl.grad[static_cast<size_t>(k)] += acc;
        }
    };
    return n;
}

// ---------------------------------------------------------------- reductions

Var sum_all(const Var& a) {
    auto n = std::make_shared<Node>();
    double acc = 0;
    for (size_t i = 0; i < a->value.size(); ++i) acc += a->value[i];
    n->value = Tensor::scalar(acc);
    n->parents = {a};
    n->requires_grad = a->requires_grad;
    n->backprop = [](Node& self) {
        Tensor& pg = self.parents[0]->grad;
        double g = self.grad[0];
        for (size_t i = 0; i < pg.size(); ++i) pg[i] += g;
    };
    return n;
}

Var mean_all(const Var& a) { return scale(sum_all(a), 1.0 / a->value.size()); }

Var mean_abs(const Var& a) {
    auto n = std::make_shared<Node>();
    double acc = 0;
    for (size_t i = 0; i < a->value.size(); ++i) acc += std::fabs(a->value[i]);
    n->value = Tensor::scalar(acc / a->value.size());
    n->parents = {a};
    n->requires_grad = a->requires_grad;
    n->backprop = [](Node& self) {
        Node& p = *self.parents[0];
        double g = self.grad[0] / p.value.size();
        for (size_t i = 0; i < p.grad.size(); ++i) {
            double v = p.value[i];
            p.grad[i] += g * (v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0));
        }
    };
    return n;
}

Var rms(const Var& a) {
    auto n = std::make_shared<Node>();
    double acc = 0;
    for (size_t i = 0; i < a->value.size(); ++i) acc += a->value[i] * a->value[i];
    double m = acc / a->value.size() + 1e-24;
    n->value = Tensor::scalar(std::sqrt(m));
    n->parents = {a};
    n->requires_grad = a->requires_grad;
    n->backprop = [](Node& self) {
        Node& p = *self.parents[0];
        double r = self.value[0];
        double g = self.grad[0] / (r * p.value.size());
        for (size_t i = 0; i < p.grad.size(); ++i) p.grad[i] += g * p.value[i];
    };
    return n;
}

namespace {
// cached DFT basis: cos/sin tables for size n; e^{-2*pi*i*k*y/n}
struct DftBasis {
    std::vector<double> cs, sn;  // [k*n + y]
};
const DftBasis& dft_basis(int n) {
    static std::map<int, DftBasis> cache;
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;
    DftBasis b;
    b.cs.resize(static_cast<size_t>(n) * n);
    b.sn.resize(static_cast<size_t>(n) * n);
    for (int k = 0; k < n; ++k)
        for (int y = 0; y < n; ++y) {
            double a = -2.0 * M_PI * k * y / n;
            b.cs[static_cast<size_t>(k) * n + y] = std::cos(a);
            b.sn[static_cast<size_t>(k) * n + y] = std::sin(a);
        }
    return cache.emplace(n, std::move(b)).first->second;
}

// F = Wh * X * Ww for one real HxW slice; out re/im are HxW
void dft2(const double* x, int H, int W, std::vector<double>& re, std::vector<double>& im) {
    const DftBasis& bh = dft_basis(H);
    const DftBasis& bw = dft_basis(W);
    std::vector<double> tre(static_cast<size_t>(H) * W), tim(static_cast<size_t>(H) * W);
    // T = X * Ww   (rows transformed along width)
    for (int y = 0; y < H; ++y)
        for (int l = 0; l < W; ++l) {
            double r = 0, i = 0;
            for (int xx = 0; xx < W; ++xx) {
                double v = x[y * W + xx];
                r += v * bw.cs[static_cast<size_t>(l) * W + xx];
                i += v * bw.sn[static_cast<size_t>(l) * W + xx];
            }
            tre[static_cast<size_t>(y) * W + l] = r;
            tim[static_cast<size_t>(y) * W + l] = i;
        }
    // F = Wh * T
    for (int k = 0; k < H; ++k)
        for (int l = 0; l < W; ++l) {
            double r = 0, i = 0;
            for (int y = 0; y < H; ++y) {
                double cr = bh.cs[static_cast<size_t>(k) * H + y];
                double ci = bh.sn[static_cast<size_t>(k) * H + y];
                double vr = tre[static_cast<size_t>(y) * W + l];
                double vi = tim[static_cast<size_t>(y) * W + l];
                r += cr * vr - ci * vi;
                i += cr * vi + ci * vr;
            }
            re[static_cast<size_t>(k) * W + l] = r;
            im[static_cast<size_t>(k) * W + l] = i;
        }
}
}  // namespace

Var spectral_abs_mean(const Var& a) {
    const Tensor& in = a->value;
    const int H = in.h(), W = in.w();
    auto n = std::make_shared<Node>();
    double acc = 0;
    std::vector<double> re(static_cast<size_t>(H) * W), im(static_cast<size_t>(H) * W);
    for (int b = 0; b < in.b(); ++b)
        for (int c = 0; c < in.c(); ++c) {
            dft2(&in.at(b, c, 0, 0), H, W, re, im);
            for (size_t i = 0; i < re.size(); ++i)
                acc += std::fabs(re[i]) + std::fabs(im[i]);
        }
    n->value = Tensor::scalar(acc / in.size());
    n->parents = {a};
    n->requires_grad = a->requires_grad;
    n->backprop = [H, W](Node& self) {
        Node& p = *self.parents[0];
        const Tensor& in = p.value;
        const DftBasis& bh = dft_basis(H);
        const DftBasis& bw = dft_basis(W);
        double g = self.grad[0] / in.size();
        const size_t HW = static_cast<size_t>(H) * W;
        std::vector<double> re(HW), im(HW), tre(HW), tim(HW);
        for (int b = 0; b < in.b(); ++b)
            for (int c = 0; c < in.c(); ++c) {
                dft2(&in.at(b, c, 0, 0), H, W, re, im);
                for (size_t i = 0; i < HW; ++i) {
                    re[i] = re[i] > 0 ? 1.0 : (re[i] < 0 ? -1.0 : 0.0);  // dL/dF_re
                    im[i] = im[i] > 0 ? 1.0 : (im[i] < 0 ? -1.0 : 0.0);  // dL/dF_im
                }
                // dT = Wh^T-combinations of dF (see dft2 for the layer split)
                for (int y = 0; y < H; ++y)
                    for (int l = 0; l < W; ++l) {
                        double r = 0, i2 = 0;
                        for (int k = 0; k < H; ++k) {
                            double cr = bh.cs[static_cast<size_t>(k) * H + y];
                            double ci = bh.sn[static_cast<size_t>(k) * H + y];
                            size_t idx = static_cast<size_t>(k) * W + l;
                            r += cr * re[idx] + ci * im[idx];
                            i2 += -ci * re[idx] + cr * im[idx];
                        }
                        tre[static_cast<size_t>(y) * W + l] = r;
                        tim[static_cast<size_t>(y) * W + l] = i2;
                    }
                // dX = dT_re * Ww_re^T + dT_im * Ww_im^T
                for (int y = 0; y < H; ++y)
                    for (int xx = 0; xx < W; ++xx) {
                        double acc = 0;
                        for (int l = 0; l < W; ++l) {
                            size_t idx = static_cast<size_t>(y) * W + l;
                            acc += tre[idx] * bw.cs[static_cast<size_t>(l) * W + xx] +
                                   tim[idx] * bw.sn[static_cast<size_t>(l) * W + xx];
                        }
                        p.grad.at(b, c, y, xx) += g * acc;
                    }
            }
    };
    return n;
}

}  // namespace fr
