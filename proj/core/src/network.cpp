#include "fr/network.hpp"

#include "fr/warp.hpp"

namespace fr {

Var& ParamStore::at(const std::string& name) {
    auto it = params.find(name);
    if (it == params.end()) throw std::out_of_range("param not found: " + name);
    return it->second;
}

const Var& ParamStore::at(const std::string& name) const {
    auto it = params.find(name);
    if (it == params.end()) throw std::out_of_range("param not found: " + name);
    return it->second;
}

void ParamStore::add(const std::string& name, Tensor init) {
    if (params.count(name)) throw std::invalid_argument("duplicate param: " + name);
    params.emplace(name, make_leaf(std::move(init), true));
}

namespace {

Tensor he_init(int co, int ci, int kh, int kw, Rng& rng) {
    Tensor t(co, ci, kh, kw);
    std::normal_distribution<double> d(0.0, std::sqrt(2.0 / (ci * kh * kw)));
    for (size_t i = 0; i < t.size(); ++i) t[i] = d(rng);
    return t;
}

Tensor matrix_init(int n, int m, double std, Rng& rng) {
    Tensor t(1, 1, n, m);
    std::normal_distribution<double> d(0.0, std);
    for (size_t i = 0; i < t.size(); ++i) t[i] = d(rng);
    return t;
}

void add_conv(ParamStore& ps, const std::string& name, int co, int ci, int k, Rng& rng,
              bool zero = false) {
    ps.add(name + ".w", zero ? Tensor(co, ci, k, k) : he_init(co, ci, k, k, rng));
    ps.add(name + ".b", Tensor(1, co, 1, 1));
}

Var conv_from(ParamStore& ps, const std::string& name, const Var& x, int stride, int pad) {
    return conv2d(x, ps.at(name + ".w"), ps.at(name + ".b"), stride, pad);
}

int corr_channels(const RunConfig& cfg) {
    int d = 2 * cfg.correlation_range + 1;
    return d * d;
}

}  // namespace

ParamStore init_network_params(const RunConfig& cfg, Rng& rng) {
    cfg.validate();
    if (cfg.mrb_variant != MrbVariant::Gmlp && !cfg.no_mrb)
        throw std::runtime_error("mrb variant not implemented");
    ParamStore ps;
    const int N = cfg.pyramid_depth;
    const int C0 = cfg.base_channels;

    for (const char* stream : {"f", "vi", "ir"}) {
        std::string fe = std::string("fe.") + stream;
        add_conv(ps, fe + ".s0.c0", C0, 3, 3, rng);
        add_conv(ps, fe + ".s0.c1", C0, C0, 3, rng);
        for (int i = 1; i < N; ++i) {
            int ci = C0 << i, cp = C0 << (i - 1);
            std::string s = fe + ".s" + std::to_string(i);
            add_conv(ps, s + ".c0", ci, 3, 3, rng);
            add_conv(ps, s + ".c1", ci, ci, 3, rng);
            add_conv(ps, s + ".reduce", ci, cp, 3, rng);
            add_conv(ps, s + ".fuse", ci, 2 * ci, 3, rng);
        }
    }

    for (int i = 0; i < N; ++i) {
        int ci = C0 << i;
        std::string s = "loc.s" + std::to_string(i);
        add_conv(ps, s + ".c0", ci, 3 * ci, 3, rng);
        add_conv(ps, s + ".c1", ci, ci, 3, rng);
        add_conv(ps, s + ".c2", ci, ci, 3, rng);
        // The flow head is zero-initialized so the untrained network is the
        // identity registrar (phi = 0 blends two identity warps regardless of
        // M). The mask head is NOT zero-initialized: M identically 0.5 with
        // phi = 0 is an exact saddle of the bidirectional blend (the +phi and
        // -phi branch gradients cancel), which would freeze the whole
        // localization subnet.
        add_conv(ps, s + ".mask", 1, ci, 3, rng);
        add_conv(ps, s + ".flow", 2, ci, 3, rng, /*zero=*/true);
    }

    if (!cfg.no_mrb) {
        const int K = corr_channels(cfg);
        for (int i = 0; i < N; ++i) {
            int ci = C0 << i;
            std::string s = "mrb.s" + std::to_string(i);
            add_conv(ps, s + ".comp", ci, 3 * ci + 2 * K, 3, rng);
            for (int sc : cfg.patch_scales) {
                std::string g = s + ".g" + std::to_string(sc);
                ps.add(g + ".w1", matrix_init(ci, ci, std::sqrt(1.0 / ci), rng));
                ps.add(g + ".w2", matrix_init(ci, ci, std::sqrt(1.0 / ci), rng));
                // gate matrix near zero, unit gate bias: early training is
                // close to identity gating
                ps.add(g + ".gate", matrix_init(sc * sc, sc * sc, 1e-3, rng));
                ps.add(g + ".gbias", Tensor(1, 1, sc * sc, 1, 1.0));
            }
            ps.add(s + ".logits", Tensor(1, static_cast<int>(cfg.patch_scales.size()), 1, 1));
            add_conv(ps, s + ".vi_att", ci, ci, 1, rng);
            add_conv(ps, s + ".ir_att", 1, 2, 3, rng);
            add_conv(ps, s + ".bias0", ci, ci, 3, rng);
            add_conv(ps, s + ".bias1", 3, ci, 3, rng, /*zero=*/true);
        }
    }
    return ps;
}

std::vector<Var> image_pyramid(const Var& img, int depth) {
    std::vector<Var> out{img};
    for (int i = 1; i < depth; ++i) out.push_back(avgpool2(out.back()));
    return out;
}

std::vector<Var> extract_pyramid(const std::vector<Var>& images, const std::string& stream,
                                 ParamStore& ps, const RunConfig& cfg) {
    if (stream != "f" && stream != "vi" && stream != "ir")
        throw std::invalid_argument("extract_pyramid: unknown stream " + stream);
    if (static_cast<int>(images.size()) != cfg.pyramid_depth)
        throw std::invalid_argument("extract_pyramid: pyramid depth mismatch");
    std::string fe = "fe." + stream;
    std::vector<Var> feats;
    Var f0 = relu(conv_from(ps, fe + ".s0.c0", images[0], 1, 1));
    f0 = relu(conv_from(ps, fe + ".s0.c1", f0, 1, 1));
    feats.push_back(f0);
    for (int i = 1; i < cfg.pyramid_depth; ++i) {
        std::string s = fe + ".s" + std::to_string(i);
        Var a = relu(conv_from(ps, s + ".c0", images[i], 1, 1));
        a = relu(conv_from(ps, s + ".c1", a, 1, 1));
        Var b = relu(conv_from(ps, s + ".reduce", feats[i - 1], 2, 1));
        feats.push_back(relu(conv_from(ps, s + ".fuse", concat_channels({a, b}), 1, 1)));
    }
    return feats;
}

std::vector<std::pair<Var, Var>> localize(const std::vector<Var>& feat_f,
                                          const std::vector<Var>& feat_vi,
                                          const std::vector<Var>& feat_ir, ParamStore& ps,
                                          const RunConfig& cfg) {
    const int N = cfg.pyramid_depth;
    if (static_cast<int>(feat_f.size()) != N || static_cast<int>(feat_vi.size()) != N ||
        static_cast<int>(feat_ir.size()) != N)
        throw std::invalid_argument("localize: scale count mismatch");
    std::vector<Var> masks(N), raw(N);
    for (int i = 0; i < N; ++i) {
        std::string s = "loc.s" + std::to_string(i);
        Var x = concat_channels({feat_f[i], feat_vi[i], feat_ir[i]});
        x = relu(conv_from(ps, s + ".c0", x, 1, 1));
        x = relu(conv_from(ps, s + ".c1", x, 1, 1));
        x = relu(conv_from(ps, s + ".c2", x, 1, 1));
        masks[i] = sigmoid(conv_from(ps, s + ".mask", x, 1, 1));
        raw[i] = conv_from(ps, s + ".flow", x, 1, 1);
    }
    // coarse-to-fine refinement; coarsest scale stays raw
    std::vector<Var> fields(N);
    fields[N - 1] = raw[N - 1];
    for (int i = N - 2; i >= 0; --i)
        fields[i] = cfg.additive_refine ? compose_fields_additive(raw[i], fields[i + 1])
                                        : compose_fields(raw[i], fields[i + 1]);
    std::vector<std::pair<Var, Var>> out(N);
    for (int i = 0; i < N; ++i) out[i] = {masks[i], fields[i]};
    return out;
}

MrbOut mrb_forward(const Var& f_warp, const Var& f_vi, const Var& f_ir, const Var& i_warp,
                   int level, ParamStore& ps, const RunConfig& cfg) {
    std::string s = "mrb.s" + std::to_string(level);
    const int p = cfg.correlation_range;
    Var cor_vi = correlation(f_warp, f_vi, p);
    Var cor_ir = correlation(f_warp, f_ir, p);
    Var x = concat_channels({f_warp, f_vi, f_ir, cor_vi, cor_ir});
    x = relu(conv_from(ps, s + ".comp", x, 1, 1));

    std::vector<Var> branches;
    for (int sc : cfg.patch_scales) {
        std::string g = s + ".g" + std::to_string(sc);
        Var b = x;
        int ph = (sc - x->value.h() % sc) % sc;
        int pw = (sc - x->value.w() % sc) % sc;
        if (ph || pw) b = pad_reflect(b, 0, ph, 0, pw);
        b = gmlp(b, ps.at(g + ".w1"), ps.at(g + ".w2"), ps.at(g + ".gate"), ps.at(g + ".gbias"),
                 sc);
        if (ph || pw) b = crop2d(b, 0, 0, x->value.h(), x->value.w());
        branches.push_back(b);
    }
    Var f_gmlp = softmax_weighted_sum(branches, ps.at(s + ".logits"));

    Var vi_att = add_scalar(
        sigmoid(conv_from(ps, s + ".vi_att", global_avg_pool(f_gmlp), 1, 0)), 1.0);
    Var f_fvi = mul(f_gmlp, vi_att);
    Var ir_att = add_scalar(
        sigmoid(conv_from(ps, s + ".ir_att", channel_max_mean(f_gmlp), 1, 1)), 1.0);
    Var f_fir = mul(f_gmlp, ir_att);
    Var f_ff = add(f_gmlp, add(f_fvi, f_fir));

    Var h = relu(conv_from(ps, s + ".bias0", f_ff, 1, 1));
    Var i_bias = conv_from(ps, s + ".bias1", h, 1, 1);
    return {f_ff, i_bias, add(i_warp, i_bias)};
}

std::vector<ScaleOutput> forward(const Var& i_vi, const Var& i_ir, const Var& i_f,
                                 ParamStore& ps, const RunConfig& cfg) {
    const int N = cfg.pyramid_depth;
    require_same_shape(i_vi->value, i_f->value, "forward");
    require_same_shape(i_ir->value, i_f->value, "forward");
    auto pyr_f = image_pyramid(i_f, N);
    auto pyr_vi = image_pyramid(i_vi, N);
    auto pyr_ir = image_pyramid(i_ir, N);
    auto feat_f = extract_pyramid(pyr_f, "f", ps, cfg);
    auto feat_vi = extract_pyramid(pyr_vi, "vi", ps, cfg);
    auto feat_ir = extract_pyramid(pyr_ir, "ir", ps, cfg);
    auto estimates = localize(feat_f, feat_vi, feat_ir, ps, cfg);

    std::vector<ScaleOutput> out(N);
    for (int i = 0; i < N; ++i) {
        auto& [mask, field] = estimates[i];
        ScaleOutput& so = out[i];
        so.mask = mask;
        so.field = field;
        if (cfg.one_way_warp) {
            so.i_warp = backward_warp(pyr_f[i], field);
            so.f_warp = backward_warp(feat_f[i], field);
        } else {
            so.i_warp = bidirectional_blend(pyr_f[i], field, mask);
            so.f_warp = bidirectional_blend(feat_f[i], field, mask);
        }
        if (cfg.no_mrb) {
            so.i_bias = make_const(so.i_warp->value.zeros_like());
            so.i_out = so.i_warp;
        } else {
            MrbOut m = mrb_forward(so.f_warp, feat_vi[i], feat_ir[i], so.i_warp, i, ps, cfg);
            so.i_bias = m.i_bias;
            so.i_out = m.i_out;
        }
    }
    return out;
}

}  // namespace fr
