#include "fr/selftest.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "fr/losses.hpp"
#include "fr/metrics.hpp"
#include "fr/oracles.hpp"
#include "fr/warp.hpp"

namespace fr {

namespace {

Tensor random_tensor(int b, int c, int h, int w, Rng& rng, double lo = 0.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    Tensor t(b, c, h, w);
    for (size_t i = 0; i < t.size(); ++i) t[i] = u(rng);
    return t;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    double m = 0;
    for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

// central finite differences of a scalar-valued graph against the analytic
// gradient of `wrt`; returns max relative error over `probes` entries
double grad_check(const std::function<Var()>& build, const Var& wrt, Rng& rng, int probes = 24,
                  double h = 1e-6) {
    Var loss = build();
    backward(loss);
    Tensor analytic = wrt->grad;
    std::uniform_int_distribution<size_t> pick(0, wrt->value.size() - 1);
    double worst = 0;
    for (int i = 0; i < probes; ++i) {
        size_t j = pick(rng);
        double orig = wrt->value[j];
        wrt->value[j] = orig + h;
        double up = build()->value[0];
        wrt->value[j] = orig - h;
        double dn = build()->value[0];
        wrt->value[j] = orig;
        double numeric = (up - dn) / (2 * h);
        double denom = std::max({std::fabs(numeric), std::fabs(analytic[j]), 1e-6});
        worst = std::max(worst, std::fabs(numeric - analytic[j]) / denom);
    }
    return worst;
}

struct Check {
    std::vector<std::string> failures;
    void expect(bool ok, const std::string& what) {
        if (!ok) failures.push_back(what);
    }
    void expect_near(double got, double want, double tol, const std::string& what) {
        if (!(std::fabs(got - want) <= tol)) {
            std::ostringstream o;
            o << what << " (got " << got << ", want " << want << " +/- " << tol << ")";
            failures.push_back(o.str());
        }
    }
};

SelftestGroup finish(const std::string& name, Check& c) {
    SelftestGroup g;
    g.name = name;
    g.passed = c.failures.empty();
    if (!g.passed) {
        std::ostringstream o;
        for (const auto& f : c.failures) o << f << "; ";
        g.detail = o.str();
    }
    return g;
}

SelftestGroup warp_identity_group(Rng& rng, bool corrupt) {
    Check c;
    Tensor img = random_tensor(1, 3, 12, 12, rng);
    Tensor zero_field(1, 2, 12, 12);
    c.expect(max_abs_diff(warp_tensor(img, zero_field), img) <= 1e-12,
             "identity field must reproduce the input");

    // unit horizontal shift of an index ramp
    Tensor ramp(1, 1, 8, 8);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) ramp.at(0, 0, y, x) = x;
    Tensor shift(1, 2, 8, 8);
    double sign = corrupt ? -1.0 : 1.0;
    for (size_t i = 0; i < 64; ++i) shift[i] = sign;  // channel 0 only
    Tensor warped = warp_tensor(ramp, shift);
    bool ramp_ok = true;
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 7; ++x)
            if (std::fabs(warped.at(0, 0, y, x) - (x + 1)) > 1e-9) ramp_ok = false;
    c.expect(ramp_ok, "unit shift on a ramp must add one in the interior");

    // blend output lies between the two branch warps
    Tensor phi = random_tensor(1, 2, 8, 8, rng, -1.5, 1.5);
    Tensor m = random_tensor(1, 1, 8, 8, rng);
    Tensor fwd = warp_tensor(ramp, phi);
    Tensor nphi = phi;
    for (size_t i = 0; i < nphi.size(); ++i) nphi[i] = -nphi[i];
    Tensor rev = warp_tensor(ramp, nphi);
    Tensor blend =
        bidirectional_blend(make_const(ramp), make_const(phi), make_const(m))->value;
    bool convex = true;
    for (size_t i = 0; i < blend.size(); ++i) {
        double lo = std::min(fwd[i], rev[i]) - 1e-9, hi = std::max(fwd[i], rev[i]) + 1e-9;
        if (blend[i] < lo || blend[i] > hi) convex = false;
    }
    c.expect(convex, "bidirectional blend must stay between its branches");

    // field composition identities
    Tensor fine = random_tensor(1, 2, 8, 8, rng, -1, 1);
    Tensor coarse_zero(1, 2, 4, 4);
    c.expect(max_abs_diff(
                 compose_fields(make_const(fine), make_const(coarse_zero))->value, fine) <= 1e-12,
             "zero coarse field must leave the fine field unchanged");
    Tensor ones_fine(1, 2, 8, 8, 1.0);
    Tensor half_coarse(1, 2, 4, 4, 0.5);
    Tensor comp = compose_fields(make_const(ones_fine), make_const(half_coarse))->value;
    c.expect_near(comp[0], 2.0, 1e-12, "1*(1+2*0.5) composition");
    return finish("warp-identity", c);
}

SelftestGroup warp_gradient_group(Rng& rng) {
    Check c;
    Var x = make_leaf(random_tensor(1, 2, 8, 8, rng), true);
    Var phi = make_leaf(random_tensor(1, 2, 8, 8, rng, -1.3, 1.3), true);
    Var src = make_leaf(random_tensor(1, 2, 8, 8, rng), true);
    auto warp_loss = [&] { return rms(backward_warp(x, phi)); };
    c.expect(grad_check(warp_loss, x, rng) < 1e-3, "warp gradient w.r.t. image");
    c.expect(grad_check(warp_loss, phi, rng) < 1e-3, "warp gradient w.r.t. field");
    auto corr_loss = [&] { return rms(correlation(x, src, 1)); };
    c.expect(grad_check(corr_loss, x, rng) < 1e-3, "correlation gradient w.r.t. warp feature");
    c.expect(grad_check(corr_loss, src, rng) < 1e-3, "correlation gradient w.r.t. source");
    return finish("warp-gradients", c);
}

SelftestGroup loss_oracle_group(Rng& rng) {
    Check c;
    std::vector<Tensor> out_t, warp_t, gt_t, mask_t;
    std::vector<Var> out_v, warp_v, gt_v, mask_v;
    for (int i = 0; i < 2; ++i) {
        int n = 8 >> i;
        out_t.push_back(random_tensor(1, 3, n, n, rng));
        warp_t.push_back(random_tensor(1, 3, n, n, rng));
        gt_t.push_back(random_tensor(1, 3, n, n, rng));
        mask_t.push_back(random_tensor(1, 1, n, n, rng));
        out_v.push_back(make_const(out_t.back()));
        warp_v.push_back(make_const(warp_t.back()));
        gt_v.push_back(make_const(gt_t.back()));
        mask_v.push_back(make_const(mask_t.back()));
    }
    c.expect_near(edge_loss(out_v, warp_v, gt_v)->value[0],
                  oracle::edge_loss(out_t, warp_t, gt_t), 1e-6, "edge loss vs oracle");
    c.expect_near(global_loss(out_v, gt_v)->value[0], oracle::global_loss(out_t, gt_t), 1e-6,
                  "global loss vs oracle");
    c.expect_near(frequency_loss(out_v, gt_v)->value[0], oracle::frequency_loss(out_t, gt_t),
                  1e-5, "frequency loss vs DFT oracle");
    c.expect_near(detail_loss(out_v, gt_v, mask_v)->value[0],
                  oracle::detail_loss(out_t, gt_t, mask_t), 1e-6, "detail loss vs oracle");

    // gradient checks for each component
    Var probe = make_leaf(out_t[0], true);
    std::vector<Var> probe_list{probe, out_v[1]};
    auto with = [&](std::function<Var()> f) { return f; };
    c.expect(grad_check(with([&] { return edge_loss(probe_list, warp_v, gt_v); }), probe, rng) <
                 1e-3,
             "edge loss gradient");
    c.expect(grad_check(with([&] { return global_loss(probe_list, gt_v); }), probe, rng) < 1e-3,
             "global loss gradient");
    c.expect(grad_check(with([&] { return frequency_loss(probe_list, gt_v); }), probe, rng) <
                 1e-3,
             "frequency loss gradient");
    c.expect(grad_check(with([&] { return detail_loss(probe_list, gt_v, mask_v); }), probe, rng) <
                 1e-3,
             "detail loss gradient");
    return finish("loss-oracles", c);
}

SelftestGroup metric_oracle_group(Rng& rng) {
    Check c;
    Tensor flat(1, 1, 16, 16, 0.25);
    c.expect_near(entropy(flat), 0.0, 1e-12, "entropy of a constant");
    c.expect_near(spatial_frequency(flat), 0.0, 1e-12, "SF of a constant");
    c.expect_near(average_gradient(flat), 0.0, 1e-12, "AG of a constant");
    c.expect_near(std_dev(flat), 0.0, 1e-12, "SD of a constant");
    Tensor half(1, 1, 16, 16);
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x) half.at(0, 0, y, x) = (x < 8) ? 0.0 : 1.0;
    c.expect_near(entropy(half), 1.0, 1e-12, "entropy of a two-level image");
    c.expect_near(std_dev(half), 0.5, 1e-12, "SD of a two-level image");
    for (int trial = 0; trial < 4; ++trial) {
        Tensor r = random_tensor(1, 1, 12, 12, rng);
        c.expect_near(spatial_frequency(r), oracle::spatial_frequency(r), 1e-9, "SF vs oracle");
        c.expect_near(average_gradient(r), oracle::average_gradient(r), 1e-9, "AG vs oracle");
        c.expect_near(std_dev(r), oracle::std_dev(r), 1e-12, "SD vs oracle");
    }
    Tensor img = random_tensor(1, 1, 32, 32, rng);
    PriorMap pm = prior_map(img, img, 16, 8);
    bool all_one = true;
    for (double v : pm.ssim)
        if (std::fabs(v - 1.0) > 1e-9) all_one = false;
    c.expect(all_one, "prior map of an image with itself is 1");
    return finish("metric-oracles", c);
}

}  // namespace

std::vector<SelftestGroup> run_selftest(const SelftestOptions& opt) {
    Rng rng(opt.seed);
    std::vector<SelftestGroup> out;
    out.push_back(warp_identity_group(rng, opt.corrupt_warp));
    out.push_back(warp_gradient_group(rng));
    out.push_back(loss_oracle_group(rng));
    out.push_back(metric_oracle_group(rng));
    return out;
}

}  // namespace fr
