#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"

#include "fr/dataset.hpp"
#include "fr/image.hpp"
#include "fr/metrics.hpp"
#include "fr/pipeline.hpp"
#include "fr/selftest.hpp"
#include "fr/simulate.hpp"
#include "fr/train.hpp"
#include "fr/warp.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// every subcommand records its fully resolved configuration for exact reruns
void write_run_record(const fs::path& dir, const std::string& subcommand,
                      const fr::RunConfig& cfg, const json& extra = {}) {
    fs::create_directories(dir);
    json j = {{"subcommand", subcommand},
              {"config", cfg.to_text()},
              {"config_hash", cfg.hash()}};
    for (auto& [k, v] : extra.items()) j[k] = v;
    std::ofstream(dir / "run.json") << j.dump(2) << "\n";
}

void add_config_flags(CLI::App* app, std::string& config_file,
                      std::vector<std::string>& overrides, bool& desk) {
    app->add_option("--config", config_file, "config file of key = value lines");
    app->add_option("--set", overrides, "config override KEY=VALUE (repeatable)");
    app->add_flag("--desk", desk, "start from the desk-scale preset");
}

fr::RunConfig resolve_config(const std::string& config_file,
                             const std::vector<std::string>& overrides, bool desk) {
    fr::RunConfig cfg = desk ? fr::RunConfig::desk_preset() : fr::RunConfig{};
    if (!config_file.empty()) cfg = fr::load_config_file(config_file, cfg);
    for (const auto& o : overrides) {
        size_t eq = o.find('=');
        if (eq == std::string::npos)
            throw CLI::ValidationError("--set", "expected KEY=VALUE, got " + o);
        fr::apply_override(cfg, o.substr(0, eq), o.substr(eq + 1));
    }
    cfg.validate();
    return cfg;
}

void save_field_outputs(const fr::RegisterResult& r, const fs::path& out_dir) {
    fr::save_image(r.out, out_dir / "I_out.png");
    fr::save_image(r.mask, out_dir / "mask.png");

    double mx = 1e-12;
    fr::Tensor mag(1, 1, r.field.h(), r.field.w());
    for (int y = 0; y < mag.h(); ++y)
        for (int x = 0; x < mag.w(); ++x) {
            double u = r.field.at(0, 0, y, x), v = r.field.at(0, 1, y, x);
            mag.at(0, 0, y, x) = std::sqrt(u * u + v * v);
            mx = std::max(mx, mag.at(0, 0, y, x));
        }
    for (size_t i = 0; i < mag.size(); ++i) mag[i] /= mx;
    fr::save_image(mag, out_dir / "field.png");

    std::ofstream csv(out_dir / "field.csv");
    csv << "y,x,u,v\n";
    for (int y = 0; y < r.field.h(); ++y)
        for (int x = 0; x < r.field.w(); ++x)
            csv << y << "," << x << "," << r.field.at(0, 0, y, x) << ","
                << r.field.at(0, 1, y, x) << "\n";
}

int cmd_train(const fs::path& data, const fs::path& out, const std::string& config_file,
              const std::vector<std::string>& overrides, bool desk, const std::string& resume) {
    fr::RunConfig cfg = resolve_config(config_file, overrides, desk);
    std::vector<std::string> warnings;
    auto records = fr::scan_dataset(data, &warnings);
    for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
    write_run_record(out, "train", cfg, {{"data", data.string()}, {"pairs", records.size()}});
    fr::TrainOptions opt;
    opt.out_dir = out;
    if (!resume.empty()) opt.resume = resume;
    fr::run_training(cfg, records, opt);
    return 0;
}

int cmd_register(const std::string& vi_path, const std::string& ir_path,
                 const std::string& fused_path, const std::string& ckpt, const fs::path& out,
                 bool fuse_internally) {
    fr::RunConfig cfg = fr::peek_checkpoint_config(ckpt);
    fr::TrainState state = fr::load_checkpoint(ckpt, cfg);
    fr::Tensor vi = fr::load_image(vi_path, 3);
    fr::Tensor ir = fr::load_image(ir_path, 3);
    fr::Tensor fused = fuse_internally ? fr::baseline_fuse(vi, ir, cfg.fuser)
                                       : fr::load_image(fused_path, 3);
    fs::create_directories(out);
    write_run_record(out, "register", cfg,
                     {{"vi", vi_path}, {"ir", ir_path},
                      {"fused", fuse_internally ? "<internal>" : fused_path},
                      {"checkpoint", ckpt}});
    fr::RegisterResult r = fr::run_register(vi, ir, fused, state.params, cfg);
    save_field_outputs(r, out);
    return 0;
}

int cmd_simulate(const fs::path& in, const fs::path& out, uint64_t seed,
                 const std::string& fuser, int count) {
    fr::RunConfig cfg;
    cfg.fuser = fuser;
    cfg.rng_seed = seed;
    auto records = fr::scan_dataset(in);
    fs::create_directories(out);
    write_run_record(out, "simulate", cfg,
                     {{"in", in.string()}, {"count", count}, {"seed", seed}});
    fr::Rng rng(seed);
    std::ofstream manifest(out / "manifest.txt");
    for (int i = 0; i < count; ++i) {
        const auto& rec = records[i % records.size()];
        fr::Tensor vi = fr::load_image(rec.visible_path, 3);
        fr::Tensor ir = fr::load_image(rec.infrared_path, 3);
        auto s = fr::make_training_sample(vi, ir, rng, cfg);
        std::string stem = rec.id + "_" + std::to_string(i);
        fr::save_image(s.visible, out / (stem + "_vi.png"));
        fr::save_image(s.infrared_deformed, out / (stem + "_ir.png"));
        fr::save_image(s.fused_deformed, out / (stem + "_f.png"));
        fr::save_image(s.fused_registered, out / (stem + "_gt.png"));
        manifest << stem << " " << s.params.to_line() << "\n";
    }
    return 0;
}

int cmd_evaluate(const fs::path& before, const fs::path& after, const fs::path& masks,
                 const fs::path& report) {
    fr::RunConfig cfg;
    write_run_record(report.parent_path().empty() ? "." : report.parent_path(), "evaluate", cfg,
                     {{"before", before.string()}, {"after", after.string()}});
    std::ofstream csv(report);
    csv << "stem,en_before,sf_before,ag_before,sd_before,en_after,sf_after,ag_after,sd_after,"
           "iou_before,iou_after,pr_before,pr_after\n";

    // mask layout: masks/{before,after}/<stem>_<objid>_{a,b}.png
    auto load_mask_pairs = [&](const fs::path& dir, const std::string& stem) {
        std::vector<std::pair<fr::BinaryMask, fr::BinaryMask>> pairs;
        if (!fs::is_directory(dir)) return pairs;
        for (const auto& e : fs::directory_iterator(dir)) {
            std::string name = e.path().stem().string();
            if (name.rfind(stem + "_", 0) != 0 || name.size() < 2) continue;
            if (name.substr(name.size() - 2) != "_a") continue;
            fs::path b_path = e.path().parent_path() /
                              (name.substr(0, name.size() - 2) + "_b" +
                               e.path().extension().string());
            if (!fs::exists(b_path)) continue;
            pairs.emplace_back(fr::BinaryMask::from_tensor(fr::load_image(e.path(), 1)),
                               fr::BinaryMask::from_tensor(fr::load_image(b_path, 1)));
        }
        return pairs;
    };

    for (const auto& e : fs::directory_iterator(before)) {
        if (!e.is_regular_file()) continue;
        std::string stem = e.path().stem().string();
        fs::path after_path;
        for (const auto& ext : {".png", ".jpg", ".jpeg"}) {
            fs::path cand = after / (stem + ext);
            if (fs::exists(cand)) after_path = cand;
        }
        if (after_path.empty()) {
            std::cerr << "warning: no after-image for " << stem << "\n";
            continue;
        }
        fr::Tensor ib = fr::load_image(e.path(), 3);
        fr::Tensor ia = fr::load_image(after_path, 3);
        auto qb = fr::quality_metrics(ib);
        auto qa = fr::quality_metrics(ia);
        auto pb = load_mask_pairs(masks / "before", stem);
        auto pa = load_mask_pairs(masks / "after", stem);
        csv << stem << "," << qb.en << "," << qb.sf << "," << qb.ag << "," << qb.sd << ","
            << qa.en << "," << qa.sf << "," << qa.ag << "," << qa.sd;
        auto mean_scores = [](const auto& pairs) {
            double i = 0, p = 0;
            for (const auto& [a, b] : pairs) {
                i += fr::iou(a, b);
                p += fr::pr_score(b, a);
            }
            return std::pair<double, double>{i / pairs.size(), p / pairs.size()};
        };
        if (!pb.empty() && !pa.empty()) {
            auto [ib2, prb] = mean_scores(pb);
            auto [ia2, pra] = mean_scores(pa);
            csv << "," << ib2 << "," << ia2 << "," << prb << "," << pra << "\n";
        } else {
            if (pb.empty() && pa.empty())
                std::cerr << "warning: no masks for " << stem << "; quality metrics only\n";
            csv << ",,,,\n";
        }
    }
    return 0;
}

int cmd_prior(const std::string& fused, const std::string& gt, int patch, int stride,
              const fs::path& out) {
    fr::RunConfig cfg;
    fr::Tensor a = fr::load_image(fused, 3);
    fr::Tensor b = fr::load_image(gt, 3);
    fr::PriorMap pm = fr::prior_map(a, b, patch, stride);
    fs::path dir = out.parent_path().empty() ? "." : out.parent_path();
    write_run_record(dir, "prior-analysis", cfg,
                     {{"fused", fused}, {"gt", gt}, {"patch", patch}, {"stride", stride}});
    fr::Tensor heat(1, 1, pm.gh, pm.gw);
    for (int y = 0; y < pm.gh; ++y)
        for (int x = 0; x < pm.gw; ++x)
            heat.at(0, 0, y, x) = std::clamp(0.5 * (pm.ssim[y * pm.gw + x] + 1.0), 0.0, 1.0);
    fr::save_image(heat, out);
    fs::path csv_path = out;
    csv_path.replace_extension(".csv");
    std::ofstream csv(csv_path);
    csv << "gy,gx,ssim\n";
    for (int y = 0; y < pm.gh; ++y)
        for (int x = 0; x < pm.gw; ++x)
            csv << y << "," << x << "," << pm.ssim[y * pm.gw + x] << "\n";
    std::cout << "mean patch SSIM: " << pm.mean() << "\n";
    return 0;
}

int cmd_warp_demo(const std::string& in, double dx, double dy, const fs::path& out) {
    fr::Tensor img = fr::load_image(in, 3);
    fr::Tensor phi(1, 2, img.h(), img.w());
    for (int y = 0; y < img.h(); ++y)
        for (int x = 0; x < img.w(); ++x) {
            phi.at(0, 0, y, x) = dx;
            phi.at(0, 1, y, x) = dy;
        }
    fr::save_image(fr::warp_tensor(img, phi), out);
    return 0;
}

int cmd_selftest(uint64_t seed, bool corrupt_warp) {
    fr::SelftestOptions opt;
    opt.seed = seed;
    opt.corrupt_warp = corrupt_warp;
    auto groups = fr::run_selftest(opt);
    bool all = true;
    for (const auto& g : groups) {
        std::cout << (g.passed ? "PASS " : "FAIL ") << g.name;
        if (!g.passed) std::cout << "  [" << g.detail << "]";
        std::cout << "\n";
        all = all && g.passed;
    }
    return all ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"FusionRegister: post-fusion misregistration correction"};
    app.require_subcommand(1);

    // train
    auto* train = app.add_subcommand("train", "train on a vi/ir dataset");
    std::string t_data, t_out, t_config, t_resume;
    std::vector<std::string> t_set;
    bool t_desk = false, t_no_mrb = false, t_one_way = false;
    std::string t_variant;
    int t_layers = 0;
    train->add_option("--data", t_data, "dataset root with vi/ and ir/")->required();
    train->add_option("--out", t_out, "output directory")->required();
    train->add_option("--resume", t_resume, "checkpoint to resume from");
    train->add_flag("--no-mrb", t_no_mrb, "ablation: drop the retainment block");
    train->add_flag("--one-way-warp", t_one_way, "ablation: single-direction warping");
    train->add_option("--mrb-variant", t_variant, "gmlp | dc | dt");
    train->add_option("--layers", t_layers, "pyramid depth N");
    add_config_flags(train, t_config, t_set, t_desk);

    // register
    auto* reg = app.add_subcommand("register", "correct a fused image");
    std::string r_vi, r_ir, r_fused, r_ckpt, r_out;
    bool r_fuse_internally = false;
    reg->add_option("--vi", r_vi)->required();
    reg->add_option("--ir", r_ir)->required();
    reg->add_option("--fused", r_fused, "externally fused image");
    reg->add_option("--ckpt", r_ckpt)->required();
    reg->add_option("--out", r_out)->required();
    reg->add_flag("--fuse-internally", r_fuse_internally,
                  "use the built-in fuser instead of --fused");

    // simulate
    auto* sim = app.add_subcommand("simulate", "emit synthetic misregistered quadruples");
    std::string s_in, s_out, s_fuser = "max";
    uint64_t s_seed = 1;
    int s_count = 8;
    sim->add_option("--in", s_in)->required();
    sim->add_option("--out", s_out)->required();
    sim->add_option("--seed", s_seed);
    sim->add_option("--fuser", s_fuser)->check(CLI::IsMember({"max", "mean"}));
    sim->add_option("--count", s_count);

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "fusion-quality and registration metrics");
    std::string e_before, e_after, e_masks, e_out = "report.csv";
    ev->add_option("--before", e_before)->required();
    ev->add_option("--after", e_after)->required();
    ev->add_option("--masks", e_masks);
    ev->add_option("--out", e_out);

    // prior-analysis
    auto* pr = app.add_subcommand("prior-analysis", "patchwise SSIM prior map");
    std::string p_fused, p_gt, p_out = "map.png";
    int p_patch = 32, p_stride = 16;
    pr->add_option("--fused", p_fused)->required();
    pr->add_option("--gt", p_gt)->required();
    pr->add_option("--patch", p_patch);
    pr->add_option("--stride", p_stride);
    pr->add_option("--out", p_out);

    // warp-demo
    auto* wd = app.add_subcommand("warp-demo", "warp an image by a constant field");
    std::string w_in, w_out = "warped.png";
    double w_dx = 0, w_dy = 0;
    wd->add_option("--in", w_in)->required();
    wd->add_option("--dx", w_dx);
    wd->add_option("--dy", w_dy);
    wd->add_option("--out", w_out);

    // selftest
    auto* st = app.add_subcommand("selftest", "run the built-in property suite");
    uint64_t st_seed = 7;
    bool st_corrupt = false;
    st->add_option("--seed", st_seed);
    st->add_flag("--corrupt-warp", st_corrupt)->group("");  // hidden test fixture

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;  // usage errors are exit code 2
    }

    try {
        if (*train) {
            std::vector<std::string> set = t_set;
            if (t_no_mrb) set.push_back("no_mrb=1");
            if (t_one_way) set.push_back("one_way_warp=1");
            if (!t_variant.empty()) set.push_back("mrb_variant=" + t_variant);
            if (t_layers > 0) set.push_back("pyramid_depth=" + std::to_string(t_layers));
            return cmd_train(t_data, t_out, t_config, set, t_desk, t_resume);
        }
        if (*reg) {
            if (r_fused.empty() && !r_fuse_internally) {
                std::cerr << "register: --fused is required unless --fuse-internally is given\n"
                          << reg->help();
                return 2;
            }
            return cmd_register(r_vi, r_ir, r_fused, r_ckpt, r_out, r_fuse_internally);
        }
        if (*sim) return cmd_simulate(s_in, s_out, s_seed, s_fuser, s_count);
        if (*ev) return cmd_evaluate(e_before, e_after, e_masks, e_out);
        if (*pr) return cmd_prior(p_fused, p_gt, p_patch, p_stride, p_out);
        if (*wd) return cmd_warp_demo(w_in, w_dx, w_dy, w_out);
        if (*st) return cmd_selftest(st_seed, st_corrupt);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
