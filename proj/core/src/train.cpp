#include "fr/train.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "fr/image.hpp"
#include "json.hpp"

namespace fr {

double lr_schedule(long step, long total_steps, double lr_start, double lr_end) {
    if (step < 0 || step > total_steps)
        throw std::out_of_range("lr_schedule: step outside [0, total_steps]");
    return lr_end + 0.5 * (lr_start - lr_end) * (1.0 + std::cos(M_PI * step / total_steps));
}

TrainState TrainState::init(const RunConfig& cfg) {
    TrainState s;
    s.cfg = cfg;
    s.rng.seed(cfg.rng_seed);
    s.params = init_network_params(cfg, s.rng);
    for (const auto& [name, v] : s.params.params) {
        s.m1.emplace(name, v->value.zeros_like());
        s.m2.emplace(name, v->value.zeros_like());
    }
    return s;
}

Tensor stack_batch(const std::vector<Tensor>& planes) {
    if (planes.empty()) throw std::invalid_argument("stack_batch: empty batch");
    const Tensor& f = planes[0];
    Tensor out(static_cast<int>(planes.size()), f.c(), f.h(), f.w());
    for (size_t i = 0; i < planes.size(); ++i) {
        const Tensor& t = planes[i];
        if (t.b() != 1 || t.c() != f.c() || t.h() != f.h() || t.w() != f.w())
            throw std::invalid_argument("stack_batch: shape-inhomogeneous batch");
        std::copy(t.raw().begin(), t.raw().end(),
                  out.raw().begin() + i * t.size());
    }
    return out;
}

StepResult train_step(TrainState& state, const std::vector<TrainingSample>& batch) {
    if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
    std::vector<Tensor> vi, ir, f, gt;
    for (const auto& s : batch) {
        vi.push_back(s.visible);
        ir.push_back(s.infrared_deformed);
        f.push_back(s.fused_deformed);
        gt.push_back(s.fused_registered);
    }
    Var v_vi = make_const(stack_batch(vi));
    Var v_ir = make_const(stack_batch(ir));
    Var v_f = make_const(stack_batch(f));
    Var v_gt = make_const(stack_batch(gt));

    auto outputs = forward(v_vi, v_ir, v_f, state.params, state.cfg);
    auto gts = image_pyramid(v_gt, state.cfg.pyramid_depth);
    LossParts parts;
    try {
        parts = total_loss(outputs, gts, state.cfg.loss_weights);
    } catch (const std::runtime_error& e) {
        throw std::runtime_error(std::string("train_step aborted: ") + e.what());
    }
    backward(parts.total);

    // global-norm gradient clipping at 1.0
    double sq = 0;
    for (auto& [name, v] : state.params.params)
        for (size_t i = 0; i < v->grad.size(); ++i) sq += v->grad[i] * v->grad[i];
    double norm = std::sqrt(sq);
    double clip = norm > 1.0 ? 1.0 / norm : 1.0;

    double lr = lr_schedule(std::min(state.step, state.total_steps),
                            std::max(state.total_steps, 1l), state.cfg.lr_start,
                            state.cfg.lr_end);
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    long t = state.step + 1;
    for (auto& [name, v] : state.params.params) {
        Tensor& m = state.m1.at(name);
        Tensor& s2 = state.m2.at(name);
        for (size_t i = 0; i < v->value.size(); ++i) {
            double g = v->grad[i] * clip;
            m[i] = b1 * m[i] + (1 - b1) * g;
            s2[i] = b2 * s2[i] + (1 - b2) * g * g;
            double mh = m[i] / (1 - std::pow(b1, t));
            double vh = s2[i] / (1 - std::pow(b2, t));
            v->value[i] -= lr * mh / (std::sqrt(vh) + eps);
        }
    }
    state.step = t;
    return {parts.total->value[0], parts.edge, parts.global, parts.freq, parts.detail, lr};
}

// ---------------------------------------------------------------- checkpoint

namespace {

constexpr char kMagic[] = "FRCKPT1";

void write_tensor(std::ostream& o, const std::string& name, const Tensor& t) {
    uint32_t nl = static_cast<uint32_t>(name.size());
    o.write(reinterpret_cast<const char*>(&nl), 4);
    o.write(name.data(), nl);
    int32_t sh[4] = {t.b(), t.c(), t.h(), t.w()};
    o.write(reinterpret_cast<const char*>(sh), sizeof(sh));
    o.write(reinterpret_cast<const char*>(t.data()), t.size() * sizeof(double));
}

Tensor read_tensor(std::istream& in, std::string& name) {
    uint32_t nl = 0;
    if (!in.read(reinterpret_cast<char*>(&nl), 4) || nl > 4096)
        throw std::runtime_error("checkpoint: truncated or corrupt archive");
    name.resize(nl);
    if (!in.read(name.data(), nl))
        throw std::runtime_error("checkpoint: truncated or corrupt archive");
    int32_t sh[4];
    if (!in.read(reinterpret_cast<char*>(sh), sizeof(sh)))
        throw std::runtime_error("checkpoint: truncated or corrupt archive");
    Tensor t(sh[0], sh[1], sh[2], sh[3]);
    if (!in.read(reinterpret_cast<char*>(t.data()), t.size() * sizeof(double)))
        throw std::runtime_error("checkpoint: truncated or corrupt archive");
    return t;
}

}  // namespace

void save_checkpoint(const TrainState& state, const std::filesystem::path& path) {
    std::ostringstream rng_ss;
    rng_ss << state.rng;
    nlohmann::json manifest = {
        {"version", 1},
        {"config_hash", state.cfg.hash()},
        {"config", state.cfg.to_text()},
        {"step", state.step},
        {"total_steps", state.total_steps},
        {"epoch", state.epoch},
        // JSON has no +inf; an absent best loss (no epoch finished yet) is null
        {"best_loss", std::isfinite(state.best_loss) ? nlohmann::json(state.best_loss)
                                                     : nlohmann::json(nullptr)},
        {"rng", rng_ss.str()},
        {"tensor_count", state.params.count() * 3},
    };
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream o(tmp, std::ios::binary);
        if (!o) throw std::runtime_error("checkpoint: cannot write " + tmp.string());
        o.write(kMagic, sizeof(kMagic));
        std::string mj = manifest.dump();
        uint64_t ml = mj.size();
        o.write(reinterpret_cast<const char*>(&ml), 8);
        o.write(mj.data(), ml);
        for (const auto& [name, v] : state.params.params) {
            write_tensor(o, "p:" + name, v->value);
            write_tensor(o, "m:" + name, state.m1.at(name));
            write_tensor(o, "v:" + name, state.m2.at(name));
        }
        if (!o) throw std::runtime_error("checkpoint: write failure on " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

namespace {
nlohmann::json read_manifest(std::istream& in) {
    char magic[sizeof(kMagic)];
    if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw std::runtime_error("checkpoint: bad magic (not a checkpoint file)");
    uint64_t ml = 0;
    if (!in.read(reinterpret_cast<char*>(&ml), 8) || ml > (1u << 20))
        throw std::runtime_error("checkpoint: corrupt manifest");
    std::string mj(ml, '\0');
    if (!in.read(mj.data(), ml)) throw std::runtime_error("checkpoint: corrupt manifest");
    nlohmann::json j = nlohmann::json::parse(mj, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded()) throw std::runtime_error("checkpoint: manifest is not valid JSON");
    return j;
}
}  // namespace

RunConfig peek_checkpoint_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot open " + path.string());
    auto manifest = read_manifest(in);
    return parse_config_text(manifest.at("config").get<std::string>());
}

TrainState load_checkpoint(const std::filesystem::path& path, const RunConfig& expected_cfg) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot open " + path.string());
    auto manifest = read_manifest(in);
    uint64_t h = manifest.at("config_hash").get<uint64_t>();
    if (h != expected_cfg.hash())
        throw std::runtime_error(
            "checkpoint: config mismatch (stored hash " + std::to_string(h) +
            ", expected " + std::to_string(expected_cfg.hash()) + "); refusing to load");

    TrainState s = TrainState::init(expected_cfg);
    size_t expected = 0;
    try {
        s.step = manifest.at("step").get<long>();
        s.total_steps = manifest.at("total_steps").get<long>();
        s.epoch = manifest.at("epoch").get<int>();
        const auto& bl = manifest.at("best_loss");
        s.best_loss =
            bl.is_null() ? std::numeric_limits<double>::infinity() : bl.get<double>();
        std::istringstream rng_ss(manifest.at("rng").get<std::string>());
        rng_ss >> s.rng;
        expected = manifest.at("tensor_count").get<size_t>();
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(std::string("checkpoint: bad manifest: ") + e.what());
    }
    for (size_t i = 0; i < expected; ++i) {
        std::string name;
        Tensor t = read_tensor(in, name);
        std::string key = name.substr(2);
        Tensor* dst = nullptr;
        if (name.rfind("p:", 0) == 0) dst = &s.params.at(key)->value;
        else if (name.rfind("m:", 0) == 0) dst = &s.m1.at(key);
        else if (name.rfind("v:", 0) == 0) dst = &s.m2.at(key);
        else throw std::runtime_error("checkpoint: unknown tensor tag " + name);
        if (!dst->same_shape(t))
            throw std::runtime_error("checkpoint: shape mismatch for " + key);
        *dst = std::move(t);
    }
    return s;
}

// ---------------------------------------------------------------- trainer

void run_training(const RunConfig& cfg, const std::vector<PairRecord>& records,
                  const TrainOptions& opt) {
    cfg.validate();
    if (records.empty()) throw std::runtime_error("run_training: empty dataset");
    namespace fs = std::filesystem;
    fs::create_directories(opt.out_dir / "ckpt");

    TrainState state = opt.resume ? load_checkpoint(*opt.resume, cfg) : TrainState::init(cfg);
    long steps_per_epoch = (records.size() + cfg.batch_size - 1) / cfg.batch_size;
    state.total_steps = static_cast<long>(cfg.epochs) * steps_per_epoch;

    // preload all pairs (desk-scale corpora are small)
    struct Loaded {
        Tensor vi, ir;
    };
    std::vector<Loaded> data;
    for (const auto& r : records) {
        Loaded l{load_image(r.visible_path, 3), load_image(r.infrared_path, 3)};
        if (l.vi.h() != l.ir.h() || l.vi.w() != l.ir.w())
            throw std::runtime_error("run_training: vi/ir size mismatch for " + r.id);
        data.push_back(std::move(l));
    }

    std::ofstream log(opt.out_dir / "log.csv", state.step == 0 ? std::ios::trunc : std::ios::app);
    if (state.step == 0)
        log << "step,epoch,lr,total,edge,global,freq,detail\n";

    const int ps = cfg.patch_size;
    for (int epoch = state.epoch; epoch < cfg.epochs; ++epoch) {
        double epoch_loss = 0;
        long nsteps = 0;
        for (size_t start = 0; start < data.size(); start += cfg.batch_size) {
            std::vector<TrainingSample> batch;
            for (size_t i = start; i < std::min(start + cfg.batch_size, data.size()); ++i) {
                const Loaded& l = data[i];
                int maxy = l.vi.h() - ps, maxx = l.vi.w() - ps;
                if (maxy < 0 || maxx < 0)
                    throw std::runtime_error("run_training: image smaller than patch_size");
                std::uniform_int_distribution<int> dy(0, maxy), dx(0, maxx);
                int top = dy(state.rng), left = dx(state.rng);
                Tensor vi = crop_patch(l.vi, top, left, ps);
                Tensor ir = crop_patch(l.ir, top, left, ps);
                batch.push_back(make_training_sample(vi, ir, state.rng, cfg));
            }
            StepResult r = train_step(state, batch);
            epoch_loss += r.total;
            ++nsteps;
            log << state.step << "," << epoch << "," << r.lr << "," << r.total << "," << r.edge
                << "," << r.global << "," << r.freq << "," << r.detail << "\n";
        }
        log.flush();
        state.epoch = epoch + 1;
        double mean_loss = epoch_loss / nsteps;
        save_checkpoint(state, opt.out_dir / "ckpt" / "last.ckpt");
        if (mean_loss < state.best_loss) {
            state.best_loss = mean_loss;
            save_checkpoint(state, opt.out_dir / "ckpt" / "best.ckpt");
        }
        std::cout << "epoch " << epoch << " mean loss " << mean_loss << "\n";
    }
}

}  // namespace fr
