#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "fr/image.hpp"
#include "fr/train.hpp"
#include "helpers.hpp"

using namespace fr;
namespace fs = std::filesystem;
using frtest::max_abs_diff;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("frtrain_" + std::to_string(::getpid()) + "_" +
                std::to_string(reinterpret_cast<uintptr_t>(this)));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

RunConfig tiny_cfg() {
    RunConfig cfg = RunConfig::desk_preset();
    cfg.pyramid_depth = 2;
    cfg.base_channels = 4;
    cfg.patch_size = 16;
    cfg.batch_size = 2;
    cfg.rng_seed = 9;
    return cfg;
}

std::vector<TrainingSample> tiny_batch(const RunConfig& cfg, uint64_t seed, int n = 2) {
    Rng rng(seed);
    std::vector<TrainingSample> batch;
    for (int i = 0; i < n; ++i) {
        ShapesPair p = make_shapes_pair(rng, cfg.patch_size);
        batch.push_back(make_training_sample(p.vi, p.ir, rng, cfg));
    }
    return batch;
}

}  // namespace

TEST_CASE("lr_schedule: pinned endpoints and midpoint, monotone decay") {
    const long T = 1000;
    CHECK(lr_schedule(0, T, 2e-4, 1e-6) == doctest::Approx(2e-4).epsilon(1e-15));
    CHECK(lr_schedule(T, T, 2e-4, 1e-6) == doctest::Approx(1e-6).epsilon(1e-15));
    CHECK(lr_schedule(T / 2, T, 2e-4, 1e-6) == doctest::Approx(1.005e-4).epsilon(1e-12));

    double prev = lr_schedule(0, T, 2e-4, 1e-6);
    for (long s = 1; s <= T; ++s) {
        double cur = lr_schedule(s, T, 2e-4, 1e-6);
        CHECK(cur <= prev + 1e-18);
        prev = cur;
    }

    CHECK_THROWS_AS((void)lr_schedule(-1, T, 2e-4, 1e-6), std::out_of_range);
    CHECK_THROWS_AS((void)lr_schedule(T + 1, T, 2e-4, 1e-6), std::out_of_range);
}

TEST_CASE("stack_batch concatenates along the batch axis") {
    Tensor a(1, 2, 3, 3, 0.1), b(1, 2, 3, 3, 0.9);
    Tensor s = stack_batch({a, b});
    REQUIRE(s.shape() == std::array<int, 4>{2, 2, 3, 3});
    CHECK(s.at(0, 1, 2, 2) == 0.1);
    CHECK(s.at(1, 0, 0, 0) == 0.9);
    Tensor odd(1, 1, 3, 3, 0.5);
    CHECK_THROWS((void)stack_batch({a, odd}));
}

TEST_CASE("train_step is deterministic and actually learns") {
    RunConfig cfg = tiny_cfg();
    auto batch = tiny_batch(cfg, 21);

    TrainState s1 = TrainState::init(cfg);
    TrainState s2 = TrainState::init(cfg);
    s1.total_steps = s2.total_steps = 100;

    StepResult r1 = train_step(s1, batch);
    StepResult r2 = train_step(s2, batch);
    CHECK(r1.total == r2.total);
    CHECK(r1.lr == doctest::Approx(lr_schedule(0, 100, cfg.lr_start, cfg.lr_end)));
    for (const auto& [name, v] : s1.params.params)
        CHECK(max_abs_diff(v->value, s2.params.at(name)->value) == 0.0);

    // a short run on a fixed batch must reduce the loss
    double first = r1.total, last = first;
    for (int i = 0; i < 15; ++i) last = train_step(s1, batch).total;
    CHECK(last < first);
    CHECK(std::isfinite(last));
    CHECK(s1.step == 16);
}

TEST_CASE("a zero learning rate leaves parameters unchanged") {
    RunConfig cfg = tiny_cfg();
    auto batch = tiny_batch(cfg, 22);
    TrainState s = TrainState::init(cfg);
    s.total_steps = 100;
    std::map<std::string, Tensor> before;
    for (const auto& [name, v] : s.params.params) before.emplace(name, v->value);

    // drive the schedule to ~0 by running at the terminal step with a
    // vanishing lr window
    s.cfg.lr_start = 2e-18;
    s.cfg.lr_end = 1e-18;
    train_step(s, batch);
    for (const auto& [name, v] : s.params.params)
        CHECK(max_abs_diff(v->value, before.at(name)) < 1e-12);
}

TEST_CASE("checkpoint round trip is bitwise") {
    TempDir td;
    RunConfig cfg = tiny_cfg();
    auto batch = tiny_batch(cfg, 23);
    TrainState s = TrainState::init(cfg);
    s.total_steps = 50;
    for (int i = 0; i < 3; ++i) train_step(s, batch);
    s.epoch = 2;
    s.best_loss = 1.25;

    fs::path p = td.path / "state.ckpt";
    save_checkpoint(s, p);
    TrainState r = load_checkpoint(p, cfg);

    CHECK(r.step == s.step);
    CHECK(r.epoch == s.epoch);
    CHECK(r.best_loss == s.best_loss);
    CHECK(r.total_steps == s.total_steps);
    CHECK(r.rng == s.rng);
    REQUIRE(r.params.count() == s.params.count());
    for (const auto& [name, v] : s.params.params) {
        const Tensor& a = v->value;
        const Tensor& b = r.params.at(name)->value;
        REQUIRE(a.same_shape(b));
        for (size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
    }
    for (const auto& [name, t] : s.m1)
        for (size_t i = 0; i < t.size(); ++i) CHECK(t[i] == r.m1.at(name)[i]);
    for (const auto& [name, t] : s.m2)
        for (size_t i = 0; i < t.size(); ++i) CHECK(t[i] == r.m2.at(name)[i]);

    // resumed training continues identically to uninterrupted training
    TrainState cont = TrainState::init(cfg);
    cont.total_steps = 50;
    for (int i = 0; i < 3; ++i) train_step(cont, batch);
    StepResult ra = train_step(r, batch);
    StepResult rb = train_step(cont, batch);
    CHECK(ra.total == rb.total);

    CHECK(peek_checkpoint_config(p).hash() == cfg.hash());
}

TEST_CASE("checkpoint refuses a mismatched config and truncated files") {
    TempDir td;
    RunConfig cfg = tiny_cfg();
    TrainState s = TrainState::init(cfg);
    s.total_steps = 10;
    fs::path p = td.path / "state.ckpt";
    save_checkpoint(s, p);

    RunConfig other = cfg;
    other.base_channels = 8;
    CHECK_THROWS_AS((void)load_checkpoint(p, other), std::runtime_error);

    // truncate the archive mid-tensor
    auto full = fs::file_size(p);
    fs::resize_file(p, full / 2);
    CHECK_THROWS_AS((void)load_checkpoint(p, cfg), std::runtime_error);

    std::ofstream(td.path / "junk.ckpt") << "not a checkpoint";
    CHECK_THROWS_AS((void)load_checkpoint(td.path / "junk.ckpt", cfg), std::runtime_error);
}

TEST_CASE("run_training writes a log and checkpoints, resume continues") {
    TempDir td;
    TempDir data;
    RunConfig cfg = tiny_cfg();
    cfg.epochs = 2;
    cfg.batch_size = 2;

    // two-image synthetic dataset on disk
    fs::create_directories(data.path / "vi");
    fs::create_directories(data.path / "ir");
    Rng rng(31);
    std::vector<PairRecord> records;
    for (int i = 0; i < 2; ++i) {
        ShapesPair pr = make_shapes_pair(rng, 16);
        fs::path vp = data.path / "vi" / ("p" + std::to_string(i) + ".png");
        fs::path ip = data.path / "ir" / ("p" + std::to_string(i) + ".png");
        save_image(pr.vi, vp);
        save_image(pr.ir, ip);
        records.push_back({"p" + std::to_string(i), vp, ip, std::nullopt, std::nullopt});
    }

    TrainOptions opt;
    opt.out_dir = td.path;
    run_training(cfg, records, opt);

    CHECK(fs::exists(td.path / "log.csv"));
    CHECK(fs::exists(td.path / "ckpt" / "last.ckpt"));
    CHECK(fs::exists(td.path / "ckpt" / "best.ckpt"));

    std::ifstream log(td.path / "log.csv");
    std::string header;
    std::getline(log, header);
    CHECK(header == "step,epoch,lr,total,edge,global,freq,detail");
    int rows = 0;
    for (std::string line; std::getline(log, line);) rows += !line.empty();
    CHECK(rows == 2);  // one step per epoch: 2 records / batch 2

    TrainState last = load_checkpoint(td.path / "ckpt" / "last.ckpt", cfg);
    CHECK(last.epoch == 2);
    CHECK(last.step == 2);
}
