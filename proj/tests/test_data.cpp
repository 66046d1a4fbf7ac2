#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "fr/config.hpp"
#include "fr/dataset.hpp"
#include "fr/image.hpp"
#include "helpers.hpp"

using namespace fr;
namespace fs = std::filesystem;
using frtest::rand_tensor;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("frtest_" + std::to_string(::getpid()) + "_" +
                std::to_string(reinterpret_cast<uintptr_t>(this)));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("image save/load round trip within 8-bit quantization") {
    TempDir td;
    std::mt19937_64 rng(41);
    Tensor img = rand_tensor(1, 3, 12, 17, rng);
    fs::path p = td.path / "rt.png";
    save_image(img, p);
    Tensor back = load_image(p, 3);
    REQUIRE(back.same_shape(img));
    CHECK(frtest::max_abs_diff(back, img) <= 1.0 / 255.0 + 1e-12);

    // second trip is exact: quantization is idempotent
    fs::path p2 = td.path / "rt2.png";
    save_image(back, p2);
    CHECK(frtest::max_abs_diff(load_image(p2, 3), back) == 0.0);
}

TEST_CASE("grayscale load replicates channels; luma conversion") {
    TempDir td;
    Tensor g(1, 1, 6, 6);
    for (int y = 0; y < 6; ++y)
        for (int x = 0; x < 6; ++x) g.at(0, 0, y, x) = (y * 6 + x) / 35.0;
    fs::path p = td.path / "g.png";
    save_image(g, p);
    Tensor rgb = load_image(p, 3);
    REQUIRE(rgb.c() == 3);
    for (int y = 0; y < 6; ++y)
        for (int x = 0; x < 6; ++x) {
            CHECK(rgb.at(0, 0, y, x) == rgb.at(0, 1, y, x));
            CHECK(rgb.at(0, 1, y, x) == rgb.at(0, 2, y, x));
        }
    Tensor luma = to_gray(rgb);
    REQUIRE(luma.c() == 1);
    CHECK(frtest::max_abs_diff(luma, load_image(p, 1)) < 1e-12);
}

TEST_CASE("crop_patch examples") {
    Tensor img(1, 1, 4, 4);
    for (int i = 0; i < 16; ++i) img[i] = i;

    SUBCASE("full-size crop is the identity") {
        Tensor c = crop_patch(img, 0, 0, 4);
        CHECK(frtest::max_abs_diff(c, img) == 0.0);
    }
    SUBCASE("crop(1,1,2) of the index image is [[5,6],[9,10]]") {
        Tensor c = crop_patch(img, 1, 1, 2);
        CHECK(c.at(0, 0, 0, 0) == 5);
        CHECK(c.at(0, 0, 0, 1) == 6);
        CHECK(c.at(0, 0, 1, 0) == 9);
        CHECK(c.at(0, 0, 1, 1) == 10);
    }
    SUBCASE("out-of-bounds window is a range error") {
        CHECK_THROWS_AS((void)crop_patch(img, 3, 3, 2), std::out_of_range);
    }
}

TEST_CASE("pad_to_multiple / unpad round trip") {
    std::mt19937_64 rng(42);
    Tensor img = rand_tensor(1, 3, 10, 13, rng);
    PadInfo info;
    Tensor padded = pad_to_multiple(img, 4, info);
    CHECK(padded.h() % 4 == 0);
    CHECK(padded.w() % 4 == 0);
    CHECK(info.bottom == 2);
    CHECK(info.right == 3);
    CHECK(frtest::max_abs_diff(unpad(padded, info), img) == 0.0);

    PadInfo none;
    Tensor same = pad_to_multiple(img, 1, none);
    CHECK(none.bottom == 0);
    CHECK(none.right == 0);
    CHECK(frtest::max_abs_diff(same, img) == 0.0);
}

TEST_CASE("scan_dataset pairs by stem and reports strays") {
    TempDir td;
    for (const char* d : {"vi", "ir", "fused", "masks"}) fs::create_directories(td.path / d);
    Tensor t(1, 1, 4, 4, 0.5);
    save_image(t, td.path / "vi" / "a.png");
    save_image(t, td.path / "ir" / "a.png");
    save_image(t, td.path / "fused" / "a.png");
    save_image(t, td.path / "vi" / "b.png");
    save_image(t, td.path / "ir" / "b.png");
    save_image(t, td.path / "vi" / "stray.png");  // no infrared partner

    std::vector<std::string> warnings;
    auto recs = scan_dataset(td.path, &warnings);
    REQUIRE(recs.size() == 2);
    CHECK(recs[0].id == "a");
    CHECK(recs[1].id == "b");
    CHECK(recs[0].fused_path.has_value());
    CHECK(!recs[1].fused_path.has_value());
    bool mentioned = false;
    for (const auto& w : warnings) mentioned |= w.find("stray") != std::string::npos;
    CHECK(mentioned);

    SUBCASE("empty intersection throws") {
        TempDir empty;
        fs::create_directories(empty.path / "vi");
        fs::create_directories(empty.path / "ir");
        CHECK_THROWS((void)scan_dataset(empty.path));
    }
}

TEST_CASE("config parsing, overrides, hash stability") {
    RunConfig base;
    RunConfig cfg = parse_config_text("patch_size = 64\nbase_channels=8\n# comment\n\n", base);
    CHECK(cfg.patch_size == 64);
    CHECK(cfg.base_channels == 8);
    CHECK(cfg.epochs == base.epochs);

    apply_override(cfg, "fuser", "mean");
    CHECK(cfg.fuser == "mean");
    CHECK_THROWS_AS(apply_override(cfg, "no_such_key", "1"), std::invalid_argument);

    // hash covers every field that alters behaviour
    RunConfig a = RunConfig::desk_preset();
    RunConfig b = a;
    CHECK(a.hash() == b.hash());
    b.no_mrb = true;
    CHECK(a.hash() != b.hash());

    // canonical text parses back to an equal config
    RunConfig c = parse_config_text(a.to_text());
    CHECK(c.hash() == a.hash());
}

TEST_CASE("desk preset values and validation") {
    RunConfig d = RunConfig::desk_preset();
    CHECK(d.patch_size == 64);
    CHECK(d.base_channels == 8);
    CHECK(d.batch_size == 4);
    CHECK(d.epochs == 50);
    d.validate();

    RunConfig bad = d;
    bad.patch_size = 63;  // violates pyramid divisibility
    CHECK_THROWS(bad.validate());
    RunConfig bad2 = d;
    bad2.fuser = "median";
    CHECK_THROWS(bad2.validate());
}
