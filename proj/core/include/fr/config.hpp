#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace fr {

struct LossWeights {
    double lambda_edge = 10.0;
    double lambda_global = 1.0;
    double lambda_freq = 0.1;
    double lambda_detail = 10.0;
};

enum class MrbVariant { Gmlp, DeformConv, DeformTransformer };

struct RunConfig {
    int pyramid_depth = 2;     // N
    int base_channels = 16;    // C0
    int patch_size = 256;
    int batch_size = 20;
    int epochs = 5000;
    double lr_start = 2e-4;
    double lr_end = 1e-6;
    LossWeights loss_weights;
    int correlation_range = 1;          // p
    std::vector<int> patch_scales{1, 3};  // S
    bool no_mrb = false;
    bool one_way_warp = false;
    bool additive_refine = false;
    bool deform_only_ir = false;
    MrbVariant mrb_variant = MrbVariant::Gmlp;
    std::string fuser = "max";          // max | mean
    uint64_t rng_seed = 1;

    void validate() const;
    // Canonicalized key=value lines (deterministic order).
    std::string to_text() const;
    uint64_t hash() const;  // FNV-1a over to_text()

    // Named desk-scale preset: 64px patches, C0=8, batch 4, epochs 50,
    // lr_start 3e-3 (short runs need a hotter start than the paper-scale
    // default).
    static RunConfig desk_preset();
};

RunConfig parse_config_text(const std::string& text, RunConfig base = {});
RunConfig load_config_file(const std::filesystem::path& path, RunConfig base = {});
void apply_override(RunConfig& cfg, const std::string& key, const std::string& value);

}  // namespace fr
