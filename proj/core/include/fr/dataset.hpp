#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fr/tensor.hpp"

namespace fr {

struct PairRecord {
    std::string id;
    std::filesystem::path visible_path;
    std::filesystem::path infrared_path;
    std::optional<std::filesystem::path> fused_path;
    std::optional<std::filesystem::path> mask_path;
};

// Pairs `root/vi/<stem>.*` with `root/ir/<stem>.*` by filename stem; picks up
// optional `fused/` and `masks/` entries. Unpaired stems are reported through
// `warnings` and skipped. Result is sorted by id.
std::vector<PairRecord> scan_dataset(const std::filesystem::path& root,
                                     std::vector<std::string>* warnings = nullptr);

}  // namespace fr
