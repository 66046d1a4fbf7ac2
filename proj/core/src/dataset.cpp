#include "fr/dataset.hpp"

#include <algorithm>
#include <map>

namespace fr {

namespace fs = std::filesystem;

namespace {
std::map<std::string, fs::path> index_dir(const fs::path& dir) {
    std::map<std::string, fs::path> out;
    if (!fs::is_directory(dir)) return out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file()) out[e.path().stem().string()] = e.path();
    return out;
}
}  // namespace

std::vector<PairRecord> scan_dataset(const fs::path& root, std::vector<std::string>* warnings) {
    auto vi = index_dir(root / "vi");
    auto ir = index_dir(root / "ir");
    auto fused = index_dir(root / "fused");
    auto masks = index_dir(root / "masks");

    std::vector<PairRecord> out;
    for (const auto& [stem, vpath] : vi) {
        auto it = ir.find(stem);
        if (it == ir.end()) {
            if (warnings) warnings->push_back("unpaired visible image: " + stem);
            continue;
        }
        PairRecord r;
        r.id = stem;
        r.visible_path = vpath;
        r.infrared_path = it->second;
        if (auto f = fused.find(stem); f != fused.end()) r.fused_path = f->second;
        if (auto m = masks.find(stem); m != masks.end()) r.mask_path = m->second;
        out.push_back(std::move(r));
    }
    for (const auto& [stem, _] : ir)
        if (!vi.count(stem) && warnings)
            warnings->push_back("unpaired infrared image: " + stem);

    if (out.empty())
        throw std::runtime_error("scan_dataset: no matched vi/ir pairs under " + root.string());
    std::sort(out.begin(), out.end(), [](auto& a, auto& b) { return a.id < b.id; });
    return out;
}

}  // namespace fr
