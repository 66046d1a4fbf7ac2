#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fr/tensor.hpp"

namespace fr {

struct BinaryMask {
    int h = 0, w = 0;
    std::vector<uint8_t> m;

    BinaryMask() = default;
    BinaryMask(int h_, int w_) : h(h_), w(w_), m(static_cast<size_t>(h_) * w_, 0) {}
    uint8_t& at(int y, int x) { return m[static_cast<size_t>(y) * w + x]; }
    uint8_t at(int y, int x) const { return m[static_cast<size_t>(y) * w + x]; }

    static BinaryMask from_tensor(const Tensor& t, double threshold = 0.5);
};

// Shannon entropy of the 256-bin histogram, bits.
double entropy(const Tensor& gray);
// sqrt(RF^2 + CF^2), RMS of horizontal/vertical first differences.
double spatial_frequency(const Tensor& gray);
// mean over interior pixels of sqrt((dx^2 + dy^2)/2), forward differences.
double average_gradient(const Tensor& gray);
// population standard deviation.
double std_dev(const Tensor& gray);

double iou(const BinaryMask& a, const BinaryMask& b);
double pr_score(const BinaryMask& pred, const BinaryMask& ref);

struct PriorMap {
    int patch = 0, stride = 0;
    int gh = 0, gw = 0;
    std::vector<double> ssim;  // gh x gw, values in [-1, 1]
    double mean() const;
};

// Patchwise SSIM between I_f and I_gt (uniform window, C1=0.01^2, C2=0.03^2).
PriorMap prior_map(const Tensor& fused, const Tensor& gt, int patch = 32, int stride = 16);

struct QualityReport {
    double en, sf, ag, sd;
};
QualityReport quality_metrics(const Tensor& img);  // RGB handled via 601 luma

struct RunReport {
    QualityReport before, after;
    std::optional<double> mean_iou_before, mean_iou_after;
    std::optional<double> mean_pr_before, mean_pr_after;
    std::vector<std::string> warnings;
};

// masks: (reference, before, after) triples per object.
struct MaskTriple {
    BinaryMask ref, before, after;
};
RunReport evaluate_run(const Tensor& before, const Tensor& after,
                       const std::vector<MaskTriple>& masks);

}  // namespace fr
