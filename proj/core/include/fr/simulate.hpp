#pragma once

#include <random>

#include "fr/config.hpp"
#include "fr/tensor.hpp"

namespace fr {

struct AffineParams {
    double rotation_deg = 0.0;
    double translate_x = 0.0;
    double translate_y = 0.0;
    double scale = 1.0;
    bool flip_h = false;
    bool flip_v = false;
    int rot90_k = 0;  // multiples of 90 degrees, 0..3

    static AffineParams identity() { return {}; }
    std::string to_line() const;
};

using Rng = std::mt19937_64;

// Rotation in [-2,2] deg, translation in [-2,2] px, scale in [0.95,1.08];
// flip_h, flip_v and a 90-degree rotation each triggered with probability 0.5.
AffineParams sample_affine(Rng& rng);

// Continuous affine (scale -> rotate -> translate, about center, bilinear,
// edge replication) followed by the discrete flips/rot90.
Tensor apply_affine(const Tensor& img, const AffineParams& p);
// Continuous part only / discrete part only.
Tensor apply_affine_continuous(const Tensor& img, const AffineParams& p);
Tensor apply_discrete(const Tensor& img, const AffineParams& p);

// luminance = max(luma(vi), luma(ir)) with vi chrominance, or 0.5*(vi+ir).
Tensor baseline_fuse(const Tensor& vi, const Tensor& ir, const std::string& variant = "max");

struct TrainingSample {
    Tensor visible;           // I_vi
    Tensor infrared_deformed; // I_ir^phi
    Tensor fused_deformed;    // I_f
    Tensor fused_registered;  // I_gt
    AffineParams params;
};

// Builds (I_vi, I_ir^phi, I_f, I_gt) from a registered pair. Discrete
// flips/rot90 act on the pair geometry unless cfg.deform_only_ir, in which
// case they deform only the infrared stream.
TrainingSample make_training_sample(const Tensor& vi, const Tensor& ir, Rng& rng,
                                    const RunConfig& cfg);

// Seeded synthetic desk-scale pair: textured visible image, blob-style
// infrared image, and a binary object mask for registration scoring.
struct ShapesPair {
    Tensor vi;
    Tensor ir;
    Tensor mask;  // 1x1xHxW, values 0/1
};
ShapesPair make_shapes_pair(Rng& rng, int size);

}  // namespace fr
