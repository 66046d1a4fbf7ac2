#pragma once

#include <filesystem>
#include <string>

#include "fr/tensor.hpp"

namespace fr {

// Decode an 8/16-bit raster into a 1xCxHxW tensor in [0,1]. Grayscale files
// are replicated across channels when channels==3.
Tensor load_image(const std::filesystem::path& path, int channels = 3);

// Quantize to 8 bits and write PNG/JPEG by extension. Values clamped to [0,1].
void save_image(const Tensor& img, const std::filesystem::path& path);

Tensor crop_patch(const Tensor& img, int top, int left, int size);

// Reflect-pad H and W up to the next multiple of `multiple`; pads are recorded
// so outputs can be cropped back.
struct PadInfo {
    int bottom = 0;
    int right = 0;
};
Tensor pad_to_multiple(const Tensor& img, int multiple, PadInfo& info);
Tensor unpad(const Tensor& img, const PadInfo& info);

// ITU-R 601 luma; returns Bx1xHxW.
Tensor to_gray(const Tensor& img);

}  // namespace fr
