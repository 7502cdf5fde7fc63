#pragma once

#include <string>

#include "odetex/tensor.hpp"

namespace odetex::io {

// 8-bit PNG -> [3,H,W] floats in [0,1] (grayscale replicated, alpha dropped).
ad::Tensor read_png(const std::string& path);

// [3,H,W] or [1,H,W] in [0,1] -> 8-bit PNG (values clamped).
void write_png(const std::string& path, const ad::Tensor& img);

ad::Tensor center_crop(const ad::Tensor& img, int out_h, int out_w);
ad::Tensor resize_bilinear(const ad::Tensor& img, int out_h, int out_w);

}  // namespace odetex::io
