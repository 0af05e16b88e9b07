#pragma once

#include <string>

#include "dufold/dataset.hpp"
#include "dufold/tensor.hpp"

namespace dufold {

/// Loads every *.png under `path` (8- or 16-bit grayscale/RGB, uniform
/// dimensions) into [0, 1] tensors, ordered lexicographically by filename.
ImageDataset load_images(const std::string& path);

/// Decode one PNG file to a (C, H, W) tensor in [0, 1].
Tensor load_png(const std::string& file);

/// Write a (C, H, W) or (H, W) tensor as a PNG (values clamped to [0, 1]);
/// bit depth 8 or 16.
void save_png(const std::string& file, const Tensor& image, int bits = 8);

}  // namespace dufold
