#pragma once

#include <string>

#include "core/tensor.hpp"

namespace fscs {

// Procedural grayscale test images: smooth gradients, Gaussian blobs, a few
// hard-edged shapes and mild sinusoidal texture, normalized to [0, 1].
Tensor<float> synth_image(int64_t size, uint64_t seed);

std::vector<Tensor<float>> synth_images(int count, int64_t size, uint64_t seed);

// Writes count PGM images (img000.pgm, ...) into dir, creating it if needed.
void write_synth_dataset(const std::string& dir, int count, int64_t size, uint64_t seed);

}  // namespace fscs
