#pragma once

#include <string>

#include "core/tensor.hpp"

namespace fscs {

// Pixels normalized to [0, 1]; planes are [C,H,W] with C = 1 or 3.
struct Image {
    int channels = 0;
    Tensor<float> planes;
};

// Reads binary 8-bit PGM (P5) or 8-bit gray/RGB PNG, dispatching on the
// file's magic bytes.
Image read_image(const std::string& path);

void write_pgm(const std::string& path, const Tensor<float>& gray);
void write_png_gray(const std::string& path, const Tensor<float>& gray);

// .png goes through libpng, anything else is written as PGM
void write_image(const std::string& path, const Tensor<float>& gray);

// sorted *.pgm / *.png paths directly inside dir
std::vector<std::string> list_image_files(const std::string& dir);

}  // namespace fscs
