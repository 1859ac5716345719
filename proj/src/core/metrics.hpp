#pragma once

#include <functional>
#include <string>

#include "core/tensor.hpp"

namespace fscs {

// 10 log10(1 / mse) for unit-range images; +inf when the images are identical.
double psnr(const Tensor<float>& a, const Tensor<float>& b);

// Mean local SSIM, 11x11 Gaussian window sigma 1.5, K1 = 0.01, K2 = 0.03,
// dynamic range 1. Both extents must be at least the window size.
double ssim(const Tensor<float>& a, const Tensor<float>& b);

// BT.601 luma: Y = 0.299 R + 0.587 G + 0.114 B. Input [3,H,W] in [0,1].
Tensor<float> rgb_to_y(const Tensor<float>& rgb);

// round(x * 255) / 255, the 8-bit metric path
Tensor<float> quantize_8bit(const Tensor<float>& img);

struct EvalEntry {
    std::string name;
    double psnr_db = 0;
    double ssim = 0;
};

struct EvalReport {
    std::vector<EvalEntry> entries;
    double mean_psnr = 0;
    double mean_ssim = 0;
};

struct EvalOptions {
    bool quantize_8bit = false;
    int threads = 0;  // 0 = auto
};

using ReconFn = std::function<Tensor<float>(const Tensor<float>&)>;  // gray [H,W] -> rec [H,W]

// Per image in dir (sorted by name): load, convert color to Y, reconstruct,
// compute PSNR/SSIM against the original Y. Unreadable files are skipped with
// a warning; zero evaluable images is an error.
EvalReport evaluate_dataset(const ReconFn& recon, const std::string& dir, const EvalOptions& opts);

void write_eval_csv(const std::string& path, const EvalReport& report);

}  // namespace fscs
