#include "core/synth.hpp"

#include <cmath>
#include <filesystem>

#include "core/image_io.hpp"
#include "core/rng.hpp"

namespace fscs {

Tensor<float> synth_image(int64_t size, uint64_t seed) {
    if (size < 2) throw std::invalid_argument("synth_image: size must be at least 2");
    Rng rng(seed);
    std::vector<double> img(static_cast<size_t>(size * size), 0.0);
    auto px = [&](int64_t y, int64_t x) -> double& {
        return img[static_cast<size_t>(y * size + x)];
    };
    const double n = static_cast<double>(size - 1);

    // bilinear ramp between random corner intensities
    double c00 = rng.uniform(), c01 = rng.uniform(), c10 = rng.uniform(), c11 = rng.uniform();
    for (int64_t y = 0; y < size; ++y)
        for (int64_t x = 0; x < size; ++x) {
            double fy = y / n, fx = x / n;
            px(y, x) = (1 - fy) * ((1 - fx) * c00 + fx * c01) + fy * ((1 - fx) * c10 + fx * c11);
        }

    // smooth blobs
    int blobs = 2 + static_cast<int>(rng.index(4));
    for (int b = 0; b < blobs; ++b) {
        double cy = rng.uniform(0, n), cx = rng.uniform(0, n);
        double sigma = rng.uniform(0.06, 0.25) * n;
        double amp = rng.uniform(-0.7, 0.7);
        for (int64_t y = 0; y < size; ++y)
            for (int64_t x = 0; x < size; ++x) {
                double dy = (y - cy) / sigma, dx = (x - cx) / sigma;
                px(y, x) += amp * std::exp(-0.5 * (dy * dy + dx * dx));
            }
    }

    // hard-edged shapes: rectangles and disks
    int shapes = 1 + static_cast<int>(rng.index(3));
    for (int s = 0; s < shapes; ++s) {
        double amp = rng.uniform(-0.5, 0.5);
        if (rng.index(2) == 0) {
            int64_t y0 = rng.index(size), x0 = rng.index(size);
            int64_t ph = 1 + rng.index(size / 2), pw = 1 + rng.index(size / 2);
            for (int64_t y = y0; y < std::min(size, y0 + ph); ++y)
                for (int64_t x = x0; x < std::min(size, x0 + pw); ++x) px(y, x) += amp;
        } else {
            double cy = rng.uniform(0, n), cx = rng.uniform(0, n);
            double r = rng.uniform(0.05, 0.3) * n, r2 = r * r;
            for (int64_t y = 0; y < size; ++y)
                for (int64_t x = 0; x < size; ++x)
                    if ((y - cy) * (y - cy) + (x - cx) * (x - cx) <= r2) px(y, x) += amp;
        }
    }

    // mild directional texture
    double freq = rng.uniform(2.0, 8.0) * 2.0 * M_PI / n;
    double theta = rng.uniform(0, M_PI);
    double amp = rng.uniform(0.02, 0.08);
    double ky = std::sin(theta) * freq, kx = std::cos(theta) * freq;
    for (int64_t y = 0; y < size; ++y)
        for (int64_t x = 0; x < size; ++x) px(y, x) += amp * std::sin(ky * y + kx * x);

    double lo = img[0], hi = img[0];
    for (double v : img) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const double span = hi > lo ? hi - lo : 1.0;
    Tensor<float> out({size, size});
    for (int64_t i = 0; i < size * size; ++i)
        out[i] = static_cast<float>((img[static_cast<size_t>(i)] - lo) / span);
    return out;
}

std::vector<Tensor<float>> synth_images(int count, int64_t size, uint64_t seed) {
    if (count < 1) throw std::invalid_argument("synth_images: count must be positive");
    std::vector<Tensor<float>> out;
    out.reserve(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i)
        out.push_back(synth_image(size, seed + 0x100 * static_cast<uint64_t>(i + 1)));
    return out;
}

void write_synth_dataset(const std::string& dir, int count, int64_t size, uint64_t seed) {
    std::filesystem::create_directories(dir);
    auto images = synth_images(count, size, seed);
    char name[32];
    for (int i = 0; i < count; ++i) {
        std::snprintf(name, sizeof(name), "img%03d.pgm", i);
        write_pgm(dir + "/" + name, images[static_cast<size_t>(i)]);
    }
}

}  // namespace fscs
