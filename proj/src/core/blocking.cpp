#include "core/blocking.hpp"

namespace fscs {

namespace {

// mirror with edge repeat: abcd -> abcd dcba abcd ...
int64_t reflect_index(int64_t i, int64_t n) {
    int64_t period = 2 * n;
    int64_t j = i % period;
    return j < n ? j : period - 1 - j;
}

}  // namespace

template <typename T>
std::pair<Tensor<T>, BlockGrid> pad_to_block(const Tensor<T>& x, int64_t block_side) {
    if (x.rank() != 2)
        throw std::invalid_argument("pad_to_block: expected a (H,W) image, got " +
                                    shape_str(x.shape()));
    if (block_side < 1) throw std::invalid_argument("pad_to_block: block side must be positive");
    BlockGrid g;
    g.height = x.dim(0);
    g.width = x.dim(1);
    g.block_side = block_side;
    g.padded_h = (g.height + block_side - 1) / block_side * block_side;
    g.padded_w = (g.width + block_side - 1) / block_side * block_side;
    if (g.padded_h == g.height && g.padded_w == g.width) return {x, g};
    Tensor<T> out({g.padded_h, g.padded_w});
    for (int64_t y = 0; y < g.padded_h; ++y) {
        const T* src = x.data() + reflect_index(y, g.height) * g.width;
        T* dst = out.data() + y * g.padded_w;
        for (int64_t c = 0; c < g.padded_w; ++c) dst[c] = src[reflect_index(c, g.width)];
    }
    return {std::move(out), g};
}

template <typename T>
Tensor<T> crop_from_block(const Tensor<T>& x, const BlockGrid& grid) {
    if (x.rank() != 2 || x.dim(0) != grid.padded_h || x.dim(1) != grid.padded_w)
        throw std::invalid_argument("crop_from_block: tensor " + shape_str(x.shape()) +
                                    " inconsistent with grid (" + std::to_string(grid.padded_h) +
                                    "," + std::to_string(grid.padded_w) + ")");
    if (grid.height > grid.padded_h || grid.width > grid.padded_w || grid.block_side < 1 ||
        grid.padded_h % grid.block_side != 0 || grid.padded_w % grid.block_side != 0)
        throw std::invalid_argument("crop_from_block: inconsistent grid");
    if (grid.height == grid.padded_h && grid.width == grid.padded_w) return x;
    Tensor<T> out({grid.height, grid.width});
    for (int64_t y = 0; y < grid.height; ++y)
        for (int64_t c = 0; c < grid.width; ++c) out[y * grid.width + c] = x[y * grid.padded_w + c];
    return out;
}

#define FSCS_INSTANTIATE_BLOCKING(T)                                                        \
    template std::pair<Tensor<T>, BlockGrid> pad_to_block<T>(const Tensor<T>&, int64_t);    \
    template Tensor<T> crop_from_block<T>(const Tensor<T>&, const BlockGrid&);

FSCS_INSTANTIATE_BLOCKING(float)
FSCS_INSTANTIATE_BLOCKING(double)
#undef FSCS_INSTANTIATE_BLOCKING

}  // namespace fscs
