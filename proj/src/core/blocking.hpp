#pragma once

#include "core/tensor.hpp"

namespace fscs {

struct BlockGrid {
    int64_t height = 0, width = 0;      // original extents
    int64_t padded_h = 0, padded_w = 0;
    int64_t block_side = 0;

    int64_t blocks_y() const { return padded_h / block_side; }
    int64_t blocks_x() const { return padded_w / block_side; }
    int64_t pad_bottom() const { return padded_h - height; }
    int64_t pad_right() const { return padded_w - width; }
};

// Reflect-pads (mirror, edge inclusive) on the right and bottom up to the next
// multiple of block_side. Already-divisible inputs come back unchanged.
template <typename T>
std::pair<Tensor<T>, BlockGrid> pad_to_block(const Tensor<T>& x, int64_t block_side);

// Crops the original extents back out; exact inverse of pad_to_block.
template <typename T>
Tensor<T> crop_from_block(const Tensor<T>& x, const BlockGrid& grid);

}  // namespace fscs
