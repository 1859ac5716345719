#pragma once

#include "core/tensor.hpp"

namespace fscs {

// Orthonormal type-II 2-D DCT applied per non-overlapping block. idct is the
// exact inverse (and transpose). Input is a (1,1,H,W) image or (H,W) matrix
// with extents divisible by block_side.
template <typename T>
Tensor<T> block_dct2(const Tensor<T>& x, int64_t block_side);

template <typename T>
Tensor<T> block_idct2(const Tensor<T>& x, int64_t block_side);

// b x b orthonormal DCT-II basis matrix, row i = basis function i.
template <typename T>
Tensor<T> dct_matrix(int64_t b);

}  // namespace fscs
