#include "core/dct.hpp"

#include <cmath>

namespace fscs {

template <typename T>
Tensor<T> dct_matrix(int64_t b) {
    Tensor<T> d({b, b});
    const double norm0 = std::sqrt(1.0 / static_cast<double>(b));
    const double norm = std::sqrt(2.0 / static_cast<double>(b));
    for (int64_t i = 0; i < b; ++i)
        for (int64_t j = 0; j < b; ++j) {
            double v = std::cos(M_PI * (2.0 * static_cast<double>(j) + 1.0) *
                                static_cast<double>(i) / (2.0 * static_cast<double>(b)));
            d[i * b + j] = static_cast<T>((i == 0 ? norm0 : norm) * v);
        }
    return d;
}

namespace {

struct Geometry {
    int64_t h = 0, w = 0, lead = 1;
};

template <typename T>
Geometry geometry(const Tensor<T>& x, int64_t b) {
    Geometry g;
    if (x.rank() == 2) {
        g.h = x.dim(0);
        g.w = x.dim(1);
    } else if (x.rank() == 4) {
        g.lead = x.dim(0) * x.dim(1);
        g.h = x.dim(2);
        g.w = x.dim(3);
    } else {
        throw std::invalid_argument("block dct: expected 2-d or 4-d tensor, got " +
                                    shape_str(x.shape()));
    }
    if (b < 1) throw std::invalid_argument("block dct: block side must be positive");
    if (g.h % b != 0 || g.w % b != 0)
        throw std::invalid_argument("block dct: extents " + shape_str(x.shape()) +
                                    " not divisible by block side " + std::to_string(b));
    return g;
}

// out_block = L * block * L^T applied per block, with L either D or D^T.
template <typename T>
Tensor<T> apply_blockwise(const Tensor<T>& x, int64_t b, const Tensor<T>& l, bool l_transposed) {
    Geometry g = geometry(x, b);
    Tensor<T> out(x.shape());
    std::vector<T> blk(static_cast<size_t>(b * b)), tmp(static_cast<size_t>(b * b));
    auto lat = [&](int64_t i, int64_t j) { return l_transposed ? l[j * b + i] : l[i * b + j]; };
    for (int64_t p = 0; p < g.lead; ++p) {
        const T* plane = x.data() + p * g.h * g.w;
        T* oplane = out.data() + p * g.h * g.w;
        for (int64_t by = 0; by < g.h; by += b)
            for (int64_t bx = 0; bx < g.w; bx += b) {
                for (int64_t i = 0; i < b; ++i)
                    for (int64_t j = 0; j < b; ++j)
                        blk[static_cast<size_t>(i * b + j)] = plane[(by + i) * g.w + bx + j];
                // tmp = L * blk
                for (int64_t i = 0; i < b; ++i)
                    for (int64_t j = 0; j < b; ++j) {
                        T acc = 0;
                        for (int64_t k = 0; k < b; ++k)
                            acc += lat(i, k) * blk[static_cast<size_t>(k * b + j)];
                        tmp[static_cast<size_t>(i * b + j)] = acc;
                    }
                // out = tmp * L^T
                for (int64_t i = 0; i < b; ++i)
                    for (int64_t j = 0; j < b; ++j) {
                        T acc = 0;
                        for (int64_t k = 0; k < b; ++k)
                            acc += tmp[static_cast<size_t>(i * b + k)] * lat(j, k);
                        oplane[(by + i) * g.w + bx + j] = acc;
                    }
            }
    }
    return out;
}

}  // namespace

template <typename T>
Tensor<T> block_dct2(const Tensor<T>& x, int64_t block_side) {
    Tensor<T> d = dct_matrix<T>(block_side);
    return apply_blockwise(x, block_side, d, false);
}

template <typename T>
Tensor<T> block_idct2(const Tensor<T>& x, int64_t block_side) {
    Tensor<T> d = dct_matrix<T>(block_side);
    return apply_blockwise(x, block_side, d, true);
}

#define FSCS_INSTANTIATE_DCT(T)                                  \
    template Tensor<T> block_dct2<T>(const Tensor<T>&, int64_t); \
    template Tensor<T> block_idct2<T>(const Tensor<T>&, int64_t); \
    template Tensor<T> dct_matrix<T>(int64_t);

FSCS_INSTANTIATE_DCT(float)
FSCS_INSTANTIATE_DCT(double)
#undef FSCS_INSTANTIATE_DCT

}  // namespace fscs
