#include "core/conv_kernels.hpp"

#include <algorithm>
#include <cstring>
#include <memory>

namespace fscs::kernels {

namespace {

template <typename T>
struct SimdTraits;
template <>
struct SimdTraits<float> {
    using V = float __attribute__((vector_size(32)));
    static constexpr int64_t lanes = 8;
};
template <>
struct SimdTraits<double> {
    using V = double __attribute__((vector_size(32)));
    static constexpr int64_t lanes = 4;
};

// fixed lane-wise summation order, so results stay deterministic
template <typename T>
inline T dot_k(const T* a, const T* b, int64_t k) {
    using V = typename SimdTraits<T>::V;
    constexpr int64_t L = SimdTraits<T>::lanes;
    V acc0 = {}, acc1 = {};
    int64_t p = 0;
    for (; p + 2 * L <= k; p += 2 * L) {
        V a0, a1, b0, b1;
        __builtin_memcpy(&a0, a + p, sizeof(V));
        __builtin_memcpy(&a1, a + p + L, sizeof(V));
        __builtin_memcpy(&b0, b + p, sizeof(V));
        __builtin_memcpy(&b1, b + p + L, sizeof(V));
        acc0 += a0 * b0;
        acc1 += a1 * b1;
    }
    T s = 0;
    for (int64_t l = 0; l < L; ++l) s += acc0[l];
    for (int64_t l = 0; l < L; ++l) s += acc1[l];
    for (; p < k; ++p) s += a[p] * b[p];
    return s;
}

// 4x16 register-tiled block: C[4][16] += A[4][K] * B[K][16]
template <typename T>
inline void micro_4x16(int64_t k, const T* a0, const T* a1, const T* a2, const T* a3, const T* b,
                       int64_t ldb, T* c0, T* c1, T* c2, T* c3) {
    T acc0[16] = {}, acc1[16] = {}, acc2[16] = {}, acc3[16] = {};
    for (int64_t p = 0; p < k; ++p) {
        const T* bp = b + p * ldb;
        T w0 = a0[p], w1 = a1[p], w2 = a2[p], w3 = a3[p];
        for (int j = 0; j < 16; ++j) {
            T x = bp[j];
            acc0[j] += w0 * x;
            acc1[j] += w1 * x;
            acc2[j] += w2 * x;
            acc3[j] += w3 * x;
        }
    }
    for (int j = 0; j < 16; ++j) c0[j] += acc0[j];
    for (int j = 0; j < 16; ++j) c1[j] += acc1[j];
    for (int j = 0; j < 16; ++j) c2[j] += acc2[j];
    for (int j = 0; j < 16; ++j) c3[j] += acc3[j];
}

template <typename T>
inline void micro_1x16(int64_t k, const T* a, const T* b, int64_t ldb, T* c) {
    T acc[16] = {};
    for (int64_t p = 0; p < k; ++p) {
        const T* bp = b + p * ldb;
        T w = a[p];
        for (int j = 0; j < 16; ++j) acc[j] += w * bp[j];
    }
    for (int j = 0; j < 16; ++j) c[j] += acc[j];
}

template <typename T>
inline void micro_1xn(int64_t k, int64_t n, const T* a, const T* b, int64_t ldb, T* c) {
    for (int64_t p = 0; p < k; ++p) {
        T w = a[p];
        const T* bp = b + p * ldb;
        for (int64_t j = 0; j < n; ++j) c[j] += w * bp[j];
    }
}

}  // namespace

template <typename T>
void gemm_nn(int64_t m, int64_t n, int64_t k, const T* a, const T* b, T* c, bool accumulate) {
    if (n <= 16 && k >= 32) {
        // narrow C starves the column-parallel kernel; transpose B (tiny) and
        // run the dot kernel over k instead
        auto bt = std::make_unique_for_overwrite<T[]>(static_cast<size_t>(n * k));
        for (int64_t p = 0; p < k; ++p)
            for (int64_t j = 0; j < n; ++j) bt[static_cast<size_t>(j * k + p)] = b[p * n + j];
        gemm_nt(m, n, k, a, bt.get(), c, accumulate);
        return;
    }
    if (!accumulate) std::memset(c, 0, sizeof(T) * static_cast<size_t>(m * n));
    int64_t i = 0;
    for (; i + 4 <= m; i += 4) {
        const T* a0 = a + (i + 0) * k;
        const T* a1 = a + (i + 1) * k;
        const T* a2 = a + (i + 2) * k;
        const T* a3 = a + (i + 3) * k;
        T* c0 = c + (i + 0) * n;
        T* c1 = c + (i + 1) * n;
        T* c2 = c + (i + 2) * n;
        T* c3 = c + (i + 3) * n;
        int64_t j = 0;
        for (; j + 16 <= n; j += 16)
            micro_4x16(k, a0, a1, a2, a3, b + j, n, c0 + j, c1 + j, c2 + j, c3 + j);
        if (j < n) {
            micro_1xn(k, n - j, a0, b + j, n, c0 + j);
            micro_1xn(k, n - j, a1, b + j, n, c1 + j);
            micro_1xn(k, n - j, a2, b + j, n, c2 + j);
            micro_1xn(k, n - j, a3, b + j, n, c3 + j);
        }
    }
    for (; i < m; ++i) {
        int64_t j = 0;
        for (; j + 16 <= n; j += 16) micro_1x16(k, a + i * k, b + j, n, c + i * n + j);
        if (j < n) micro_1xn(k, n - j, a + i * k, b + j, n, c + i * n + j);
    }
}

template <typename T>
void gemm_nt(int64_t m, int64_t n, int64_t k, const T* a, const T* b, T* c, bool accumulate) {
    // dot-product formulation; rows of both A and B are contiguous over k
    for (int64_t i = 0; i < m; ++i) {
        const T* ai = a + i * k;
        T* ci = c + i * n;
        for (int64_t j = 0; j < n; ++j) {
            const T s = dot_k(ai, b + j * k, k);
            ci[j] = accumulate ? ci[j] + s : s;
        }
    }
}

ConvDims conv_dims(const Shape& input, const Shape& weight, int64_t stride, int64_t pad) {
    if (input.size() != 4)
        throw std::invalid_argument("conv2d: input must be 4-d, got " + shape_str(input));
    if (weight.size() != 4)
        throw std::invalid_argument("conv2d: weight must be 4-d, got " + shape_str(weight));
    if (stride < 1) throw std::invalid_argument("conv2d: stride must be positive");
    if (pad < 0) throw std::invalid_argument("conv2d: padding must be non-negative");
    ConvDims d;
    d.cin = input[1];
    d.h = input[2];
    d.w = input[3];
    d.cout = weight[0];
    d.kh = weight[2];
    d.kw = weight[3];
    d.stride = stride;
    d.pad = pad;
    if (weight[1] != d.cin)
        throw std::invalid_argument("conv2d: input has " + std::to_string(d.cin) +
                                    " channels but weight expects " + std::to_string(weight[1]));
    if (d.h + 2 * pad < d.kh || d.w + 2 * pad < d.kw)
        throw std::invalid_argument("conv2d: kernel " + std::to_string(d.kh) + "x" +
                                    std::to_string(d.kw) + " larger than padded input " +
                                    shape_str(input));
    d.oh = (d.h + 2 * pad - d.kh) / stride + 1;
    d.ow = (d.w + 2 * pad - d.kw) / stride + 1;
    return d;
}

template <typename T>
void im2col(const T* img, const ConvDims& d, T* col) {
    const int64_t ohw = d.oh * d.ow;
    for (int64_t c = 0; c < d.cin; ++c) {
        const T* plane = img + c * d.h * d.w;
        for (int64_t ky = 0; ky < d.kh; ++ky) {
            for (int64_t kx = 0; kx < d.kw; ++kx) {
                T* row = col + ((c * d.kh + ky) * d.kw + kx) * ohw;
                for (int64_t oy = 0; oy < d.oh; ++oy) {
                    int64_t iy = oy * d.stride - d.pad + ky;
                    T* dst = row + oy * d.ow;
                    if (iy < 0 || iy >= d.h) {
                        std::memset(dst, 0, sizeof(T) * static_cast<size_t>(d.ow));
                        continue;
                    }
                    const T* src = plane + iy * d.w;
                    int64_t ix = -d.pad + kx;  // at ox = 0
                    if (d.stride == 1) {
                        int64_t lead = std::min(d.ow, std::max<int64_t>(0, -ix));
                        int64_t valid_end = std::min(d.ow, d.w - ix);
                        for (int64_t ox = 0; ox < lead; ++ox) dst[ox] = 0;
                        if (valid_end > lead)
                            std::memcpy(dst + lead, src + ix + lead,
                                        sizeof(T) * static_cast<size_t>(valid_end - lead));
                        for (int64_t ox = std::max(lead, valid_end); ox < d.ow; ++ox) dst[ox] = 0;
                    } else {
                        for (int64_t ox = 0; ox < d.ow; ++ox, ix += d.stride)
                            dst[ox] = (ix >= 0 && ix < d.w) ? src[ix] : T(0);
                    }
                }
            }
        }
    }
}

template <typename T>
void col2im(const T* col, const ConvDims& d, T* img) {
    const int64_t ohw = d.oh * d.ow;
    for (int64_t c = 0; c < d.cin; ++c) {
        T* plane = img + c * d.h * d.w;
        for (int64_t ky = 0; ky < d.kh; ++ky) {
            for (int64_t kx = 0; kx < d.kw; ++kx) {
                const T* row = col + ((c * d.kh + ky) * d.kw + kx) * ohw;
                for (int64_t oy = 0; oy < d.oh; ++oy) {
                    int64_t iy = oy * d.stride - d.pad + ky;
                    if (iy < 0 || iy >= d.h) continue;
                    T* dst = plane + iy * d.w;
                    const T* src = row + oy * d.ow;
                    if (d.stride == 1) {
                        const int64_t off = kx - d.pad;  // ix = ox + off
                        const int64_t lo = std::max<int64_t>(0, -off);
                        const int64_t hi = std::min(d.ow, d.w - off);
                        T* dp = dst + off + lo;
                        const T* sp = src + lo;
                        for (int64_t i = 0, e = hi - lo; i < e; ++i) dp[i] += sp[i];
                    } else {
                        int64_t ix = -d.pad + kx;
                        for (int64_t ox = 0; ox < d.ow; ++ox, ix += d.stride)
                            if (ix >= 0 && ix < d.w) dst[ix] += src[ox];
                    }
                }
            }
        }
    }
}

template <typename T>
Tensor<T> conv_forward(const Tensor<T>& input, const Tensor<T>& weight, const T* bias,
                       int64_t stride, int64_t pad) {
    ConvDims d = conv_dims(input.shape(), weight.shape(), stride, pad);
    const int64_t batch = input.dim(0);
    const int64_t k = d.cin * d.kh * d.kw;
    const int64_t ohw = d.oh * d.ow;
    Tensor<T> out({batch, d.cout, d.oh, d.ow});
    auto col = std::make_unique_for_overwrite<T[]>(static_cast<size_t>(k * ohw));
    for (int64_t n = 0; n < batch; ++n) {
        im2col(input.data() + n * d.cin * d.h * d.w, d, col.get());
        T* o = out.data() + n * d.cout * ohw;
        gemm_nn(d.cout, ohw, k, weight.data(), col.get(), o, false);
        if (bias) {
            for (int64_t co = 0; co < d.cout; ++co) {
                T b = bias[co];
                T* op = o + co * ohw;
                for (int64_t i = 0; i < ohw; ++i) op[i] += b;
            }
        }
    }
    return out;
}

template <typename T>
Tensor<T> conv_input_grad(const Tensor<T>& gout, const Tensor<T>& weight, int64_t stride,
                          int64_t pad, int64_t h, int64_t w) {
    Shape in_shape{gout.dim(0), weight.dim(1), h, w};
    ConvDims d = conv_dims(in_shape, weight.shape(), stride, pad);
    if (d.oh != gout.dim(2) || d.ow != gout.dim(3) || d.cout != gout.dim(1))
        throw std::invalid_argument("conv2d backward: output gradient shape " +
                                    shape_str(gout.shape()) + " inconsistent with input " +
                                    shape_str(in_shape));
    const int64_t batch = gout.dim(0);
    const int64_t k = d.cin * d.kh * d.kw;
    const int64_t ohw = d.oh * d.ow;
    Tensor<T> gin(in_shape);
    // materialize W^T once: (k x cout)
    auto wt = std::make_unique_for_overwrite<T[]>(static_cast<size_t>(k * d.cout));
    for (int64_t co = 0; co < d.cout; ++co)
        for (int64_t p = 0; p < k; ++p) wt[static_cast<size_t>(p * d.cout + co)] = weight[co * k + p];
    auto col = std::make_unique_for_overwrite<T[]>(static_cast<size_t>(k * ohw));
    const bool few_outputs = ohw <= 32 && d.cout >= 16;
    std::unique_ptr<T[]> gt;
    if (few_outputs) gt = std::make_unique_for_overwrite<T[]>(static_cast<size_t>(ohw * d.cout));
    for (int64_t n = 0; n < batch; ++n) {
        const T* g = gout.data() + n * d.cout * ohw;
        if (few_outputs) {
            // tiny output maps starve the column-parallel kernel; flip to the
            // dot kernel over cout instead
            for (int64_t co = 0; co < d.cout; ++co)
                for (int64_t o = 0; o < ohw; ++o)
                    gt[static_cast<size_t>(o * d.cout + co)] = g[co * ohw + o];
            gemm_nt(k, ohw, d.cout, wt.get(), gt.get(), col.get(), false);
        } else {
            gemm_nn(k, ohw, d.cout, wt.get(), g, col.get(), false);
        }
        col2im(col.get(), d, gin.data() + n * d.cin * d.h * d.w);
    }
    return gin;
}

template <typename T>
Tensor<T> conv_weight_grad(const Tensor<T>& gout, const Tensor<T>& input, int64_t stride,
                           int64_t pad, int64_t kh, int64_t kw) {
    Shape w_shape{gout.dim(1), input.dim(1), kh, kw};
    ConvDims d = conv_dims(input.shape(), w_shape, stride, pad);
    if (d.oh != gout.dim(2) || d.ow != gout.dim(3))
        throw std::invalid_argument("conv2d backward: weight gradient shape mismatch");
    const int64_t batch = input.dim(0);
    const int64_t k = d.cin * d.kh * d.kw;
    const int64_t ohw = d.oh * d.ow;
    Tensor<T> gw(w_shape);
    auto col = std::make_unique_for_overwrite<T[]>(static_cast<size_t>(k * ohw));
    const bool few_outputs = ohw <= 32 && k >= 16;
    std::unique_ptr<T[]> colt;
    if (few_outputs) colt = std::make_unique_for_overwrite<T[]>(static_cast<size_t>(ohw * k));
    for (int64_t n = 0; n < batch; ++n) {
        im2col(input.data() + n * d.cin * d.h * d.w, d, col.get());
        const T* g = gout.data() + n * d.cout * ohw;
        if (few_outputs) {
            // short dot lengths run scalar; transpose once and use the wide kernel
            for (int64_t p = 0; p < k; ++p)
                for (int64_t o = 0; o < ohw; ++o)
                    colt[static_cast<size_t>(o * k + p)] = col[static_cast<size_t>(p * ohw + o)];
            gemm_nn(d.cout, k, ohw, g, colt.get(), gw.data(), true);
        } else {
            gemm_nt(d.cout, k, ohw, g, col.get(), gw.data(), true);
        }
    }
    return gw;
}

template <typename T>
Tensor<T> conv_bias_grad(const Tensor<T>& gout) {
    const int64_t batch = gout.dim(0), cout = gout.dim(1), ohw = gout.dim(2) * gout.dim(3);
    Tensor<T> gb({cout});
    for (int64_t n = 0; n < batch; ++n)
        for (int64_t co = 0; co < cout; ++co) {
            const T* p = gout.data() + (n * cout + co) * ohw;
            T s = 0;
            for (int64_t i = 0; i < ohw; ++i) s += p[i];
            gb[co] += s;
        }
    return gb;
}

#define FSCS_INSTANTIATE(T)                                                                      \
    template void gemm_nn<T>(int64_t, int64_t, int64_t, const T*, const T*, T*, bool);          \
    template void gemm_nt<T>(int64_t, int64_t, int64_t, const T*, const T*, T*, bool);          \
    template void im2col<T>(const T*, const ConvDims&, T*);                                     \
    template void col2im<T>(const T*, const ConvDims&, T*);                                     \
    template Tensor<T> conv_forward<T>(const Tensor<T>&, const Tensor<T>&, const T*, int64_t,   \
                                       int64_t);                                                \
    template Tensor<T> conv_input_grad<T>(const Tensor<T>&, const Tensor<T>&, int64_t, int64_t, \
                                          int64_t, int64_t);                                    \
    template Tensor<T> conv_weight_grad<T>(const Tensor<T>&, const Tensor<T>&, int64_t,         \
                                           int64_t, int64_t, int64_t);                          \
    template Tensor<T> conv_bias_grad<T>(const Tensor<T>&);

FSCS_INSTANTIATE(float)
FSCS_INSTANTIATE(double)
#undef FSCS_INSTANTIATE

}  // namespace fscs::kernels
