#pragma once

#include "core/tensor.hpp"

namespace fscs::kernels {

// C(MxN) = A(MxK) * B(KxN), all row-major. accumulate=false zeroes C first.
template <typename T>
void gemm_nn(int64_t m, int64_t n, int64_t k, const T* a, const T* b, T* c, bool accumulate);

// C(MxN) = A(MxK) * B(NxK)^T
template <typename T>
void gemm_nt(int64_t m, int64_t n, int64_t k, const T* a, const T* b, T* c, bool accumulate);

struct ConvDims {
    int64_t cin = 0, h = 0, w = 0;
    int64_t cout = 0, kh = 0, kw = 0;
    int64_t stride = 1, pad = 0;
    int64_t oh = 0, ow = 0;  // derived
};

ConvDims conv_dims(const Shape& input, const Shape& weight, int64_t stride, int64_t pad);

// col is (Cin*kh*kw) x (oh*ow)
template <typename T>
void im2col(const T* img, const ConvDims& d, T* col);

// scatter-add transpose of im2col; img must be zeroed by the caller
template <typename T>
void col2im(const T* col, const ConvDims& d, T* img);

// out[N,Cout,oh,ow]; bias may be null
template <typename T>
Tensor<T> conv_forward(const Tensor<T>& input, const Tensor<T>& weight, const T* bias,
                       int64_t stride, int64_t pad);

// gradient of conv_forward w.r.t. its input; (h, w) are the input spatial extents
template <typename T>
Tensor<T> conv_input_grad(const Tensor<T>& gout, const Tensor<T>& weight, int64_t stride,
                          int64_t pad, int64_t h, int64_t w);

// gradient of conv_forward w.r.t. its weight
template <typename T>
Tensor<T> conv_weight_grad(const Tensor<T>& gout, const Tensor<T>& input, int64_t stride,
                           int64_t pad, int64_t kh, int64_t kw);

// sum of gout over batch and spatial dims -> [Cout]
template <typename T>
Tensor<T> conv_bias_grad(const Tensor<T>& gout);

}  // namespace fscs::kernels
