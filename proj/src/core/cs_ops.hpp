#pragma once

#include "core/autograd.hpp"
#include "core/tensor.hpp"

namespace fscs {

// Learnable M x N block-sampling matrix; rows double as stride-b convolution
// kernels for sampling and (transposed) for the initial reconstruction, so
// both directions share the same parameters.
template <typename T>
struct SamplingMatrix {
    Tensor<T> phi;       // [M, N], N = block_side^2
    int64_t block_side = 0;
    double ratio = 0.0;

    int64_t m() const { return phi.dim(0); }
    int64_t n() const { return phi.dim(1); }
};

// M = floor(ratio * N), entries i.i.d. Gaussian with variance 1/N.
template <typename T>
SamplingMatrix<T> init_sampling_matrix(int64_t block_side, double ratio, uint64_t seed);

// Modified Gram-Schmidt on the rows (requires M <= N).
template <typename T>
void orthonormalize_rows(SamplingMatrix<T>& s);

// Largest squared singular value of phi, by power iteration on phi phi^T.
template <typename T>
double spectral_norm_sq(const SamplingMatrix<T>& s, int iters = 200);

// --- graph ops (autograd-aware) ---

// phi bound on a tape plus the two kernel views derived from it.
template <typename T>
struct SamplingVars {
    Var phi;       // [M, N]
    Var w_sample;  // [M, 1, b, b]
    Var w_init;    // [N, M, 1, 1]
    int64_t block_side = 0;
    int64_t m = 0;
    int64_t n = 0;
};

template <typename T>
SamplingVars<T> bind_sampling(Tape<T>& t, const SamplingMatrix<T>& s, bool requires_grad);

// Y = W_phi * X, stride-b convolution without bias. X: [1,1,H,W] with H, W
// divisible by the block side.
template <typename T>
Var sample(Tape<T>& t, Var x, const SamplingVars<T>& s);

// X_init = PixelShuffle(W_phi^T * Y): per-block phi^T y.
template <typename T>
Var init_reconstruct(Tape<T>& t, Var y, const SamplingVars<T>& s);

// g = phi^T (phi x - y), the gradient of 1/2 ||phi x - y||^2 in x.
template <typename T>
Var fidelity_gradient(Tape<T>& t, Var x, Var y, const SamplingVars<T>& s);

// (1/M^2) || phi phi^T - I ||_F^2
template <typename T>
Var orth_loss(Tape<T>& t, Var phi);

// --- plain value versions (no gradients; used by the classical solver and tests) ---

template <typename T>
Tensor<T> sample_value(const Tensor<T>& x, const SamplingMatrix<T>& s);

template <typename T>
Tensor<T> init_reconstruct_value(const Tensor<T>& y, const SamplingMatrix<T>& s);

template <typename T>
Tensor<T> fidelity_gradient_value(const Tensor<T>& x, const Tensor<T>& y,
                                  const SamplingMatrix<T>& s);

template <typename T>
T orth_loss_value(const SamplingMatrix<T>& s);

}  // namespace fscs
