#pragma once

#include "core/cs_ops.hpp"
#include "core/tensor.hpp"

namespace fscs {

// Proximal gradient descent with an l1-in-block-DCT prior. The solver runs in
// double; inputs in float are converted by the caller.
struct PgdConfig {
    double step_size = 1.0;     // rho
    double reg_weight = 0.0;    // lambda
    int64_t max_iters = 200;
    double tolerance = 1e-6;    // relative iterate change
    // Geometric lambda continuation: start at continuation_init and decay
    // toward reg_weight each iteration. Helps noiseless sparse recovery where
    // a fixed lambda biases the solution.
    bool continuation = false;
    double continuation_init = 0.1;
    double continuation_decay = 0.97;
};

// Elementwise sign(v) * max(|v| - tau, 0).
template <typename T>
Tensor<T> soft_threshold(const Tensor<T>& v, double tau);

struct PgdResult {
    Tensor<double> x;                      // [1,1,H,W]
    int64_t iters_used = 0;
    std::vector<double> residual_history;  // ||phi x - y||_2, entry 0 = initial estimate
};

// Iterates x <- prox(x - rho * phi^T(phi x - y)) from x0 = phi^T y.
// y: [1,M,h,w]. Throws on non-finite iterates (step size too large).
PgdResult pgd_reconstruct(const Tensor<double>& y, const SamplingMatrix<double>& s,
                          const PgdConfig& cfg);

}  // namespace fscs
