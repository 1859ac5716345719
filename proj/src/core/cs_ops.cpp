#include "core/cs_ops.hpp"

#include <cmath>

#include "core/conv_kernels.hpp"
#include "core/rng.hpp"

namespace fscs {

template <typename T>
SamplingMatrix<T> init_sampling_matrix(int64_t block_side, double ratio, uint64_t seed) {
    if (block_side < 1) throw std::invalid_argument("sampling matrix: block side must be positive");
    if (!(ratio > 0.0) || ratio > 1.0)
        throw std::invalid_argument("sampling matrix: ratio must be in (0, 1], got " +
                                    std::to_string(ratio));
    const int64_t n = block_side * block_side;
    const int64_t m = static_cast<int64_t>(std::floor(ratio * static_cast<double>(n)));
    if (m < 1)
        throw std::invalid_argument("sampling matrix: ratio " + std::to_string(ratio) +
                                    " yields zero measurements for block side " +
                                    std::to_string(block_side));
    SamplingMatrix<T> s;
    s.block_side = block_side;
    s.ratio = ratio;
    s.phi = Tensor<T>({m, n});
    Rng rng(seed);
    const double sd = 1.0 / std::sqrt(static_cast<double>(n));
    for (int64_t i = 0; i < m * n; ++i) s.phi[i] = static_cast<T>(rng.normal() * sd);
    return s;
}

template <typename T>
void orthonormalize_rows(SamplingMatrix<T>& s) {
    const int64_t m = s.m(), n = s.n();
    if (m > n) throw std::invalid_argument("orthonormalize_rows: more rows than columns");
    std::vector<double> q(static_cast<size_t>(m * n));
    for (int64_t i = 0; i < m * n; ++i) q[static_cast<size_t>(i)] = static_cast<double>(s.phi[i]);
    for (int64_t i = 0; i < m; ++i) {
        double* qi = q.data() + i * n;
        for (int64_t j = 0; j < i; ++j) {
            const double* qj = q.data() + j * n;
            double dot = 0;
            for (int64_t k = 0; k < n; ++k) dot += qi[k] * qj[k];
            for (int64_t k = 0; k < n; ++k) qi[k] -= dot * qj[k];
        }
        double norm = 0;
        for (int64_t k = 0; k < n; ++k) norm += qi[k] * qi[k];
        norm = std::sqrt(norm);
        if (norm < 1e-12)
            throw std::runtime_error("orthonormalize_rows: rank-deficient sampling matrix");
        for (int64_t k = 0; k < n; ++k) qi[k] /= norm;
    }
    for (int64_t i = 0; i < m * n; ++i) s.phi[i] = static_cast<T>(q[static_cast<size_t>(i)]);
}

template <typename T>
double spectral_norm_sq(const SamplingMatrix<T>& s, int iters) {
    const int64_t m = s.m(), n = s.n();
    std::vector<double> v(static_cast<size_t>(m), 1.0 / std::sqrt(static_cast<double>(m)));
    std::vector<double> tmp_n(static_cast<size_t>(n)), next(static_cast<size_t>(m));
    double lambda = 0.0;
    for (int it = 0; it < iters; ++it) {
        // next = phi (phi^T v)
        for (int64_t j = 0; j < n; ++j) tmp_n[static_cast<size_t>(j)] = 0.0;
        for (int64_t i = 0; i < m; ++i) {
            const double vi = v[static_cast<size_t>(i)];
            const T* row = s.phi.data() + i * n;
            for (int64_t j = 0; j < n; ++j) tmp_n[static_cast<size_t>(j)] += vi * row[j];
        }
        double norm = 0.0;
        for (int64_t i = 0; i < m; ++i) {
            const T* row = s.phi.data() + i * n;
            double acc = 0.0;
            for (int64_t j = 0; j < n; ++j) acc += row[j] * tmp_n[static_cast<size_t>(j)];
            next[static_cast<size_t>(i)] = acc;
            norm += acc * acc;
        }
        norm = std::sqrt(norm);
        if (norm == 0.0) return 0.0;
        lambda = norm;
        for (int64_t i = 0; i < m; ++i) v[static_cast<size_t>(i)] = next[static_cast<size_t>(i)] / norm;
    }
    return lambda;  // eigenvalue of phi phi^T = sigma_max^2
}

namespace {

template <typename T>
Tensor<T> sample_kernel(const SamplingMatrix<T>& s) {
    return s.phi.reshaped({s.m(), 1, s.block_side, s.block_side});
}

template <typename T>
Tensor<T> init_kernel(const SamplingMatrix<T>& s) {
    const int64_t m = s.m(), n = s.n();
    Tensor<T> w({n, m, 1, 1});
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) w[j * m + i] = s.phi[i * n + j];
    return w;
}

template <typename T>
void check_sample_input(const Tensor<T>& x, int64_t block_side) {
    if (x.rank() != 4 || x.dim(1) != 1)
        throw std::invalid_argument("sample: expected a (1,1,H,W) image, got " +
                                    shape_str(x.shape()));
    if (x.dim(2) % block_side != 0 || x.dim(3) % block_side != 0)
        throw std::invalid_argument("sample: extents " + shape_str(x.shape()) +
                                    " not divisible by block side " + std::to_string(block_side) +
                                    "; pad with pad_to_block first");
}

template <typename T>
void check_measurements(const Tensor<T>& y, int64_t m) {
    if (y.rank() != 4 || y.dim(1) != m)
        throw std::invalid_argument("init_reconstruct: expected measurements with " +
                                    std::to_string(m) + " channels, got " + shape_str(y.shape()));
}

}  // namespace

template <typename T>
SamplingVars<T> bind_sampling(Tape<T>& t, const SamplingMatrix<T>& s, bool requires_grad) {
    SamplingVars<T> v;
    v.block_side = s.block_side;
    v.m = s.m();
    v.n = s.n();
    v.phi = t.leaf(s.phi, requires_grad);
    v.w_sample = reshape(t, v.phi, {v.m, int64_t{1}, s.block_side, s.block_side});
    Var phi_t = transpose2d(t, v.phi);
    v.w_init = reshape(t, phi_t, {v.n, v.m, int64_t{1}, int64_t{1}});
    return v;
}

template <typename T>
Var sample(Tape<T>& t, Var x, const SamplingVars<T>& s) {
    check_sample_input(t.value(x), s.block_side);
    return conv2d(t, x, s.w_sample, std::nullopt, s.block_side, 0);
}

template <typename T>
Var init_reconstruct(Tape<T>& t, Var y, const SamplingVars<T>& s) {
    check_measurements(t.value(y), s.m);
    Var lifted = conv2d(t, y, s.w_init, std::nullopt, 1, 0);
    return pixel_shuffle(t, lifted, s.block_side);
}

template <typename T>
Var fidelity_gradient(Tape<T>& t, Var x, Var y, const SamplingVars<T>& s) {
    Var yx = sample(t, x, s);
    const Tensor<T>& yv = t.value(y);
    if (!t.value(yx).same_shape(yv))
        throw std::invalid_argument("fidelity_gradient: measurements " + shape_str(yv.shape()) +
                                    " inconsistent with sampled image " +
                                    shape_str(t.value(yx).shape()));
    Var residual = sub(t, yx, y);
    return init_reconstruct(t, residual, s);
}

template <typename T>
Var orth_loss(Tape<T>& t, Var phi) {
    const Tensor<T>& p = t.value(phi);
    if (p.rank() != 2) throw std::invalid_argument("orth_loss: phi must be 2-d");
    const int64_t m = p.dim(0);
    Var phi_t = transpose2d(t, phi);
    Var gram = matmul(t, phi, phi_t);
    Tensor<T> eye({m, m});
    for (int64_t i = 0; i < m; ++i) eye[i * m + i] = T(1);
    Var id = t.leaf(std::move(eye), false);
    Var diff = sub(t, gram, id);
    Var fro = frobenius_sq(t, diff);
    return scale(t, fro, static_cast<T>(1.0 / (static_cast<double>(m) * static_cast<double>(m))));
}

template <typename T>
Tensor<T> sample_value(const Tensor<T>& x, const SamplingMatrix<T>& s) {
    check_sample_input(x, s.block_side);
    Tensor<T> w = sample_kernel(s);
    return kernels::conv_forward(x, w, static_cast<const T*>(nullptr), s.block_side, 0);
}

template <typename T>
Tensor<T> init_reconstruct_value(const Tensor<T>& y, const SamplingMatrix<T>& s) {
    check_measurements(y, s.m());
    Tensor<T> w = init_kernel(s);
    Tensor<T> lifted = kernels::conv_forward(y, w, static_cast<const T*>(nullptr), 1, 0);
    return pixel_shuffle_value(lifted, s.block_side);
}

template <typename T>
Tensor<T> fidelity_gradient_value(const Tensor<T>& x, const Tensor<T>& y,
                                  const SamplingMatrix<T>& s) {
    Tensor<T> yx = sample_value(x, s);
    if (!yx.same_shape(y))
        throw std::invalid_argument("fidelity_gradient: measurements " + shape_str(y.shape()) +
                                    " inconsistent with sampled image " + shape_str(yx.shape()));
    for (int64_t i = 0, e = yx.numel(); i < e; ++i) yx[i] -= y[i];
    return init_reconstruct_value(yx, s);
}

template <typename T>
T orth_loss_value(const SamplingMatrix<T>& s) {
    const int64_t m = s.m(), n = s.n();
    T acc = 0;
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < m; ++j) {
            const T* ri = s.phi.data() + i * n;
            const T* rj = s.phi.data() + j * n;
            T dot = 0;
            for (int64_t k = 0; k < n; ++k) dot += ri[k] * rj[k];
            T d = dot - (i == j ? T(1) : T(0));
            acc += d * d;
        }
    return acc / static_cast<T>(m * m);
}

#define FSCS_INSTANTIATE_CS(T)                                                              \
    template struct SamplingMatrix<T>;                                                      \
    template SamplingMatrix<T> init_sampling_matrix<T>(int64_t, double, uint64_t);          \
    template void orthonormalize_rows<T>(SamplingMatrix<T>&);                               \
    template double spectral_norm_sq<T>(const SamplingMatrix<T>&, int);                     \
    template SamplingVars<T> bind_sampling<T>(Tape<T>&, const SamplingMatrix<T>&, bool);    \
    template Var sample<T>(Tape<T>&, Var, const SamplingVars<T>&);                          \
    template Var init_reconstruct<T>(Tape<T>&, Var, const SamplingVars<T>&);                \
    template Var fidelity_gradient<T>(Tape<T>&, Var, Var, const SamplingVars<T>&);          \
    template Var orth_loss<T>(Tape<T>&, Var);                                               \
    template Tensor<T> sample_value<T>(const Tensor<T>&, const SamplingMatrix<T>&);         \
    template Tensor<T> init_reconstruct_value<T>(const Tensor<T>&, const SamplingMatrix<T>&); \
    template Tensor<T> fidelity_gradient_value<T>(const Tensor<T>&, const Tensor<T>&,       \
                                                  const SamplingMatrix<T>&);                \
    template T orth_loss_value<T>(const SamplingMatrix<T>&);

FSCS_INSTANTIATE_CS(float)
FSCS_INSTANTIATE_CS(double)
#undef FSCS_INSTANTIATE_CS

}  // namespace fscs
