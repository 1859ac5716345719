#include "core/pgd.hpp"

#include <cmath>

#include "core/dct.hpp"

namespace fscs {

template <typename T>
Tensor<T> soft_threshold(const Tensor<T>& v, double tau) {
    if (tau < 0.0) throw std::invalid_argument("soft_threshold: threshold must be non-negative");
    Tensor<T> out(v.shape());
    const T t = static_cast<T>(tau);
    for (int64_t i = 0, e = v.numel(); i < e; ++i) {
        T x = v[i];
        if (x > t)
            out[i] = x - t;
        else if (x < -t)
            out[i] = x + t;
        else
            out[i] = T(0);
    }
    return out;
}

namespace {

double residual_norm(const Tensor<double>& x, const Tensor<double>& y,
                     const SamplingMatrix<double>& s) {
    Tensor<double> yx = sample_value(x, s);
    double acc = 0;
    for (int64_t i = 0, e = yx.numel(); i < e; ++i) {
        double d = yx[i] - y[i];
        acc += d * d;
    }
    return std::sqrt(acc);
}

}  // namespace

PgdResult pgd_reconstruct(const Tensor<double>& y, const SamplingMatrix<double>& s,
                          const PgdConfig& cfg) {
    if (!(cfg.step_size > 0.0)) throw std::invalid_argument("pgd: step size must be positive");
    if (cfg.reg_weight < 0.0)
        throw std::invalid_argument("pgd: regularization weight must be non-negative");
    if (cfg.max_iters < 1) throw std::invalid_argument("pgd: max_iters must be at least 1");
    if (cfg.tolerance < 0.0) throw std::invalid_argument("pgd: tolerance must be non-negative");

    PgdResult res;
    res.x = init_reconstruct_value(y, s);
    res.residual_history.push_back(residual_norm(res.x, y, s));

    const int64_t b = s.block_side;
    for (int64_t k = 0; k < cfg.max_iters; ++k) {
        double lambda = cfg.reg_weight;
        if (cfg.continuation) {
            double cont = cfg.continuation_init * std::pow(cfg.continuation_decay,
                                                           static_cast<double>(k));
            lambda = std::max(lambda, cont);
        }

        Tensor<double> g = fidelity_gradient_value(res.x, y, s);
        Tensor<double> r(res.x.shape());
        for (int64_t i = 0, e = r.numel(); i < e; ++i) r[i] = res.x[i] - cfg.step_size * g[i];

        Tensor<double> next;
        const double tau = cfg.step_size * lambda;
        if (tau > 0.0) {
            Tensor<double> coef = block_dct2(r, b);
            coef = soft_threshold(coef, tau);
            next = block_idct2(coef, b);
        } else {
            next = std::move(r);  // prox with tau = 0 is the identity; skip the transform
        }

        if (!next.all_finite())
            throw std::runtime_error("pgd: non-finite iterate at iteration " + std::to_string(k) +
                                     "; step size " + std::to_string(cfg.step_size) +
                                     " is likely too large");

        double change_sq = 0, norm_sq = 0;
        for (int64_t i = 0, e = next.numel(); i < e; ++i) {
            double d = next[i] - res.x[i];
            change_sq += d * d;
            norm_sq += next[i] * next[i];
        }
        res.x = std::move(next);
        res.iters_used = k + 1;
        res.residual_history.push_back(residual_norm(res.x, y, s));

        if (norm_sq > 0 && std::sqrt(change_sq) < cfg.tolerance * std::sqrt(norm_sq)) break;
        if (norm_sq == 0 && change_sq == 0) break;
    }
    return res;
}

template Tensor<float> soft_threshold<float>(const Tensor<float>&, double);
template Tensor<double> soft_threshold<double>(const Tensor<double>&, double);

}  // namespace fscs
