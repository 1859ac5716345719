#include "core/autograd.hpp"

#include <cmath>
#include <memory>

#include "core/conv_kernels.hpp"

namespace fscs {

template <typename T>
Var Tape<T>::leaf(Tensor<T> value, bool requires_grad) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.is_leaf = true;
    nodes_.push_back(std::move(n));
    return Var{static_cast<int32_t>(nodes_.size() - 1)};
}

template <typename T>
Var Tape<T>::record(Tensor<T> value, std::vector<Var> parents, BackwardFn fn) {
    Node n;
    n.value = std::move(value);
    n.parents.reserve(parents.size());
    for (Var p : parents) {
        node(p);  // validate
        n.parents.push_back(p.id);
        n.requires_grad = n.requires_grad || nodes_[static_cast<size_t>(p.id)].requires_grad;
    }
    if (n.requires_grad) n.backward = std::move(fn);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int32_t>(nodes_.size() - 1)};
}

template <typename T>
void Tape<T>::accumulate(Var v, const Tensor<T>& g) {
    Node& n = node(v);
    if (!n.requires_grad) return;
    if (!n.value.same_shape(g))
        throw std::invalid_argument("tape: gradient shape " + shape_str(g.shape()) +
                                    " does not match value shape " + shape_str(n.value.shape()));
    Tensor<T>& buf = grads_[static_cast<size_t>(v.id)];
    if (buf.empty()) {
        buf = g;
    } else {
        T* d = buf.data();
        const T* s = g.data();
        for (int64_t i = 0, e = g.numel(); i < e; ++i) d[i] += s[i];
    }
}

template <typename T>
void Tape<T>::accumulate(Var v, Tensor<T>&& g) {
    Node& n = node(v);
    if (!n.requires_grad) return;
    if (!n.value.same_shape(g))
        throw std::invalid_argument("tape: gradient shape " + shape_str(g.shape()) +
                                    " does not match value shape " + shape_str(n.value.shape()));
    Tensor<T>& buf = grads_[static_cast<size_t>(v.id)];
    if (buf.empty()) {
        buf = std::move(g);
    } else {
        T* d = buf.data();
        const T* s = g.data();
        for (int64_t i = 0, e = g.numel(); i < e; ++i) d[i] += s[i];
    }
}

template <typename T>
GradientMap<T> Tape<T>::backward(Var loss) {
    const Node& ln = node(loss);
    if (ln.value.numel() != 1)
        throw std::invalid_argument("backward: loss must be scalar, got " +
                                    shape_str(ln.value.shape()));
    grads_.assign(nodes_.size(), Tensor<T>{});
    grads_[static_cast<size_t>(loss.id)] = Tensor<T>::full(ln.value.shape(), T(1));
    for (int32_t i = static_cast<int32_t>(nodes_.size()) - 1; i >= 0; --i) {
        Node& n = nodes_[static_cast<size_t>(i)];
        if (!n.requires_grad || n.is_leaf || !n.backward) continue;
        Tensor<T>& g = grads_[static_cast<size_t>(i)];
        if (g.empty()) continue;  // not reachable from the loss
        n.backward(*this, g);
        g = Tensor<T>{};  // free as we go
    }
    GradientMap<T> gm;
    for (size_t i = 0; i < nodes_.size(); ++i) {
        const Node& n = nodes_[i];
        if (!n.is_leaf || !n.requires_grad) continue;
        Tensor<T>& g = grads_[i];
        gm.grads_[static_cast<int32_t>(i)] =
            g.empty() ? Tensor<T>::zeros(n.value.shape()) : std::move(g);
    }
    grads_.clear();
    return gm;
}

namespace {

template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
}

}  // namespace

template <typename T>
Tensor<T> pixel_shuffle_value(const Tensor<T>& in, int64_t s) {
    if (in.rank() != 4)
        throw std::invalid_argument("pixel_shuffle: input must be 4-d, got " +
                                    shape_str(in.shape()));
    if (s < 1) throw std::invalid_argument("pixel_shuffle: factor must be positive");
    const int64_t n = in.dim(0), c_in = in.dim(1), h = in.dim(2), w = in.dim(3);
    if (c_in % (s * s) != 0)
        throw std::invalid_argument("pixel_shuffle: " + std::to_string(c_in) +
                                    " channels not divisible by " + std::to_string(s * s));
    const int64_t c = c_in / (s * s);
    Tensor<T> out({n, c, h * s, w * s});
    if (h * w >= s * s) {
        for (int64_t b = 0; b < n; ++b)
            for (int64_t co = 0; co < c; ++co)
                for (int64_t sy = 0; sy < s; ++sy)
                    for (int64_t sx = 0; sx < s; ++sx) {
                        const T* src = in.data() + (((b * c_in) + (co * s + sy) * s + sx) * h) * w;
                        for (int64_t y = 0; y < h; ++y) {
                            T* dst = out.data() +
                                     ((b * c + co) * h * s + y * s + sy) * (w * s) + sx;
                            const T* sp = src + y * w;
                            for (int64_t x = 0; x < w; ++x) dst[x * s] = sp[x];
                        }
                    }
    } else {
        // large factors on small maps: iterate output-major instead
        const int64_t hs = h * s, ws = w * s;
        for (int64_t b = 0; b < n; ++b)
            for (int64_t co = 0; co < c; ++co) {
                T* dst = out.data() + (b * c + co) * hs * ws;
                const T* src = in.data() + b * c_in * h * w + co * s * s * h * w;
                for (int64_t yo = 0; yo < hs; ++yo) {
                    const int64_t y = yo / s, sy = yo % s;
                    for (int64_t xo = 0; xo < ws; ++xo) {
                        const int64_t x = xo / s, sx = xo % s;
                        dst[yo * ws + xo] = src[((sy * s + sx) * h + y) * w + x];
                    }
                }
            }
    }
    return out;
}

template <typename T>
Tensor<T> space_to_depth_value(const Tensor<T>& in, int64_t s) {
    if (in.rank() != 4)
        throw std::invalid_argument("space_to_depth: input must be 4-d, got " +
                                    shape_str(in.shape()));
    if (s < 1) throw std::invalid_argument("space_to_depth: factor must be positive");
    const int64_t n = in.dim(0), c = in.dim(1), hs = in.dim(2), ws = in.dim(3);
    if (hs % s != 0 || ws % s != 0)
        throw std::invalid_argument("space_to_depth: extents " + shape_str(in.shape()) +
                                    " not divisible by " + std::to_string(s));
    const int64_t h = hs / s, w = ws / s;
    Tensor<T> out({n, c * s * s, h, w});
    if (h * w >= s * s) {
        for (int64_t b = 0; b < n; ++b)
            for (int64_t ci = 0; ci < c; ++ci)
                for (int64_t sy = 0; sy < s; ++sy)
                    for (int64_t sx = 0; sx < s; ++sx) {
                        T* dst = out.data() + (((b * c + ci) * s * s + sy * s + sx) * h) * w;
                        for (int64_t y = 0; y < h; ++y) {
                            const T* src = in.data() + ((b * c + ci) * hs + y * s + sy) * ws + sx;
                            T* dp = dst + y * w;
                            for (int64_t x = 0; x < w; ++x) dp[x] = src[x * s];
                        }
                    }
    } else {
        for (int64_t b = 0; b < n; ++b)
            for (int64_t ci = 0; ci < c; ++ci) {
                const T* src = in.data() + (b * c + ci) * hs * ws;
                T* dst = out.data() + b * c * s * s * h * w + ci * s * s * h * w;
                for (int64_t yo = 0; yo < hs; ++yo) {
                    const int64_t y = yo / s, sy = yo % s;
                    for (int64_t xo = 0; xo < ws; ++xo) {
                        const int64_t x = xo / s, sx = xo % s;
                        dst[((sy * s + sx) * h + y) * w + x] = src[yo * ws + xo];
                    }
                }
            }
    }
    return out;
}

template <typename T>
Var conv2d(Tape<T>& t, Var input, Var weight, std::optional<Var> bias, int64_t stride,
           int64_t padding) {
    const Tensor<T>& in = t.value(input);
    const Tensor<T>& w = t.value(weight);
    const T* bptr = nullptr;
    if (bias) {
        const Tensor<T>& b = t.value(*bias);
        if (b.rank() != 1 || b.dim(0) != w.dim(0))
            throw std::invalid_argument("conv2d: bias must have shape (" +
                                        std::to_string(w.dim(0)) + ")");
        bptr = b.data();
    }
    Tensor<T> out = kernels::conv_forward(in, w, bptr, stride, padding);
    std::vector<Var> parents{input, weight};
    if (bias) parents.push_back(*bias);
    const int64_t h = in.dim(2), wx = in.dim(3), kh = w.dim(2), kw = w.dim(3);
    return t.record(std::move(out), parents,
                    [input, weight, bias, stride, padding, h, wx, kh, kw](Tape<T>& tp,
                                                                          const Tensor<T>& g) {
                        if (tp.requires_grad(input))
                            tp.accumulate(input, kernels::conv_input_grad(g, tp.value(weight),
                                                                          stride, padding, h, wx));
                        if (tp.requires_grad(weight))
                            tp.accumulate(weight, kernels::conv_weight_grad(g, tp.value(input),
                                                                            stride, padding, kh,
                                                                            kw));
                        if (bias && tp.requires_grad(*bias))
                            tp.accumulate(*bias, kernels::conv_bias_grad(g));
                    });
}

template <typename T>
Var conv2d_transpose(Tape<T>& t, Var input, Var weight, int64_t stride) {
    const Tensor<T>& in = t.value(input);
    const Tensor<T>& w = t.value(weight);
    if (in.rank() != 4 || w.rank() != 4)
        throw std::invalid_argument("conv2d_transpose: input and weight must be 4-d");
    if (in.dim(1) != w.dim(0))
        throw std::invalid_argument("conv2d_transpose: input has " + std::to_string(in.dim(1)) +
                                    " channels but weight expects " + std::to_string(w.dim(0)));
    if (stride < 1) throw std::invalid_argument("conv2d_transpose: stride must be positive");
    const int64_t oh = (in.dim(2) - 1) * stride + w.dim(2);
    const int64_t ow = (in.dim(3) - 1) * stride + w.dim(3);
    Tensor<T> out = kernels::conv_input_grad(in, w, stride, /*pad=*/0, oh, ow);
    const int64_t kh = w.dim(2), kw = w.dim(3);
    return t.record(std::move(out), {input, weight},
                    [input, weight, stride, kh, kw](Tape<T>& tp, const Tensor<T>& g) {
                        if (tp.requires_grad(input))
                            tp.accumulate(input, kernels::conv_forward(g, tp.value(weight),
                                                                       static_cast<const T*>(nullptr),
                                                                       stride, 0));
                        if (tp.requires_grad(weight))
                            tp.accumulate(weight, kernels::conv_weight_grad(tp.value(input), g,
                                                                            stride, 0, kh, kw));
                    });
}

template <typename T>
Var pixel_shuffle(Tape<T>& t, Var input, int64_t s) {
    Tensor<T> out = pixel_shuffle_value(t.value(input), s);
    return t.record(std::move(out), {input}, [input, s](Tape<T>& tp, const Tensor<T>& g) {
        tp.accumulate(input, space_to_depth_value(g, s));
    });
}

template <typename T>
Var space_to_depth(Tape<T>& t, Var input, int64_t s) {
    Tensor<T> out = space_to_depth_value(t.value(input), s);
    return t.record(std::move(out), {input}, [input, s](Tape<T>& tp, const Tensor<T>& g) {
        tp.accumulate(input, pixel_shuffle_value(g, s));
    });
}

template <typename T>
Var relu(Tape<T>& t, Var x) {
    const Tensor<T>& in = t.value(x);
    Tensor<T> out(in.shape());
    const T* s = in.data();
    T* d = out.data();
    for (int64_t i = 0, e = in.numel(); i < e; ++i) d[i] = s[i] > T(0) ? s[i] : T(0);
    return t.record(std::move(out), {x}, [x](Tape<T>& tp, const Tensor<T>& g) {
        const Tensor<T>& in = tp.value(x);
        Tensor<T> gi(in.shape());
        const T* ip = in.data();
        const T* gp = g.data();
        T* d = gi.data();
        // subgradient choice: exactly 0 passes zero gradient
        for (int64_t i = 0, e = in.numel(); i < e; ++i) d[i] = ip[i] > T(0) ? gp[i] : T(0);
        tp.accumulate(x, std::move(gi));
    });
}

template <typename T>
Var add(Tape<T>& t, Var a, Var b) {
    const Tensor<T>& av = t.value(a);
    const Tensor<T>& bv = t.value(b);
    check_same_shape(av, bv, "add");
    Tensor<T> out(av.shape());
    for (int64_t i = 0, e = av.numel(); i < e; ++i) out[i] = av[i] + bv[i];
    return t.record(std::move(out), {a, b}, [a, b](Tape<T>& tp, const Tensor<T>& g) {
        tp.accumulate(a, g);
        tp.accumulate(b, g);
    });
}

template <typename T>
Var sub(Tape<T>& t, Var a, Var b) {
    const Tensor<T>& av = t.value(a);
    const Tensor<T>& bv = t.value(b);
    check_same_shape(av, bv, "sub");
    Tensor<T> out(av.shape());
    for (int64_t i = 0, e = av.numel(); i < e; ++i) out[i] = av[i] - bv[i];
    return t.record(std::move(out), {a, b}, [a, b](Tape<T>& tp, const Tensor<T>& g) {
        tp.accumulate(a, g);
        if (tp.requires_grad(b)) {
            Tensor<T> gb(g.shape());
            for (int64_t i = 0, e = g.numel(); i < e; ++i) gb[i] = -g[i];
            tp.accumulate(b, std::move(gb));
        }
    });
}

template <typename T>
Var scale(Tape<T>& t, Var x, T c) {
    const Tensor<T>& in = t.value(x);
    Tensor<T> out(in.shape());
    for (int64_t i = 0, e = in.numel(); i < e; ++i) out[i] = in[i] * c;
    return t.record(std::move(out), {x}, [x, c](Tape<T>& tp, const Tensor<T>& g) {
        Tensor<T> gi(g.shape());
        for (int64_t i = 0, e = g.numel(); i < e; ++i) gi[i] = g[i] * c;
        tp.accumulate(x, std::move(gi));
    });
}

template <typename T>
Var mul_scalar(Tape<T>& t, Var x, Var s) {
    const Tensor<T>& in = t.value(x);
    const Tensor<T>& sv = t.value(s);
    if (sv.numel() != 1)
        throw std::invalid_argument("mul_scalar: scale must be a 1-element tensor, got " +
                                    shape_str(sv.shape()));
    const T c = sv[0];
    Tensor<T> out(in.shape());
    for (int64_t i = 0, e = in.numel(); i < e; ++i) out[i] = in[i] * c;
    return t.record(std::move(out), {x, s}, [x, s](Tape<T>& tp, const Tensor<T>& g) {
        const Tensor<T>& in = tp.value(x);
        const T c = tp.value(s)[0];
        if (tp.requires_grad(x)) {
            Tensor<T> gi(g.shape());
            for (int64_t i = 0, e = g.numel(); i < e; ++i) gi[i] = g[i] * c;
            tp.accumulate(x, std::move(gi));
        }
        if (tp.requires_grad(s)) {
            T acc = 0;
            for (int64_t i = 0, e = g.numel(); i < e; ++i) acc += g[i] * in[i];
            tp.accumulate(s, Tensor<T>(tp.value(s).shape(), {acc}));
        }
    });
}

template <typename T>
Var mse_loss(Tape<T>& t, Var pred, Var target) {
    const Tensor<T>& p = t.value(pred);
    const Tensor<T>& y = t.value(target);
    check_same_shape(p, y, "mse_loss");
    const int64_t n = p.numel();
    T acc = 0;
    for (int64_t i = 0; i < n; ++i) {
        T d = p[i] - y[i];
        acc += d * d;
    }
    Tensor<T> out({1}, {acc / static_cast<T>(n)});
    return t.record(std::move(out), {pred, target}, [pred, target, n](Tape<T>& tp,
                                                                      const Tensor<T>& g) {
        const Tensor<T>& p = tp.value(pred);
        const Tensor<T>& y = tp.value(target);
        const T s = g[0] * T(2) / static_cast<T>(n);
        if (tp.requires_grad(pred)) {
            Tensor<T> gp(p.shape());
            for (int64_t i = 0; i < n; ++i) gp[i] = s * (p[i] - y[i]);
            tp.accumulate(pred, std::move(gp));
        }
        if (tp.requires_grad(target)) {
            Tensor<T> gy(y.shape());
            for (int64_t i = 0; i < n; ++i) gy[i] = -s * (p[i] - y[i]);
            tp.accumulate(target, std::move(gy));
        }
    });
}

template <typename T>
Var frobenius_sq(Tape<T>& t, Var a) {
    const Tensor<T>& av = t.value(a);
    T acc = 0;
    for (int64_t i = 0, e = av.numel(); i < e; ++i) acc += av[i] * av[i];
    return t.record(Tensor<T>({1}, {acc}), {a}, [a](Tape<T>& tp, const Tensor<T>& g) {
        const Tensor<T>& av = tp.value(a);
        Tensor<T> ga(av.shape());
        const T s = g[0] * T(2);
        for (int64_t i = 0, e = av.numel(); i < e; ++i) ga[i] = s * av[i];
        tp.accumulate(a, std::move(ga));
    });
}

namespace {

template <typename T>
Tensor<T> transpose_value(const Tensor<T>& a) {
    if (a.rank() != 2)
        throw std::invalid_argument("transpose: expected 2-d matrix, got " + shape_str(a.shape()));
    const int64_t m = a.dim(0), n = a.dim(1);
    Tensor<T> out({n, m});
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) out[j * m + i] = a[i * n + j];
    return out;
}

}  // namespace

template <typename T>
Var matmul(Tape<T>& t, Var a, Var b) {
    const Tensor<T>& av = t.value(a);
    const Tensor<T>& bv = t.value(b);
    if (av.rank() != 2 || bv.rank() != 2)
        throw std::invalid_argument("matmul: expected 2-d matrices, got " + shape_str(av.shape()) +
                                    " and " + shape_str(bv.shape()));
    if (av.dim(1) != bv.dim(0))
        throw std::invalid_argument("matmul: inner dimensions disagree, " + shape_str(av.shape()) +
                                    " x " + shape_str(bv.shape()));
    const int64_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
    Tensor<T> out({m, n});
    kernels::gemm_nn(m, n, k, av.data(), bv.data(), out.data(), false);
    return t.record(std::move(out), {a, b}, [a, b, m, k, n](Tape<T>& tp, const Tensor<T>& g) {
        const Tensor<T>& av = tp.value(a);
        const Tensor<T>& bv = tp.value(b);
        if (tp.requires_grad(a)) {
            Tensor<T> ga({m, k});
            kernels::gemm_nt(m, k, n, g.data(), bv.data(), ga.data(), false);
            tp.accumulate(a, std::move(ga));
        }
        if (tp.requires_grad(b)) {
            Tensor<T> at = transpose_value(av);
            Tensor<T> gb({k, n});
            kernels::gemm_nn(k, n, m, at.data(), g.data(), gb.data(), false);
            tp.accumulate(b, std::move(gb));
        }
    });
}

template <typename T>
Var transpose2d(Tape<T>& t, Var a) {
    Tensor<T> out = transpose_value(t.value(a));
    return t.record(std::move(out), {a}, [a](Tape<T>& tp, const Tensor<T>& g) {
        tp.accumulate(a, transpose_value(g));
    });
}

template <typename T>
Var reshape(Tape<T>& t, Var x, Shape shape) {
    Tensor<T> out = t.value(x).reshaped(std::move(shape));
    return t.record(std::move(out), {x}, [x](Tape<T>& tp, const Tensor<T>& g) {
        tp.accumulate(x, g.reshaped(tp.value(x).shape()));
    });
}

template <typename T>
Var inner(Tape<T>& t, Var x, Tensor<T> weights) {
    const Tensor<T>& xv = t.value(x);
    check_same_shape(xv, weights, "inner");
    T acc = 0;
    for (int64_t i = 0, e = xv.numel(); i < e; ++i) acc += xv[i] * weights[i];
    auto w = std::make_shared<Tensor<T>>(std::move(weights));
    return t.record(Tensor<T>({1}, {acc}), {x}, [x, w](Tape<T>& tp, const Tensor<T>& g) {
        Tensor<T> gx(w->shape());
        for (int64_t i = 0, e = gx.numel(); i < e; ++i) gx[i] = g[0] * (*w)[i];
        tp.accumulate(x, std::move(gx));
    });
}

template class Tape<float>;
template class Tape<double>;
template class GradientMap<float>;
template class GradientMap<double>;

#define FSCS_INSTANTIATE_OPS(T)                                                            \
    template Var conv2d<T>(Tape<T>&, Var, Var, std::optional<Var>, int64_t, int64_t);     \
    template Var conv2d_transpose<T>(Tape<T>&, Var, Var, int64_t);                        \
    template Var pixel_shuffle<T>(Tape<T>&, Var, int64_t);                                \
    template Var space_to_depth<T>(Tape<T>&, Var, int64_t);                               \
    template Var relu<T>(Tape<T>&, Var);                                                  \
    template Var add<T>(Tape<T>&, Var, Var);                                              \
    template Var sub<T>(Tape<T>&, Var, Var);                                              \
    template Var scale<T>(Tape<T>&, Var, T);                                              \
    template Var mul_scalar<T>(Tape<T>&, Var, Var);                                       \
    template Var mse_loss<T>(Tape<T>&, Var, Var);                                         \
    template Var frobenius_sq<T>(Tape<T>&, Var);                                          \
    template Var matmul<T>(Tape<T>&, Var, Var);                                           \
    template Var transpose2d<T>(Tape<T>&, Var);                                           \
    template Var reshape<T>(Tape<T>&, Var, Shape);                                        \
    template Var inner<T>(Tape<T>&, Var, Tensor<T>);                                      \
    template Tensor<T> pixel_shuffle_value<T>(const Tensor<T>&, int64_t);                 \
    template Tensor<T> space_to_depth_value<T>(const Tensor<T>&, int64_t);

FSCS_INSTANTIATE_OPS(float)
FSCS_INSTANTIATE_OPS(double)
#undef FSCS_INSTANTIATE_OPS

}  // namespace fscs
