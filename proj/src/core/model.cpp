#include "core/model.hpp"

#include <cmath>
#include <unordered_map>

#include "core/rng.hpp"

namespace fscs {

Variant variant_from_string(const std::string& s) {
    if (s == "fsoinet") return Variant::fsoinet;
    if (s == "oinet") return Variant::oinet;
    if (s == "vnet") return Variant::vnet;
    throw std::invalid_argument("unknown mode '" + s + "' (expected fsoinet, oinet or vnet)");
}

std::string variant_to_string(Variant v) {
    switch (v) {
        case Variant::fsoinet: return "fsoinet";
        case Variant::oinet: return "oinet";
        case Variant::vnet: return "vnet";
    }
    throw std::logic_error("bad variant");
}

namespace {

template <typename T>
Conv2dParams<T> make_conv(Rng& rng, int64_t cout, int64_t cin, int64_t k, bool bias, bool zero) {
    Conv2dParams<T> p;
    p.w = Tensor<T>({cout, cin, k, k});
    if (!zero) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(cin * k * k));
        for (int64_t i = 0, e = p.w.numel(); i < e; ++i)
            p.w[i] = static_cast<T>(rng.uniform(-bound, bound));
    }
    if (bias) p.b = Tensor<T>({cout});  // biases start at zero
    return p;
}

// transposed conv weight [cin, cout, k, k]
template <typename T>
Conv2dParams<T> make_conv_t(Rng& rng, int64_t cin, int64_t cout, int64_t k) {
    Conv2dParams<T> p;
    p.w = Tensor<T>({cin, cout, k, k});
    const double bound = 1.0 / std::sqrt(static_cast<double>(cin * k * k));
    for (int64_t i = 0, e = p.w.numel(); i < e; ++i)
        p.w[i] = static_cast<T>(rng.uniform(-bound, bound));
    return p;
}

template <typename T>
ResBlockParams<T> make_res_block(Rng& rng, int64_t c, bool bias) {
    ResBlockParams<T> r;
    r.conv1 = make_conv<T>(rng, c, c, 3, bias, false);
    r.conv2 = make_conv<T>(rng, c, c, 3, bias, true);  // zero: identity at init
    return r;
}

}  // namespace

template <typename T>
Model<T> make_model(const ModelDesc& desc, uint64_t seed) {
    if (desc.channels < 1) throw std::invalid_argument("model: channels must be positive");
    if (desc.phases < 1) throw std::invalid_argument("model: phase count must be positive");
    Model<T> m;
    m.variant = desc.variant;
    m.channels = desc.channels;
    m.sampling = init_sampling_matrix<T>(desc.block_side, desc.ratio, seed);
    Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
    const int64_t c = desc.channels;
    m.lift = make_conv<T>(rng, c, 1, 3, true, false);
    m.phases.resize(static_cast<size_t>(desc.phases));
    for (auto& ph : m.phases) {
        if (desc.variant == Variant::fsoinet) {
            ph.fsim.feat_to_pixel = make_conv<T>(rng, 1, c, 3, false, false);
            ph.fsim.pixel_to_feat = make_conv<T>(rng, c, 1, 3, false, false);
            ph.fsim.grad_res = make_res_block<T>(rng, c, false);
        }
        if (desc.variant != Variant::vnet) ph.fsim.rho = Tensor<T>::scalar(T(1));
        ph.ddm.res_hi = make_res_block<T>(rng, c, true);
        ph.ddm.down = make_conv<T>(rng, 2 * c, c, 3, true, false);
        ph.ddm.res_lo = make_res_block<T>(rng, 2 * c, true);
        ph.ddm.up = make_conv_t<T>(rng, 2 * c, c, 2);
        ph.ddm.fuse = make_conv<T>(rng, c, c, 3, true, true);  // zero: identity at init
    }
    m.head = make_conv<T>(rng, 1, c, 3, true, true);  // zero: X_rec == X_init at init
    return m;
}

namespace {

template <typename TModel, typename Fn>
void visit_params(TModel& m, Fn&& fn) {
    auto conv = [&fn](const std::string& name, auto& p) {
        fn(name + ".w", p.w);
        if (p.has_bias()) fn(name + ".b", p.b);
    };
    auto res = [&conv](const std::string& name, auto& r) {
        conv(name + ".conv1", r.conv1);
        conv(name + ".conv2", r.conv2);
    };
    fn("phi", m.sampling.phi);
    conv("lift", m.lift);
    for (size_t k = 0; k < m.phases.size(); ++k) {
        auto& ph = m.phases[k];
        const std::string pk = "phase" + std::to_string(k);
        if (m.variant == Variant::fsoinet) {
            conv(pk + ".fsim.feat2pix", ph.fsim.feat_to_pixel);
            conv(pk + ".fsim.pix2feat", ph.fsim.pixel_to_feat);
            res(pk + ".fsim.res", ph.fsim.grad_res);
        }
        if (m.variant != Variant::vnet) fn(pk + ".rho", ph.fsim.rho);
        res(pk + ".ddm.res_hi", ph.ddm.res_hi);
        conv(pk + ".ddm.down", ph.ddm.down);
        res(pk + ".ddm.res_lo", ph.ddm.res_lo);
        conv(pk + ".ddm.up", ph.ddm.up);
        conv(pk + ".ddm.fuse", ph.ddm.fuse);
    }
    conv("head", m.head);
}

}  // namespace

template <typename T>
void for_each_param(Model<T>& m, const std::function<void(const std::string&, Tensor<T>&)>& fn) {
    visit_params(m, fn);
}

template <typename T>
void for_each_param(const Model<T>& m,
                    const std::function<void(const std::string&, const Tensor<T>&)>& fn) {
    visit_params(m, fn);
}

template <typename T>
int64_t param_count(const Model<T>& m) {
    int64_t n = 0;
    for_each_param(m, std::function<void(const std::string&, const Tensor<T>&)>(
                          [&n](const std::string&, const Tensor<T>& t) { n += t.numel(); }));
    return n;
}

template <typename T>
void randomize_parameters(Model<T>& m, uint64_t seed, double scale) {
    Rng rng(seed);
    for_each_param(m, std::function<void(const std::string&, Tensor<T>&)>(
                          [&rng, scale](const std::string&, Tensor<T>& t) {
                              for (int64_t i = 0, e = t.numel(); i < e; ++i)
                                  t[i] = static_cast<T>(rng.uniform(-scale, scale));
                          }));
}

template <typename T>
Model<T> model_cast(const Model<float>& m) {
    Model<T> out;
    out.variant = m.variant;
    out.channels = m.channels;
    out.sampling.block_side = m.sampling.block_side;
    out.sampling.ratio = m.sampling.ratio;
    out.sampling.phi = m.sampling.phi.template cast<T>();
    auto conv = [](const Conv2dParams<float>& p) {
        Conv2dParams<T> q;
        q.w = p.w.template cast<T>();
        if (p.has_bias()) q.b = p.b.template cast<T>();
        return q;
    };
    auto res = [&conv](const ResBlockParams<float>& r) {
        return ResBlockParams<T>{conv(r.conv1), conv(r.conv2)};
    };
    out.lift = conv(m.lift);
    out.head = conv(m.head);
    out.phases.reserve(m.phases.size());
    for (const auto& ph : m.phases) {
        PhaseParams<T> q;
        if (!ph.fsim.feat_to_pixel.w.empty()) {
            q.fsim.feat_to_pixel = conv(ph.fsim.feat_to_pixel);
            q.fsim.pixel_to_feat = conv(ph.fsim.pixel_to_feat);
            q.fsim.grad_res = res(ph.fsim.grad_res);
        }
        if (!ph.fsim.rho.empty()) q.fsim.rho = ph.fsim.rho.template cast<T>();
        q.ddm.res_hi = res(ph.ddm.res_hi);
        q.ddm.down = conv(ph.ddm.down);
        q.ddm.res_lo = res(ph.ddm.res_lo);
        q.ddm.up = conv(ph.ddm.up);
        q.ddm.fuse = conv(ph.ddm.fuse);
        out.phases.push_back(std::move(q));
    }
    return out;
}

// --- graph construction ---

template <typename T>
ModelVars<T> bind_model(Tape<T>& t, const Model<T>& m, bool requires_grad) {
    ModelVars<T> mv;
    mv.variant = m.variant;

    std::unordered_map<const Tensor<T>*, Var> bound;
    for_each_param(m, std::function<void(const std::string&, const Tensor<T>&)>(
                          [&](const std::string&, const Tensor<T>& p) {
                              Var v = t.leaf(p, requires_grad);
                              mv.flat.push_back(v);
                              bound.emplace(&p, v);
                          }));
    auto var_of = [&bound](const Tensor<T>& p) { return bound.at(&p); };

    // kernel views derived from the already-bound phi leaf
    mv.sampling.block_side = m.sampling.block_side;
    mv.sampling.m = m.sampling.m();
    mv.sampling.n = m.sampling.n();
    mv.sampling.phi = var_of(m.sampling.phi);
    mv.sampling.w_sample =
        reshape(t, mv.sampling.phi,
                {mv.sampling.m, int64_t{1}, m.sampling.block_side, m.sampling.block_side});
    Var phi_t = transpose2d(t, mv.sampling.phi);
    mv.sampling.w_init = reshape(t, phi_t, {mv.sampling.n, mv.sampling.m, int64_t{1}, int64_t{1}});

    auto conv = [&](const Conv2dParams<T>& p) {
        Conv2dVars<T> cv;
        cv.w = var_of(p.w);
        cv.has_bias = p.has_bias();
        if (cv.has_bias) cv.b = var_of(p.b);
        return cv;
    };
    auto res = [&](const ResBlockParams<T>& r) {
        return ResBlockVars<T>{conv(r.conv1), conv(r.conv2)};
    };

    mv.lift = conv(m.lift);
    mv.head = conv(m.head);
    mv.phases.reserve(m.phases.size());
    for (const auto& ph : m.phases) {
        PhaseVars<T> pv;
        if (!ph.fsim.feat_to_pixel.w.empty()) {
            pv.fsim.feat_to_pixel = conv(ph.fsim.feat_to_pixel);
            pv.fsim.pixel_to_feat = conv(ph.fsim.pixel_to_feat);
            pv.fsim.grad_res = res(ph.fsim.grad_res);
        }
        if (!ph.fsim.rho.empty()) pv.fsim.rho = var_of(ph.fsim.rho);
        pv.ddm.res_hi = res(ph.ddm.res_hi);
        pv.ddm.down = conv(ph.ddm.down);
        pv.ddm.res_lo = res(ph.ddm.res_lo);
        pv.ddm.up = conv(ph.ddm.up);
        pv.ddm.fuse = conv(ph.ddm.fuse);
        mv.phases.push_back(std::move(pv));
    }
    return mv;
}

namespace {

template <typename T>
Var apply_conv(Tape<T>& t, Var x, const Conv2dVars<T>& p, int64_t stride = 1, int64_t pad = 1) {
    return conv2d(t, x, p.w, p.has_bias ? std::optional<Var>(p.b) : std::nullopt, stride, pad);
}

}  // namespace

template <typename T>
Var res_block(Tape<T>& t, Var f, const ResBlockVars<T>& p) {
    Var h = apply_conv(t, f, p.conv1);
    h = relu(t, h);
    h = apply_conv(t, h, p.conv2);
    return add(t, f, h);
}

template <typename T>
Var fsim(Tape<T>& t, Var f, Var y, const SamplingVars<T>& s, const FsimVars<T>& p) {
    Var xhat = apply_conv(t, f, p.feat_to_pixel);
    Var g = fidelity_gradient(t, xhat, y, s);
    Var gf = apply_conv(t, g, p.pixel_to_feat);
    Var update = res_block(t, gf, p.grad_res);
    return sub(t, f, mul_scalar(t, update, p.rho));
}

template <typename T>
Var ddm(Tape<T>& t, Var f, const DdmVars<T>& p) {
    const Tensor<T>& fv = t.value(f);
    if (fv.dim(2) % 2 != 0 || fv.dim(3) % 2 != 0)
        throw std::invalid_argument("ddm: spatial extents must be even, got " +
                                    shape_str(fv.shape()));
    Var hi = res_block(t, f, p.res_hi);
    Var lo = apply_conv(t, f, p.down, /*stride=*/2);
    lo = res_block(t, lo, p.res_lo);
    lo = conv2d_transpose(t, lo, p.up.w, 2);
    // residuals of both branches relative to F, fused and added back
    Var branches = add(t, hi, lo);
    Var fused = sub(t, branches, scale(t, f, T(2)));
    fused = apply_conv(t, fused, p.fuse);
    return add(t, f, fused);
}

template <typename T>
ForwardVars<T> model_forward(Tape<T>& t, const ModelVars<T>& mv, Var x) {
    const Tensor<T>& xv = t.value(x);
    if (xv.rank() != 4 || xv.dim(0) != 1 || xv.dim(1) != 1)
        throw std::invalid_argument("forward: expected a (1,1,H,W) image, got " +
                                    shape_str(xv.shape()));
    ForwardVars<T> out;
    out.y = sample(t, x, mv.sampling);
    out.x_init = init_reconstruct(t, out.y, mv.sampling);
    Var f = apply_conv(t, out.x_init, mv.lift);
    for (const auto& ph : mv.phases) {
        switch (mv.variant) {
            case Variant::fsoinet:
                f = fsim(t, f, out.y, mv.sampling, ph.fsim);
                break;
            case Variant::oinet: {
                // pixel-domain gradient step between phases: collapse, correct, re-lift
                Var xp = apply_conv(t, f, mv.head);
                Var g = fidelity_gradient(t, xp, out.y, mv.sampling);
                xp = sub(t, xp, mul_scalar(t, g, ph.fsim.rho));
                f = apply_conv(t, xp, mv.lift);
                break;
            }
            case Variant::vnet:
                break;
        }
        f = ddm(t, f, ph.ddm);
    }
    Var correction = apply_conv(t, f, mv.head);
    out.x_rec = add(t, correction, out.x_init);
    return out;
}

template <typename T>
ForwardValues<T> forward_eval(const Model<T>& m, const Tensor<T>& x) {
    Tape<T> t;
    ModelVars<T> mv = bind_model(t, m, /*requires_grad=*/false);
    Var xv = t.leaf(x, false);
    ForwardVars<T> fw = model_forward(t, mv, xv);
    return {t.value(fw.y), t.value(fw.x_init), t.value(fw.x_rec)};
}

template <typename T>
Reconstruction<T> reconstruct_image(const Model<T>& m, const Tensor<T>& gray) {
    auto [padded, grid] = pad_to_block(gray, m.sampling.block_side);
    Tensor<T> x = padded.reshaped({1, 1, grid.padded_h, grid.padded_w});
    ForwardValues<T> fw = forward_eval(m, x);
    Reconstruction<T> out;
    out.rec = crop_from_block(fw.x_rec.reshaped({grid.padded_h, grid.padded_w}), grid);
    out.init = crop_from_block(fw.x_init.reshaped({grid.padded_h, grid.padded_w}), grid);
    return out;
}

#define FSCS_INSTANTIATE_MODEL(T)                                                             \
    template struct Model<T>;                                                                 \
    template Model<T> make_model<T>(const ModelDesc&, uint64_t);                              \
    template void for_each_param<T>(Model<T>&,                                               \
                                    const std::function<void(const std::string&, Tensor<T>&)>&); \
    template void for_each_param<T>(                                                          \
        const Model<T>&, const std::function<void(const std::string&, const Tensor<T>&)>&);   \
    template int64_t param_count<T>(const Model<T>&);                                         \
    template void randomize_parameters<T>(Model<T>&, uint64_t, double);                       \
    template ModelVars<T> bind_model<T>(Tape<T>&, const Model<T>&, bool);                     \
    template Var res_block<T>(Tape<T>&, Var, const ResBlockVars<T>&);                         \
    template Var fsim<T>(Tape<T>&, Var, Var, const SamplingVars<T>&, const FsimVars<T>&);     \
    template Var ddm<T>(Tape<T>&, Var, const DdmVars<T>&);                                    \
    template ForwardVars<T> model_forward<T>(Tape<T>&, const ModelVars<T>&, Var);             \
    template ForwardValues<T> forward_eval<T>(const Model<T>&, const Tensor<T>&);             \
    template Reconstruction<T> reconstruct_image<T>(const Model<T>&, const Tensor<T>&);

FSCS_INSTANTIATE_MODEL(float)
FSCS_INSTANTIATE_MODEL(double)
#undef FSCS_INSTANTIATE_MODEL

template Model<double> model_cast<double>(const Model<float>&);
template Model<float> model_cast<float>(const Model<float>&);

}  // namespace fscs
