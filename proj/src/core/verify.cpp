#include "core/verify.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include "core/dct.hpp"
#include "core/model.hpp"
#include "core/pgd.hpp"
#include "core/rng.hpp"

namespace fscs {

namespace {

using D = double;

Tensor<D> random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
    Tensor<D> t(std::move(shape));
    for (int64_t i = 0, e = t.numel(); i < e; ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

struct GraphSpec {
    std::function<Var(Tape<D>&, const std::vector<Var>&)> build;
    std::vector<Tensor<D>> inputs;
};

double loss_value(const GraphSpec& spec) {
    Tape<D> t;
    std::vector<Var> leaves;
    leaves.reserve(spec.inputs.size());
    for (const auto& in : spec.inputs) leaves.push_back(t.leaf(in, false));
    Var loss = spec.build(t, leaves);
    return t.value(loss)[0];
}

std::vector<Tensor<D>> analytic_grads(const GraphSpec& spec) {
    Tape<D> t;
    std::vector<Var> leaves;
    leaves.reserve(spec.inputs.size());
    for (const auto& in : spec.inputs) leaves.push_back(t.leaf(in, true));
    Var loss = spec.build(t, leaves);
    GradientMap<D> gm = t.backward(loss);
    std::vector<Tensor<D>> grads;
    grads.reserve(leaves.size());
    for (Var v : leaves) grads.push_back(gm.at(v));
    return grads;
}

double gradcheck_max_rel(GraphSpec spec, double step = 1e-5, double corrupt = 0.0) {
    std::vector<Tensor<D>> grads = analytic_grads(spec);
    if (corrupt != 0.0 && !grads.empty() && grads[0].numel() > 0) grads[0][0] += corrupt;
    double worst = 0.0;
    for (size_t j = 0; j < spec.inputs.size(); ++j) {
        Tensor<D>& x = spec.inputs[j];
        for (int64_t i = 0, e = x.numel(); i < e; ++i) {
            const double keep = x[i];
            x[i] = keep + step;
            const double fp = loss_value(spec);
            x[i] = keep - step;
            const double fm = loss_value(spec);
            x[i] = keep;
            const double fd = (fp - fm) / (2.0 * step);
            const double an = grads[j][i];
            const double rel = std::abs(an - fd) / std::max({1.0, std::abs(an), std::abs(fd)});
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(3);
    os << std::scientific << v;
    return os.str();
}

CheckResult report_max(const std::string& name, double worst, double tol) {
    return {name, worst < tol, "max err " + fmt(worst) + " (tol " + fmt(tol) + ")"};
}

double dot(const Tensor<D>& a, const Tensor<D>& b) {
    double s = 0;
    for (int64_t i = 0, e = a.numel(); i < e; ++i) s += a[i] * b[i];
    return s;
}

// <L(x), y> vs <x, L^T(y)> where L^T(y) is the op's backward seeded with y
double adjoint_gap(const std::function<Var(Tape<D>&, Var)>& op, const Tensor<D>& x,
                   Rng& rng) {
    Tape<D> t;
    Var xv = t.leaf(x, true);
    Var out = op(t, xv);
    Tensor<D> y = random_tensor(rng, t.value(out).shape());
    const double lhs = dot(t.value(out), y);
    Var loss = inner(t, out, y);
    GradientMap<D> gm = t.backward(loss);
    const double rhs = dot(x, gm.at(xv));
    return std::abs(lhs - rhs);
}

SamplingVars<D> sampling_from_leaf(Tape<D>& t, Var phi, int64_t block_side) {
    SamplingVars<D> s;
    s.block_side = block_side;
    s.m = t.value(phi).dim(0);
    s.n = t.value(phi).dim(1);
    s.phi = phi;
    s.w_sample = reshape(t, phi, {s.m, int64_t{1}, block_side, block_side});
    s.w_init = reshape(t, transpose2d(t, phi), {s.n, s.m, int64_t{1}, int64_t{1}});
    return s;
}

}  // namespace

std::vector<CheckResult> run_verification(const std::string& fault_injection) {
    std::vector<CheckResult> out;
    const double tol = 1e-4;
    const double adjoint_tol = 1e-9;
    Rng rng(20240117);

    // -- gradchecks, 5 random instances per op --
    {
        double worst = 0;
        for (int k = 0; k < 5; ++k) {
            GraphSpec s;
            s.inputs = {random_tensor(rng, {1, 2, 6, 6}), random_tensor(rng, {3, 2, 3, 3}),
                        random_tensor(rng, {3})};
            const int64_t stride = 1 + k % 2, pad = k % 2;
            s.build = [stride, pad](Tape<D>& t, const std::vector<Var>& v) {
                Var o = conv2d(t, v[0], v[1], v[2], stride, pad);
                Tensor<D> w(t.value(o).shape());
                Rng wr(99 + static_cast<uint64_t>(stride));
                for (int64_t i = 0; i < w.numel(); ++i) w[i] = wr.uniform(-1, 1);
                return inner(t, o, w);
            };
            const double corrupt = fault_injection == "conv2d-backward" ? 1e-2 : 0.0;
            worst = std::max(worst, gradcheck_max_rel(std::move(s), 1e-5, corrupt));
        }
        out.push_back(report_max("gradcheck.conv2d", worst, tol));
    }
    {
        double worst = 0;
        for (int k = 0; k < 5; ++k) {
            GraphSpec s;
            s.inputs = {random_tensor(rng, {1, 3, 3, 3}), random_tensor(rng, {3, 2, 2, 2})};
            s.build = [](Tape<D>& t, const std::vector<Var>& v) {
                Var o = conv2d_transpose(t, v[0], v[1], 2);
                Tensor<D> w(t.value(o).shape());
                Rng wr(7);
                for (int64_t i = 0; i < w.numel(); ++i) w[i] = wr.uniform(-1, 1);
                return inner(t, o, w);
            };
            worst = std::max(worst, gradcheck_max_rel(std::move(s)));
        }
        out.push_back(report_max("gradcheck.conv2d_transpose", worst, tol));
    }
    {
        double worst = 0;
        for (int k = 0; k < 5; ++k) {
            GraphSpec s;
            s.inputs = {random_tensor(rng, {1, 8, 3, 3})};
            s.build = [](Tape<D>& t, const std::vector<Var>& v) {
                Var o = pixel_shuffle(t, v[0], 2);
                o = space_to_depth(t, o, 2);
                Tensor<D> w(t.value(o).shape());
                Rng wr(13);
                for (int64_t i = 0; i < w.numel(); ++i) w[i] = wr.uniform(-1, 1);
                return inner(t, o, w);
            };
            worst = std::max(worst, gradcheck_max_rel(std::move(s)));
        }
        out.push_back(report_max("gradcheck.pixel_shuffle_space_to_depth", worst, tol));
    }
    {
        double worst = 0;
        for (int k = 0; k < 5; ++k) {
            GraphSpec s;
            s.inputs = {random_tensor(rng, {2, 5}), random_tensor(rng, {2, 5}),
                        random_tensor(rng, {1}, 0.5, 2.0)};
            s.build = [](Tape<D>& t, const std::vector<Var>& v) {
                Var r = relu(t, v[0]);
                Var a = add(t, r, v[1]);
                Var d = sub(t, a, v[0]);
                Var sc = scale(t, d, D(1.7));
                Var m = mul_scalar(t, sc, v[2]);
                Tensor<D> w(t.value(m).shape());
                Rng wr(21);
                for (int64_t i = 0; i < w.numel(); ++i) w[i] = wr.uniform(-1, 1);
                return inner(t, m, w);
            };
            worst = std::max(worst, gradcheck_max_rel(std::move(s)));
        }
        out.push_back(report_max("gradcheck.elementwise", worst, tol));
    }
    {
        double worst = 0;
        for (int k = 0; k < 5; ++k) {
            GraphSpec s;
            s.inputs = {random_tensor(rng, {3, 4}), random_tensor(rng, {3, 4})};
            s.build = [](Tape<D>& t, const std::vector<Var>& v) {
                return mse_loss(t, v[0], v[1]);
            };
            worst = std::max(worst, gradcheck_max_rel(std::move(s)));
        }
        out.push_back(report_max("gradcheck.mse_loss", worst, tol));
    }
    {
        double worst = 0;
        for (int k = 0; k < 5; ++k) {
            GraphSpec s;
            s.inputs = {random_tensor(rng, {3, 5}), random_tensor(rng, {5, 4})};
            s.build = [](Tape<D>& t, const std::vector<Var>& v) {
                Var m = matmul(t, v[0], v[1]);
                Var mt = transpose2d(t, m);
                Var r = reshape(t, mt, {2, 6});
                return frobenius_sq(t, r);
            };
            worst = std::max(worst, gradcheck_max_rel(std::move(s)));
        }
        out.push_back(report_max("gradcheck.matmul_frobenius", worst, tol));
    }
    {
        double worst = 0;
        for (int k = 0; k < 5; ++k) {
            GraphSpec s;
            s.inputs = {random_tensor(rng, {1, 3, 4, 4}), random_tensor(rng, {3, 3, 3, 3}),
                        random_tensor(rng, {3, 3, 3, 3}), random_tensor(rng, {3}),
                        random_tensor(rng, {3})};
            s.build = [](Tape<D>& t, const std::vector<Var>& v) {
                ResBlockVars<D> rb;
                rb.conv1 = {v[1], v[3], true};
                rb.conv2 = {v[2], v[4], true};
                Var o = res_block(t, v[0], rb);
                Tensor<D> w(t.value(o).shape());
                Rng wr(31);
                for (int64_t i = 0; i < w.numel(); ++i) w[i] = wr.uniform(-1, 1);
                return inner(t, o, w);
            };
            worst = std::max(worst, gradcheck_max_rel(std::move(s)));
        }
        out.push_back(report_max("gradcheck.res_block", worst, tol));
    }
    {
        // fsim gradient w.r.t. features, phi and rho (b=4, C=2, 8x8 image)
        double worst = 0;
        for (int k = 0; k < 5; ++k) {
            Tensor<D> y = random_tensor(rng, {1, 8, 2, 2});
            GraphSpec s;
            s.inputs = {random_tensor(rng, {1, 2, 8, 8}),        // F
                        random_tensor(rng, {8, 16}, -0.3, 0.3),  // phi
                        random_tensor(rng, {1, 2, 3, 3}),        // feat_to_pixel
                        random_tensor(rng, {2, 1, 3, 3}),        // pixel_to_feat
                        random_tensor(rng, {2, 2, 3, 3}),        // res conv1
                        random_tensor(rng, {2, 2, 3, 3}),        // res conv2
                        random_tensor(rng, {1}, 0.5, 1.5)};      // rho
            auto ycopy = y;
            s.build = [ycopy](Tape<D>& t, const std::vector<Var>& v) {
                SamplingVars<D> sv = sampling_from_leaf(t, v[1], 4);
                FsimVars<D> fv;
                fv.feat_to_pixel = {v[2], Var{}, false};
                fv.pixel_to_feat = {v[3], Var{}, false};
                fv.grad_res.conv1 = {v[4], Var{}, false};
                fv.grad_res.conv2 = {v[5], Var{}, false};
                fv.rho = v[6];
                Var yv = t.leaf(ycopy, false);
                Var o = fsim(t, v[0], yv, sv, fv);
                Tensor<D> w(t.value(o).shape());
                Rng wr(41);
                for (int64_t i = 0; i < w.numel(); ++i) w[i] = wr.uniform(-1, 1);
                return inner(t, o, w);
            };
            worst = std::max(worst, gradcheck_max_rel(std::move(s)));
        }
        out.push_back(report_max("gradcheck.fsim", worst, tol));
    }
    {
        double worst = 0;
        for (int k = 0; k < 5; ++k) {
            GraphSpec s;
            s.inputs = {random_tensor(rng, {1, 2, 6, 6}),  // F
                        random_tensor(rng, {2, 2, 3, 3}), random_tensor(rng, {2, 2, 3, 3}),
                        random_tensor(rng, {2}),          random_tensor(rng, {2}),
                        random_tensor(rng, {4, 2, 3, 3}), random_tensor(rng, {4}),
                        random_tensor(rng, {4, 4, 3, 3}), random_tensor(rng, {4, 4, 3, 3}),
                        random_tensor(rng, {4}),          random_tensor(rng, {4}),
                        random_tensor(rng, {4, 2, 2, 2}),  // up (transposed)
                        random_tensor(rng, {2, 2, 3, 3}), random_tensor(rng, {2})};
            s.build = [](Tape<D>& t, const std::vector<Var>& v) {
                DdmVars<D> dv;
                dv.res_hi.conv1 = {v[1], v[3], true};
                dv.res_hi.conv2 = {v[2], v[4], true};
                dv.down = {v[5], v[6], true};
                dv.res_lo.conv1 = {v[7], v[9], true};
                dv.res_lo.conv2 = {v[8], v[10], true};
                dv.up = {v[11], Var{}, false};
                dv.fuse = {v[12], v[13], true};
                Var o = ddm(t, v[0], dv);
                Tensor<D> w(t.value(o).shape());
                Rng wr(43);
                for (int64_t i = 0; i < w.numel(); ++i) w[i] = wr.uniform(-1, 1);
                return inner(t, o, w);
            };
            worst = std::max(worst, gradcheck_max_rel(std::move(s)));
        }
        out.push_back(report_max("gradcheck.ddm", worst, tol));
    }
    {
        // full tiny model, every parameter group, tol 1e-3
        ModelDesc desc{0.5, 4, 2, 2, Variant::fsoinet};
        Model<D> model = make_model<D>(desc, 5);
        randomize_parameters(model, 1234, 0.3);
        Rng xr(77);
        Tensor<D> x = random_tensor(xr, {1, 1, 8, 8}, 0.0, 1.0);

        std::vector<Tensor<D>*> params;
        for_each_param(model, std::function<void(const std::string&, Tensor<D>&)>(
                                  [&params](const std::string&, Tensor<D>& p) {
                                      params.push_back(&p);
                                  }));
        auto eval_loss = [&]() {
            Tape<D> t;
            ModelVars<D> mv = bind_model(t, model, false);
            Var xv = t.leaf(x, false);
            ForwardVars<D> fw = model_forward(t, mv, xv);
            Var loss = mse_loss(t, fw.x_rec, xv);
            return t.value(loss)[0];
        };
        std::vector<Tensor<D>> grads;
        {
            Tape<D> t;
            ModelVars<D> mv = bind_model(t, model, true);
            Var xv = t.leaf(x, false);
            ForwardVars<D> fw = model_forward(t, mv, xv);
            Var loss = mse_loss(t, fw.x_rec, xv);
            GradientMap<D> gm = t.backward(loss);
            for (Var v : mv.flat) grads.push_back(gm.at(v));
        }
        double worst = 0;
        const double step = 1e-5;
        for (size_t p = 0; p < params.size(); ++p) {
            Tensor<D>& w = *params[p];
            for (int64_t i = 0, e = w.numel(); i < e; ++i) {
                const double keep = w[i];
                w[i] = keep + step;
                const double fp = eval_loss();
                w[i] = keep - step;
                const double fm = eval_loss();
                w[i] = keep;
                const double fd = (fp - fm) / (2 * step);
                const double an = grads[p][i];
                worst = std::max(worst,
                                 std::abs(an - fd) / std::max({1.0, std::abs(an), std::abs(fd)}));
            }
        }
        out.push_back(report_max("gradcheck.model_tiny", worst, 1e-3));
    }

    // -- adjoint identities --
    {
        double worst = 0;
        for (int k = 0; k < 5; ++k) {
            Tensor<D> w = random_tensor(rng, {3, 2, 3, 3});
            Tensor<D> x = random_tensor(rng, {1, 2, 8, 8});
            worst = std::max(worst, adjoint_gap(
                                        [&w](Tape<D>& t, Var xv) {
                                            Var wv = t.leaf(w, false);
                                            return conv2d(t, xv, wv, std::nullopt, 2, 0);
                                        },
                                        x, rng));
        }
        out.push_back(report_max("adjoint.conv2d", worst, adjoint_tol));
    }
    {
        double worst = 0;
        for (int k = 0; k < 5; ++k) {
            Tensor<D> w = random_tensor(rng, {2, 3, 2, 2});
            Tensor<D> x = random_tensor(rng, {1, 2, 4, 4});
            worst = std::max(worst, adjoint_gap(
                                        [&w](Tape<D>& t, Var xv) {
                                            Var wv = t.leaf(w, false);
                                            return conv2d_transpose(t, xv, wv, 2);
                                        },
                                        x, rng));
        }
        out.push_back(report_max("adjoint.conv2d_transpose", worst, adjoint_tol));
    }
    {
        double worst = 0;
        for (int k = 0; k < 5; ++k) {
            Tensor<D> x = random_tensor(rng, {1, 8, 3, 3});
            worst = std::max(
                worst, adjoint_gap([](Tape<D>& t, Var v) { return pixel_shuffle(t, v, 2); }, x, rng));
            Tensor<D> x2 = random_tensor(rng, {1, 2, 6, 6});
            worst = std::max(
                worst,
                adjoint_gap([](Tape<D>& t, Var v) { return space_to_depth(t, v, 2); }, x2, rng));
        }
        out.push_back(report_max("adjoint.shuffle", worst, adjoint_tol));
    }
    {
        double worst = 0;
        for (int k = 0; k < 5; ++k) {
            Tensor<D> b = random_tensor(rng, {4, 6});
            Tensor<D> x = random_tensor(rng, {3, 4});
            worst = std::max(worst, adjoint_gap(
                                        [&b](Tape<D>& t, Var v) {
                                            Var bv = t.leaf(b, false);
                                            return matmul(t, v, bv);
                                        },
                                        x, rng));
            worst = std::max(
                worst, adjoint_gap([](Tape<D>& t, Var v) { return scale(t, v, D(2.3)); }, x, rng));
        }
        out.push_back(report_max("adjoint.matmul_scale", worst, adjoint_tol));
    }
    {
        // sample and init_reconstruct are exact transposes of each other
        double worst = 0;
        for (int k = 0; k < 5; ++k) {
            SamplingMatrix<D> s = init_sampling_matrix<D>(4, 0.5, 100 + k);
            Tensor<D> x = random_tensor(rng, {1, 1, 8, 8});
            Tensor<D> y = random_tensor(rng, {1, 8, 2, 2});
            const double lhs = dot(sample_value(x, s), y);
            const double rhs = dot(x, init_reconstruct_value(y, s));
            worst = std::max(worst, std::abs(lhs - rhs));
        }
        out.push_back(report_max("adjoint.sample_init_reconstruct", worst, adjoint_tol));
    }

    // -- exact identities --
    {
        Tensor<D> x = random_tensor(rng, {2, 1, 12, 12});
        Tensor<D> rt = pixel_shuffle_value(space_to_depth_value(x, 4), 4);
        bool same = std::memcmp(x.data(), rt.data(), sizeof(D) * static_cast<size_t>(x.numel())) == 0;
        out.push_back({"identity.shuffle_roundtrip", same,
                       same ? "bit-exact" : "round trip differs"});
    }
    {
        // freshly constructed model: X_rec == X_init bit-exactly, in all modes
        bool ok = true;
        std::string detail = "bit-exact";
        for (Variant variant : {Variant::fsoinet, Variant::oinet, Variant::vnet}) {
            ModelDesc desc{0.25, 8, 4, 2, variant};
            Model<D> m = make_model<D>(desc, 11);
            Rng xr(55);
            Tensor<D> x = random_tensor(xr, {1, 1, 16, 16}, 0.0, 1.0);
            ForwardValues<D> fw = forward_eval(m, x);
            if (std::memcmp(fw.x_rec.data(), fw.x_init.data(),
                            sizeof(D) * static_cast<size_t>(fw.x_rec.numel())) != 0) {
                ok = false;
                detail = "X_rec != X_init for " + variant_to_string(variant);
                break;
            }
        }
        out.push_back({"identity.zero_init_model", ok, detail});
    }
    {
        // sample(feat_to_pixel(F)) == Y  =>  fsim(F, Y) == F exactly
        ModelDesc desc{0.5, 4, 2, 1, Variant::fsoinet};
        Model<D> m = make_model<D>(desc, 21);
        randomize_parameters(m, 22, 0.4);
        Tape<D> t;
        ModelVars<D> mv = bind_model(t, m, false);
        Rng fr(23);
        Tensor<D> f = random_tensor(fr, {1, 2, 8, 8});
        Var fv = t.leaf(f, false);
        Var xhat = conv2d(t, fv, mv.phases[0].fsim.feat_to_pixel.w, std::nullopt, 1, 1);
        Var y = sample(t, xhat, mv.sampling);
        Var o = fsim(t, fv, y, mv.sampling, mv.phases[0].fsim);
        bool same = std::memcmp(t.value(o).data(), f.data(),
                                sizeof(D) * static_cast<size_t>(f.numel())) == 0;
        out.push_back({"identity.fsim_fixed_point", same,
                       same ? "bit-exact" : "fsim moved a zero-residual state"});
    }

    // -- solver building blocks --
    {
        Rng xr(31);
        Tensor<D> x = random_tensor(xr, {16, 16});
        Tensor<D> rt = block_idct2(block_dct2(x, 8), 8);
        double worst = 0;
        for (int64_t i = 0; i < x.numel(); ++i) worst = std::max(worst, std::abs(rt[i] - x[i]));
        double nx = std::sqrt(dot(x, x));
        Tensor<D> cx = block_dct2(x, 8);
        double nc = std::sqrt(dot(cx, cx));
        worst = std::max(worst, std::abs(nx - nc));
        out.push_back(report_max("property.dct_roundtrip_parseval", worst, 1e-10));
    }
    {
        // prox of tau |.| : soft threshold against a dense grid search
        Rng pr(37);
        double worst = 0;
        for (int k = 0; k < 40; ++k) {
            const double v = pr.uniform(-3, 3);
            const double tau = pr.uniform(0, 1.5);
            Tensor<D> in({1}, {v});
            const double got = soft_threshold(in, tau)[0];
            double best_u = 0, best_obj = 1e300;
            for (double u = -4.0; u <= 4.0; u += 1e-4) {
                const double obj = 0.5 * (u - v) * (u - v) + tau * std::abs(u);
                if (obj < best_obj) {
                    best_obj = obj;
                    best_u = u;
                }
            }
            worst = std::max(worst, std::abs(got - best_u));
        }
        out.push_back(report_max("property.soft_threshold_prox", worst, 2e-4));
    }

    // -- determinism --
    {
        auto run_once = [](uint64_t seed) {
            ModelDesc desc{0.25, 8, 4, 2, Variant::fsoinet};
            Model<D> m = make_model<D>(desc, seed);
            randomize_parameters(m, seed + 1, 0.3);
            Rng xr(seed + 2);
            Tensor<D> x(Shape{1, 1, 16, 16});
            for (int64_t i = 0; i < x.numel(); ++i) x[i] = xr.uniform(0, 1);
            Tape<D> t;
            ModelVars<D> mv = bind_model(t, m, true);
            Var xv = t.leaf(x, false);
            ForwardVars<D> fw = model_forward(t, mv, xv);
            Var loss = mse_loss(t, fw.x_rec, xv);
            GradientMap<D> gm = t.backward(loss);
            std::vector<D> blob;
            const Tensor<D>& rec = t.value(fw.x_rec);
            blob.insert(blob.end(), rec.data(), rec.data() + rec.numel());
            for (Var v : mv.flat) {
                const Tensor<D>& g = gm.at(v);
                blob.insert(blob.end(), g.data(), g.data() + g.numel());
            }
            return blob;
        };
        auto a = run_once(91), b = run_once(91);
        bool same = a.size() == b.size() &&
                    std::memcmp(a.data(), b.data(), sizeof(D) * a.size()) == 0;
        out.push_back({"determinism.forward_backward", same,
                       same ? "bit-identical across runs" : "outputs differ between runs"});
    }

    return out;
}

}  // namespace fscs
