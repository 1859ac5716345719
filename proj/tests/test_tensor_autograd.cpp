#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>

#include "core/autograd.hpp"
#include "test_support.hpp"

using namespace fscs;
using namespace testsup;

namespace {

// loss = <op(x...), w> evaluated through the tape; used both for the value
// function handed to the finite-difference oracle and for analytic gradients
struct TapeProblem {
    std::function<Var(Tape<double>&, const std::vector<Var>&)> build;
    std::vector<Tensor<double>> inputs;

    double value(const std::vector<Tensor<double>>& xs) const {
        Tape<double> t;
        std::vector<Var> vars;
        for (const auto& x : xs) vars.push_back(t.leaf(x, false));
        return t.value(build(t, vars))[0];
    }

    std::vector<Tensor<double>> analytic() const {
        Tape<double> t;
        std::vector<Var> vars;
        for (const auto& x : inputs) vars.push_back(t.leaf(x, true));
        GradientMap<double> gm = t.backward(build(t, vars));
        std::vector<Tensor<double>> out;
        for (Var v : vars) out.push_back(gm.at(v));
        return out;
    }

    double gradcheck(double step = 1e-5) const {
        auto an = analytic();
        auto fd = fd_gradients({[this](const std::vector<Tensor<double>>& xs) {
                                    return value(xs);
                                },
                                inputs},
                               step);
        double worst = 0;
        for (size_t i = 0; i < an.size(); ++i) worst = std::max(worst, max_rel_err(an[i], fd[i]));
        return worst;
    }
};

Tensor<double> fixed_weights(const Shape& shape, uint64_t seed) {
    Rng rng(seed);
    Tensor<double> w(shape);
    for (int64_t i = 0; i < w.numel(); ++i) w[i] = rng.uniform(-1, 1);
    return w;
}

}  // namespace

TEST_CASE("conv2d forward matches the hand-computed examples") {
    Tape<double> t;
    Var x = t.leaf(Tensor<double>({1, 1, 2, 2}, {1, 2, 3, 4}));
    Var w = t.leaf(Tensor<double>::full({1, 1, 2, 2}, 1.0));
    Var o = conv2d(t, x, w, std::nullopt, 1, 0);
    CHECK(t.value(o).shape() == Shape{1, 1, 1, 1});
    CHECK(t.value(o)[0] == doctest::Approx(10.0));

    Var id = t.leaf(Tensor<double>({1, 1, 1, 1}, {1.0}));
    Var o2 = conv2d(t, x, id, std::nullopt, 1, 0);
    CHECK(max_abs_diff(t.value(o2), t.value(x)) == 0.0);
}

TEST_CASE("conv2d rejects shape mismatches") {
    Tape<double> t;
    Var x = t.leaf(Tensor<double>({1, 2, 4, 4}));
    Var w = t.leaf(Tensor<double>({1, 3, 3, 3}));
    CHECK_THROWS_AS(conv2d(t, x, w, std::nullopt, 1, 0), std::invalid_argument);
    Var wbig = t.leaf(Tensor<double>({1, 2, 6, 6}));
    CHECK_THROWS_AS(conv2d(t, x, wbig, std::nullopt, 1, 0), std::invalid_argument);
}

TEST_CASE("conv2d gradients match finite differences") {
    Rng rng(42);
    for (int inst = 0; inst < 5; ++inst) {
        TapeProblem p;
        p.inputs = {rand_tensor(rng, {1, 2, 6, 6}), rand_tensor(rng, {3, 2, 3, 3}),
                    rand_tensor(rng, {3})};
        const int64_t stride = 1 + inst % 2;
        const int64_t pad = inst % 3 == 0 ? 1 : 0;
        p.build = [stride, pad](Tape<double>& t, const std::vector<Var>& v) {
            Var o = conv2d(t, v[0], v[1], v[2], stride, pad);
            return inner(t, o, fixed_weights(t.value(o).shape(), 7));
        };
        CHECK(p.gradcheck() < 1e-4);
    }
}

TEST_CASE("conv2d_transpose broadcasts a single tap and is the conv2d adjoint") {
    Tape<double> t;
    Var x = t.leaf(Tensor<double>({1, 1, 1, 1}, {2.5}));
    Var w = t.leaf(Tensor<double>({1, 1, 2, 2}, {1, 2, 3, 4}));
    Var o = conv2d_transpose(t, x, w, 2);
    const Tensor<double>& ov = t.value(o);
    CHECK(ov.shape() == Shape{1, 1, 2, 2});
    for (int64_t i = 0; i < 4; ++i) CHECK(ov[i] == doctest::Approx(2.5 * (i + 1)));

    // <conv2d(x, w, s), y> == <x, conv2d_transpose(y, w, s)>
    Rng rng(3);
    for (int inst = 0; inst < 5; ++inst) {
        Tensor<double> xs = rand_tensor(rng, {1, 2, 8, 8});
        Tensor<double> ws = rand_tensor(rng, {3, 2, 2, 2});
        Tensor<double> ys = rand_tensor(rng, {1, 3, 4, 4});
        Tape<double> tt;
        Var xv = tt.leaf(xs), wv = tt.leaf(ws), yv = tt.leaf(ys);
        Var fwd = conv2d(tt, xv, wv, std::nullopt, 2, 0);
        Var adj = conv2d_transpose(tt, yv, wv, 2);
        CHECK(std::abs(dot(tt.value(fwd), ys) - dot(xs, tt.value(adj))) < 1e-10);
    }
}

TEST_CASE("conv2d_transpose gradients match finite differences") {
    Rng rng(11);
    for (int inst = 0; inst < 5; ++inst) {
        TapeProblem p;
        p.inputs = {rand_tensor(rng, {1, 3, 3, 3}), rand_tensor(rng, {3, 2, 2, 2})};
        p.build = [](Tape<double>& t, const std::vector<Var>& v) {
            Var o = conv2d_transpose(t, v[0], v[1], 2);
            return inner(t, o, fixed_weights(t.value(o).shape(), 9));
        };
        CHECK(p.gradcheck() < 1e-4);
    }
}

TEST_CASE("pixel_shuffle layout and shape arithmetic") {
    Tape<double> t;
    Var x = t.leaf(Tensor<double>({1, 4, 1, 1}, {1, 2, 3, 4}));  // a,b,c,d
    Var o = pixel_shuffle(t, x, 2);
    const Tensor<double>& ov = t.value(o);
    CHECK(ov.shape() == Shape{1, 1, 2, 2});
    CHECK(ov[0] == 1.0);  // [[a,b],[c,d]]
    CHECK(ov[1] == 2.0);
    CHECK(ov[2] == 3.0);
    CHECK(ov[3] == 4.0);

    Var big = t.leaf(Tensor<double>({2, 16, 3, 3}));
    CHECK(t.value(pixel_shuffle(t, big, 4)).shape() == Shape{2, 1, 12, 12});

    Var bad = t.leaf(Tensor<double>({1, 3, 2, 2}));
    CHECK_THROWS_AS(pixel_shuffle(t, bad, 2), std::invalid_argument);
}

TEST_CASE("space_to_depth is the exact inverse of pixel_shuffle") {
    Tape<double> t;
    Var x = t.leaf(Tensor<double>({1, 1, 2, 2}, {1, 2, 3, 4}));
    const Tensor<double>& packed = t.value(space_to_depth(t, x, 2));
    CHECK(packed.shape() == Shape{1, 4, 1, 1});
    for (int64_t i = 0; i < 4; ++i) CHECK(packed[i] == static_cast<double>(i + 1));

    Rng rng(5);
    Tensor<double> r = rand_tensor(rng, {2, 3, 12, 8});
    Tensor<double> rt = pixel_shuffle_value(space_to_depth_value(r, 4), 4);
    CHECK(std::memcmp(r.data(), rt.data(), sizeof(double) * static_cast<size_t>(r.numel())) == 0);
    Tensor<double> r2 = rand_tensor(rng, {1, 18, 2, 5});
    Tensor<double> rt2 = space_to_depth_value(pixel_shuffle_value(r2, 3), 3);
    CHECK(std::memcmp(r2.data(), rt2.data(), sizeof(double) * static_cast<size_t>(r2.numel())) ==
          0);

    Var odd = t.leaf(Tensor<double>({1, 1, 3, 2}));
    CHECK_THROWS_AS(space_to_depth(t, odd, 2), std::invalid_argument);
}

TEST_CASE("space_to_depth gradients match finite differences") {
    Rng rng(17);
    TapeProblem p;
    p.inputs = {rand_tensor(rng, {1, 2, 4, 4})};
    p.build = [](Tape<double>& t, const std::vector<Var>& v) {
        Var o = space_to_depth(t, v[0], 2);
        return inner(t, o, fixed_weights(t.value(o).shape(), 13));
    };
    CHECK(p.gradcheck() < 1e-4);
}

TEST_CASE("elementwise op semantics") {
    Tape<double> t;
    Var x = t.leaf(Tensor<double>({3}, {-1, 0, 2}));
    const Tensor<double>& r = t.value(relu(t, x));
    CHECK(r[0] == 0.0);
    CHECK(r[1] == 0.0);
    CHECK(r[2] == 2.0);

    Rng rng(19);
    Tensor<double> xs = rand_tensor(rng, {4, 5});
    Tape<double> t2;
    Var a = t2.leaf(xs);
    Var z = t2.leaf(Tensor<double>::zeros({4, 5}));
    CHECK(max_abs_diff(t2.value(add(t2, a, z)), xs) == 0.0);

    Var b = t2.leaf(Tensor<double>({2, 2}));
    CHECK_THROWS_AS(add(t2, a, b), std::invalid_argument);
    CHECK_THROWS_AS(sub(t2, a, b), std::invalid_argument);
}

TEST_CASE("scale gradient is the constant everywhere") {
    Rng rng(23);
    Tensor<double> xs = rand_tensor(rng, {3, 3});
    Tape<double> t;
    Var x = t.leaf(xs, true);
    Var o = scale(t, x, 3.0);
    Var loss = inner(t, o, Tensor<double>::full({3, 3}, 1.0));
    GradientMap<double> gm = t.backward(loss);
    for (int64_t i = 0; i < 9; ++i) CHECK(gm.at(x)[i] == doctest::Approx(3.0));
}

TEST_CASE("relu backward passes zero gradient at exactly zero") {
    Tape<double> t;
    Var x = t.leaf(Tensor<double>({3}, {-1, 0, 2}), true);
    Var loss = inner(t, relu(t, x), Tensor<double>::full({3}, 1.0));
    GradientMap<double> gm = t.backward(loss);
    CHECK(gm.at(x)[0] == 0.0);
    CHECK(gm.at(x)[1] == 0.0);
    CHECK(gm.at(x)[2] == 1.0);
}

TEST_CASE("mse_loss values and gradients") {
    Tape<double> t;
    Var p = t.leaf(Tensor<double>({2}, {0, 0}));
    Var y = t.leaf(Tensor<double>({2}, {1, 1}));
    CHECK(t.value(mse_loss(t, p, y))[0] == doctest::Approx(1.0));
    CHECK(t.value(mse_loss(t, y, y))[0] == 0.0);

    Rng rng(29);
    TapeProblem prob;
    prob.inputs = {rand_tensor(rng, {3, 4}), rand_tensor(rng, {3, 4})};
    prob.build = [](Tape<double>& tt, const std::vector<Var>& v) {
        return mse_loss(tt, v[0], v[1]);
    };
    CHECK(prob.gradcheck() < 1e-6);
}

TEST_CASE("frobenius_sq and matmul") {
    Tape<double> t;
    Tensor<double> eye({3, 3});
    for (int i = 0; i < 3; ++i) eye[i * 3 + i] = 1.0;
    Var i3 = t.leaf(eye);
    CHECK(t.value(frobenius_sq(t, i3))[0] == doctest::Approx(3.0));

    Rng rng(31);
    Tensor<double> a = rand_tensor(rng, {3, 4});
    Var av = t.leaf(a);
    Var prod = matmul(t, i3, av);
    CHECK(max_abs_diff(t.value(prod), a) == 0.0);

    Var bad = t.leaf(Tensor<double>({5, 2}));
    CHECK_THROWS_AS(matmul(t, av, bad), std::invalid_argument);

    TapeProblem p;
    p.inputs = {rand_tensor(rng, {3, 4})};
    p.build = [](Tape<double>& tt, const std::vector<Var>& v) {
        return frobenius_sq(tt, v[0]);
    };
    // gradient of frobenius_sq is 2A
    auto an = p.analytic();
    for (int64_t i = 0; i < 12; ++i)
        CHECK(an[0][i] == doctest::Approx(2.0 * p.inputs[0][i]).epsilon(1e-12));
    CHECK(p.gradcheck() < 1e-6);
}

TEST_CASE("matmul gradients match finite differences") {
    Rng rng(37);
    TapeProblem p;
    p.inputs = {rand_tensor(rng, {3, 5}), rand_tensor(rng, {5, 4})};
    p.build = [](Tape<double>& t, const std::vector<Var>& v) {
        Var o = matmul(t, v[0], v[1]);
        return inner(t, o, fixed_weights(t.value(o).shape(), 15));
    };
    CHECK(p.gradcheck() < 1e-4);
}

TEST_CASE("backward basics: x^2, composite conv loss, disconnected leaf") {
    {
        Tape<double> t;
        Var x = t.leaf(Tensor<double>({1}, {3.0}), true);
        Var loss = frobenius_sq(t, x);  // x^2
        GradientMap<double> gm = t.backward(loss);
        CHECK(gm.at(x)[0] == doctest::Approx(6.0));
    }
    {
        Rng rng(41);
        TapeProblem p;
        p.inputs = {rand_tensor(rng, {1, 2, 5, 5}), rand_tensor(rng, {2, 2, 3, 3})};
        Tensor<double> target = rand_tensor(rng, {1, 2, 3, 3});
        p.build = [target](Tape<double>& t, const std::vector<Var>& v) {
            Var o = conv2d(t, v[0], v[1], std::nullopt, 1, 0);
            Var tv = t.leaf(target, false);
            return mse_loss(t, o, tv);
        };
        CHECK(p.gradcheck() < 1e-4);
    }
    {
        Tape<double> t;
        Var x = t.leaf(Tensor<double>({1}, {2.0}), true);
        Var unused = t.leaf(Tensor<double>({3}, {1, 2, 3}), true);
        Var loss = frobenius_sq(t, x);
        GradientMap<double> gm = t.backward(loss);
        CHECK(gm.contains(unused));
        for (int64_t i = 0; i < 3; ++i) CHECK(gm.at(unused)[i] == 0.0);
    }
    {
        Tape<double> t;
        Var v = t.leaf(Tensor<double>({3}, {1, 2, 3}), true);
        CHECK_THROWS_AS(t.backward(v), std::invalid_argument);  // non-scalar loss
    }
}

TEST_CASE("adjoint identity holds for every linear op") {
    Rng rng(43);
    auto check_adjoint = [&rng](auto&& op, Tensor<double> x) {
        Tape<double> t;
        Var xv = t.leaf(x, true);
        Var out = op(t, xv);
        Tensor<double> y = rand_tensor(rng, t.value(out).shape());
        double lhs = dot(t.value(out), y);
        GradientMap<double> gm = t.backward(inner(t, out, y));
        double rhs = dot(x, gm.at(xv));
        CHECK(std::abs(lhs - rhs) < 1e-10);
    };
    Tensor<double> w = rand_tensor(rng, {3, 2, 3, 3});
    check_adjoint(
        [&w](Tape<double>& t, Var x) {
            return conv2d(t, x, t.leaf(w, false), std::nullopt, 1, 1);
        },
        rand_tensor(rng, {1, 2, 6, 6}));
    Tensor<double> wt = rand_tensor(rng, {2, 3, 2, 2});
    check_adjoint(
        [&wt](Tape<double>& t, Var x) { return conv2d_transpose(t, x, t.leaf(wt, false), 2); },
        rand_tensor(rng, {1, 2, 3, 3}));
    check_adjoint([](Tape<double>& t, Var x) { return pixel_shuffle(t, x, 2); },
                  rand_tensor(rng, {1, 8, 3, 3}));
    check_adjoint([](Tape<double>& t, Var x) { return space_to_depth(t, x, 3); },
                  rand_tensor(rng, {1, 2, 6, 9}));
    Tensor<double> b = rand_tensor(rng, {4, 6});
    check_adjoint([&b](Tape<double>& t, Var x) { return matmul(t, x, t.leaf(b, false)); },
                  rand_tensor(rng, {3, 4}));
    check_adjoint([](Tape<double>& t, Var x) { return scale(t, x, 2.7); },
                  rand_tensor(rng, {5, 5}));
    check_adjoint([](Tape<double>& t, Var x) { return transpose2d(t, x); },
                  rand_tensor(rng, {4, 7}));
    check_adjoint([](Tape<double>& t, Var x) { return reshape(t, x, {2, 10}); },
                  rand_tensor(rng, {4, 5}));
}

TEST_CASE("forward and backward are bit-deterministic") {
    auto run = [] {
        Rng rng(47);
        Tape<float> t;
        Var x = t.leaf(rand_tensor_f(rng, {1, 2, 8, 8}), true);
        Var w = t.leaf(rand_tensor_f(rng, {4, 2, 3, 3}), true);
        Var o = conv2d(t, x, w, std::nullopt, 1, 1);
        o = relu(t, o);
        Var target = t.leaf(rand_tensor_f(rng, {1, 4, 8, 8}), false);
        Var loss = mse_loss(t, o, target);
        GradientMap<float> gm = t.backward(loss);
        std::vector<float> blob;
        const Tensor<float>& ov = t.value(o);
        blob.insert(blob.end(), ov.data(), ov.data() + ov.numel());
        const Tensor<float>& gx = gm.at(x);
        blob.insert(blob.end(), gx.data(), gx.data() + gx.numel());
        const Tensor<float>& gw = gm.at(w);
        blob.insert(blob.end(), gw.data(), gw.data() + gw.numel());
        return blob;
    };
    auto a = run(), b = run();
    REQUIRE(a.size() == b.size());
    CHECK(std::memcmp(a.data(), b.data(), sizeof(float) * a.size()) == 0);
}

TEST_CASE("mul_scalar gradients cover both operands") {
    Rng rng(53);
    TapeProblem p;
    p.inputs = {rand_tensor(rng, {2, 3}), rand_tensor(rng, {1}, 0.5, 2.0)};
    p.build = [](Tape<double>& t, const std::vector<Var>& v) {
        Var o = mul_scalar(t, v[0], v[1]);
        return inner(t, o, fixed_weights(t.value(o).shape(), 19));
    };
    CHECK(p.gradcheck() < 1e-4);
}

TEST_CASE("forward ops keep finite inputs finite") {
    Rng rng(59);
    Tape<float> t;
    Var x = t.leaf(rand_tensor_f(rng, {1, 3, 10, 10}, -10, 10));
    Var w = t.leaf(rand_tensor_f(rng, {5, 3, 3, 3}, -5, 5));
    Var b = t.leaf(rand_tensor_f(rng, {5}, -5, 5));
    Var o = conv2d(t, x, w, b, 1, 1);
    o = relu(t, o);
    Var o2 = space_to_depth(t, o, 2);
    CHECK(t.value(o2).all_finite());
}
