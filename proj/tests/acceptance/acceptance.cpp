// Acceptance suite: runs every criterion at its stated tolerance and prints
// one PASS/FAIL line per criterion. Exit code = number of failed criteria.
//
//   acceptance            runs everything
//   acceptance --only 1,4,7   runs a subset
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "core/blocking.hpp"
#include "core/checkpoint.hpp"
#include "core/dct.hpp"
#include "core/metrics.hpp"
#include "core/model.hpp"
#include "core/pgd.hpp"
#include "core/rng.hpp"
#include "core/synth.hpp"
#include "core/train.hpp"
#include "core/verify.hpp"

using namespace fscs;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(double v, int prec = 3) {
    std::ostringstream os;
    os.precision(prec);
    os << v;
    return os.str();
}

template <typename T>
bool bitwise_equal(const Tensor<T>& a, const Tensor<T>& b) {
    return a.same_shape(b) &&
           std::memcmp(a.data(), b.data(), sizeof(T) * static_cast<size_t>(a.numel())) == 0;
}

Tensor<double> rand_tensor(Rng& rng, Shape shape, double lo, double hi) {
    Tensor<double> t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

// ---- criterion 1: operator verification suite ----

Outcome criterion1() {
    auto t0 = Clock::now();
    auto results = run_verification();
    int failed = 0;
    std::string first;
    for (const auto& r : results)
        if (!r.pass) {
            ++failed;
            if (first.empty()) first = r.name + " (" + r.detail + ")";
        }
    const double secs = seconds_since(t0);
    if (failed > 0) return {false, std::to_string(failed) + " checks failed, first: " + first};
    if (secs > 300.0) return {false, "suite exceeded 5 min: " + fmt(secs) + " s"};
    return {true, std::to_string(results.size()) + " property checks, " + fmt(secs) + " s"};
}

// ---- criterion 2: sampling / initial-reconstruction identities ----

SamplingMatrix<float> dct_orthonormal_phi_f32(int64_t b) {
    const int64_t n = b * b;
    Tensor<double> d = dct_matrix<double>(b);
    SamplingMatrix<float> s;
    s.block_side = b;
    s.ratio = 1.0;
    s.phi = Tensor<float>({n, n});
    for (int64_t u = 0; u < b; ++u)
        for (int64_t v = 0; v < b; ++v)
            for (int64_t r = 0; r < b; ++r)
                for (int64_t c = 0; c < b; ++c)
                    s.phi[(u * b + v) * n + (r * b + c)] =
                        static_cast<float>(d[u * b + r] * d[v * b + c]);
    return s;
}

Outcome criterion2() {
    // orthonormal-row square phi: init_reconstruct(sample(X)) == X within 1e-5 (32-bit)
    auto s = dct_orthonormal_phi_f32(8);
    Rng rng(1021);
    Tensor<float> x({1, 1, 32, 32});
    for (int64_t i = 0; i < x.numel(); ++i) x[i] = static_cast<float>(rng.uniform(0, 1));
    Tensor<float> rec = init_reconstruct_value(sample_value(x, s), s);
    double e1 = 0;
    for (int64_t i = 0; i < x.numel(); ++i)
        e1 = std::max(e1, std::abs(static_cast<double>(rec[i]) - x[i]));
    if (e1 >= 1e-5) return {false, "round trip error " + fmt(e1)};

    // random phi vs the brute-force per-block matrix oracle, within 1e-5
    auto g = init_sampling_matrix<float>(8, 0.4, 77);
    Tensor<float> y = sample_value(x, g);
    double e2 = 0;
    {
        const int64_t b = 8, m = g.m(), n = g.n();
        for (int64_t gy = 0; gy < 4; ++gy)
            for (int64_t gx = 0; gx < 4; ++gx)
                for (int64_t i = 0; i < m; ++i) {
                    double acc = 0;
                    for (int64_t j = 0; j < n; ++j)
                        acc += static_cast<double>(g.phi[i * n + j]) *
                               x.at({0, 0, gy * b + j / b, gx * b + j % b});
                    e2 = std::max(e2, std::abs(acc - y.at({0, i, gy, gx})));
                }
        Tensor<float> xi = init_reconstruct_value(y, g);
        for (int64_t gy = 0; gy < 4; ++gy)
            for (int64_t gx = 0; gx < 4; ++gx)
                for (int64_t j = 0; j < n; ++j) {
                    double acc = 0;
                    for (int64_t i = 0; i < m; ++i)
                        acc += static_cast<double>(g.phi[i * n + j]) * y.at({0, i, gy, gx});
                    e2 = std::max(e2,
                                  std::abs(acc - xi.at({0, 0, gy * b + j / b, gx * b + j % b})));
                }
    }
    if (e2 >= 1e-5) return {false, "oracle mismatch " + fmt(e2)};

    // orthogonality penalty of an orthonormal phi
    SamplingMatrix<double> sd;
    sd.block_side = 8;
    sd.ratio = 1.0;
    sd.phi = dct_orthonormal_phi_f32(8).phi.cast<double>();
    const double ol = orth_loss_value(sd);
    if (!(ol < 1e-12)) return {false, "orth loss " + fmt(ol)};
    return {true, "round trip " + fmt(e1) + ", oracle gap " + fmt(e2) + ", orth " + fmt(ol)};
}

// ---- criterion 3: classical baseline on the synthetic sparse instance ----

Outcome criterion3() {
    auto t0 = Clock::now();
    const int64_t b = 16;  // N = 256
    auto s = init_sampling_matrix<double>(b, 0.5, 23);
    if (s.m() != 128) return {false, "expected M = 128"};

    Rng rng(29);
    Tensor<double> coef({1, 1, 32, 32});
    for (int64_t by = 0; by < 2; ++by)
        for (int64_t bx = 0; bx < 2; ++bx)
            for (int k = 0; k < 5; ++k)
                coef.at({0, 0, by * b + rng.index(b), bx * b + rng.index(b)}) =
                    rng.uniform(-1, 1);
    Tensor<double> x_true = block_idct2(coef, b);
    Tensor<double> y = sample_value(x_true, s);

    const double sigma_sq = spectral_norm_sq(s);
    PgdConfig cfg;
    cfg.step_size = 0.95 / sigma_sq;
    cfg.reg_weight = 0.0;
    cfg.max_iters = 500;
    cfg.tolerance = 0.0;
    cfg.continuation = true;
    cfg.continuation_init = 0.05;
    cfg.continuation_decay = 0.96;
    PgdResult res = pgd_reconstruct(y, s, cfg);

    double err = 0, norm = 0;
    for (int64_t i = 0; i < x_true.numel(); ++i) {
        const double d = res.x[i] - x_true[i];
        err += d * d;
        norm += x_true[i] * x_true[i];
    }
    const double rel = std::sqrt(err / norm);
    if (!(rel < 1e-2))
        return {false, "relative error " + fmt(rel) + " after " +
                           std::to_string(res.iters_used) + " iterations"};

    // lambda = 0 with rho <= 1/sigma_max^2: residual history non-increasing
    PgdConfig plain;
    plain.step_size = 1.0 / sigma_sq;
    plain.reg_weight = 0.0;
    plain.max_iters = 500;
    plain.tolerance = 0.0;
    PgdResult gd = pgd_reconstruct(y, s, plain);
    for (size_t i = 1; i < gd.residual_history.size(); ++i)
        if (gd.residual_history[i] > gd.residual_history[i - 1])
            return {false, "residual increased at iteration " + std::to_string(i)};

    const double secs = seconds_since(t0);
    if (secs > 60.0) return {false, "exceeded 1 min: " + fmt(secs) + " s"};
    return {true, "relative error " + fmt(rel) + ", monotone over " +
                      std::to_string(gd.residual_history.size() - 1) + " iterations, " +
                      fmt(secs) + " s"};
}

// ---- criterion 4: zero-init identity ----

Outcome criterion4() {
    Rng rng(41);
    for (Variant variant : {Variant::fsoinet, Variant::oinet, Variant::vnet}) {
        ModelDesc desc{0.25, 32, 8, 4, variant};
        Model<float> m = make_model<float>(desc, 4242);
        for (int rep = 0; rep < 3; ++rep) {
            Tensor<double> xd = rand_tensor(rng, {1, 1, 96, 96}, 0, 1);
            Tensor<float> x = xd.cast<float>();
            ForwardValues<float> fw = forward_eval(m, x);
            if (!bitwise_equal(fw.x_rec, fw.x_init))
                return {false, "X_rec != X_init for " + variant_to_string(variant)};
        }
    }
    return {true, "X_rec bit-equal to X_init for fsoinet, oinet and vnet"};
}

// ---- criteria 5 and 6: toy end-to-end training and ablation direction ----

struct ToyData {
    PatchDataset<float> train_set;
    std::vector<Tensor<float>> holdout;  // 96x96 grayscale images
};

ToyData make_toy_data() {
    ToyData data;
    // 24 procedural 192x192 source images, stride-48 crops capped at 200
    auto images = synth_images(24, 192, 90210);
    data.train_set = crop_patches(images, 96, 48, 200, 90211);
    data.train_set.augment = true;
    auto held = synth_images(6, 96, 424242);
    data.holdout = std::move(held);
    return data;
}

TrainConfig toy_config(uint64_t seed) {
    TrainConfig cfg;
    cfg.ratio = 0.25;
    cfg.block_side = 32;
    cfg.channels = 8;
    cfg.phases = 4;
    cfg.batch_size = 8;
    cfg.epochs = 50;
    cfg.base_lr = 2e-4;
    cfg.final_lr = 5e-5;
    cfg.warmup_epochs = 3;
    cfg.gamma = 0.01;
    cfg.seed = seed;
    cfg.patch_size = 96;
    return cfg;
}

struct ToyRun {
    Model<float> model;
    TrainResult result;
    double holdout_rec_psnr = 0;
    double holdout_init_psnr = 0;
};

ToyRun run_toy_training(Variant variant, uint64_t seed, const ToyData& data) {
    ToyRun run{make_model<float>(ModelDesc{0.25, 32, 8, 4, variant}, seed), {}, 0, 0};
    run.result = train(run.model, data.train_set, toy_config(seed));
    double rec = 0, init = 0;
    for (const auto& img : data.holdout) {
        Reconstruction<float> r = reconstruct_image(run.model, img);
        rec += psnr(img, r.rec);
        init += psnr(img, r.init);
    }
    run.holdout_rec_psnr = rec / static_cast<double>(data.holdout.size());
    run.holdout_init_psnr = init / static_cast<double>(data.holdout.size());
    return run;
}

Outcome criterion5() {
    auto t0 = Clock::now();
    ToyData data = make_toy_data();
    if (data.train_set.patches.size() != 200)
        return {false, "expected 200 patches, got " +
                           std::to_string(data.train_set.patches.size())};

    ToyRun run = run_toy_training(Variant::fsoinet, 1001, data);
    const double train_secs = seconds_since(t0);

    const double first = run.result.log.front().mean_total;
    const double last = run.result.log.back().mean_total;
    if (!(last < first))
        return {false, "(a) final loss " + fmt(last) + " not below first " + fmt(first)};
    const double gain = run.holdout_rec_psnr - run.holdout_init_psnr;
    if (!(gain >= 1.0))
        return {false, "(b) held-out gain " + fmt(gain) + " dB below 1.0 dB (rec " +
                           fmt(run.holdout_rec_psnr) + ", init " + fmt(run.holdout_init_psnr) +
                           ")"};
    if (!(run.result.final_orth < run.result.initial_orth))
        return {false, "(c) orth loss did not improve"};
    if (train_secs > 1800.0) return {false, "exceeded 30 min: " + fmt(train_secs) + " s"};

    // deterministic per seed: an identical rerun yields a bit-identical model
    ToyRun rerun = run_toy_training(Variant::fsoinet, 1001, data);
    bool identical = true;
    std::vector<const Tensor<float>*> pa, pb;
    for_each_param(run.model, std::function<void(const std::string&, const Tensor<float>&)>(
                                  [&pa](const std::string&, const Tensor<float>& t) {
                                      pa.push_back(&t);
                                  }));
    for_each_param(rerun.model, std::function<void(const std::string&, const Tensor<float>&)>(
                                    [&pb](const std::string&, const Tensor<float>& t) {
                                        pb.push_back(&t);
                                    }));
    for (size_t i = 0; i < pa.size() && identical; ++i)
        identical = bitwise_equal(*pa[i], *pb[i]);
    if (!identical) return {false, "rerun with the same seed diverged"};

    return {true, "loss " + fmt(first) + " -> " + fmt(last) + ", held-out gain " + fmt(gain) +
                      " dB (rec " + fmt(run.holdout_rec_psnr, 4) + " / init " +
                      fmt(run.holdout_init_psnr, 4) + "), orth " +
                      fmt(run.result.initial_orth) + " -> " + fmt(run.result.final_orth) +
                      ", deterministic, " + fmt(train_secs / 60.0) + " min"};
}

Outcome criterion6() {
    ToyData data = make_toy_data();
    const uint64_t seeds[3] = {11, 22, 33};
    auto median3 = [](double a, double b, double c) {
        return std::max(std::min(a, b), std::min(std::max(a, b), c));
    };
    double psnrs[3][3];  // [variant][seed]
    const Variant variants[3] = {Variant::fsoinet, Variant::oinet, Variant::vnet};
    for (int v = 0; v < 3; ++v)
        for (int si = 0; si < 3; ++si) {
            ToyRun run = run_toy_training(variants[v], seeds[si], data);
            psnrs[v][si] = run.holdout_rec_psnr;
            std::cout << "    [ablation] " << variant_to_string(variants[v]) << " seed "
                      << seeds[si] << ": held-out " << fmt(psnrs[v][si], 4) << " dB\n";
        }
    const double fso = median3(psnrs[0][0], psnrs[0][1], psnrs[0][2]);
    const double oin = median3(psnrs[1][0], psnrs[1][1], psnrs[1][2]);
    const double vne = median3(psnrs[2][0], psnrs[2][1], psnrs[2][2]);
    std::string detail = "median held-out PSNR: fsoinet " + fmt(fso, 4) + " >= oinet " +
                         fmt(oin, 4) + " >= vnet " + fmt(vne, 4) + " dB";
    if (!(fso >= oin && oin >= vne)) return {false, "ordering violated: " + detail};
    return {true, detail};
}

// ---- criterion 7: learning-rate schedule ----

Outcome criterion7() {
    TrainConfig cfg;
    cfg.epochs = 100;
    cfg.base_lr = 2e-4;
    cfg.final_lr = 5e-5;
    cfg.warmup_epochs = 3;
    if (lr_at(3.0, cfg) != 2e-4) return {false, "lr_at(3) != 2e-4"};
    if (lr_at(100.0, cfg) != 5e-5) return {false, "lr_at(100) != 5e-5"};
    const double eps = 1e-9;
    const double jump = std::abs(lr_at(3.0 - eps, cfg) - lr_at(3.0 + eps, cfg));
    if (!(jump < 1e-12)) return {false, "warmup discontinuity " + fmt(jump)};
    return {true, "endpoints exact, warmup boundary jump " + fmt(jump)};
}

// ---- criterion 8: serialization ----

Outcome criterion8() {
    const std::string p1 = "/tmp/fscs_acceptance_a.fsoi";
    const std::string p2 = "/tmp/fscs_acceptance_b.fsoi";
    ModelDesc desc{0.25, 32, 8, 4, Variant::fsoinet};
    Model<float> m = make_model<float>(desc, 808);
    randomize_parameters(m, 809, 0.2);

    Rng rng(811);
    Tensor<double> xd = rand_tensor(rng, {100, 100}, 0, 1);
    Tensor<float> img = xd.cast<float>();
    Reconstruction<float> before = reconstruct_image(m, img);

    save_checkpoint(p1, m);
    Model<float> loaded = load_checkpoint(p1);
    save_checkpoint(p2, loaded);

    auto slurp = [](const std::string& path) {
        std::ifstream is(path, std::ios::binary);
        return std::vector<char>(std::istreambuf_iterator<char>(is),
                                 std::istreambuf_iterator<char>());
    };
    auto b1 = slurp(p1), b2 = slurp(p2);
    if (b1.empty() || b1 != b2) return {false, "save -> load -> save bytes differ"};

    Reconstruction<float> after = reconstruct_image(loaded, img);
    if (!bitwise_equal(before.rec, after.rec) || !bitwise_equal(before.init, after.init))
        return {false, "reconstruction from loaded checkpoint differs"};
    std::remove(p1.c_str());
    std::remove(p2.c_str());
    return {true, std::to_string(b1.size()) + "-byte checkpoint round trip bit-exact"};
}

// ---- criterion 9: metrics against literal oracles; pad/crop sweep ----

double ssim_literal(const Tensor<float>& a, const Tensor<float>& b) {
    const int w = 11;
    const double sigma = 1.5, c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    double win[11][11], sum = 0;
    for (int i = 0; i < w; ++i)
        for (int j = 0; j < w; ++j) {
            const double dy = (i - 5.0) / sigma, dx = (j - 5.0) / sigma;
            win[i][j] = std::exp(-0.5 * (dy * dy + dx * dx));
            sum += win[i][j];
        }
    for (auto& row : win)
        for (double& v : row) v /= sum;
    const int64_t h = a.dim(0), ww = a.dim(1);
    double acc = 0;
    int64_t n = 0;
    for (int64_t y = 0; y + w <= h; ++y)
        for (int64_t x = 0; x + w <= ww; ++x) {
            double mx = 0, my = 0, sx = 0, sy = 0, sxy = 0;
            for (int i = 0; i < w; ++i)
                for (int j = 0; j < w; ++j) {
                    mx += win[i][j] * a[(y + i) * ww + x + j];
                    my += win[i][j] * b[(y + i) * ww + x + j];
                }
            for (int i = 0; i < w; ++i)
                for (int j = 0; j < w; ++j) {
                    const double da = a[(y + i) * ww + x + j] - mx;
                    const double db = b[(y + i) * ww + x + j] - my;
                    sx += win[i][j] * da * da;
                    sy += win[i][j] * db * db;
                    sxy += win[i][j] * da * db;
                }
            acc += ((2 * mx * my + c1) * (2 * sxy + c2)) /
                   ((mx * mx + my * my + c1) * (sx + sy + c2));
            ++n;
        }
    return acc / static_cast<double>(n);
}

Outcome criterion9() {
    Rng rng(909);
    double worst_psnr = 0, worst_ssim = 0;
    for (int k = 0; k < 20; ++k) {
        Tensor<float> a({24, 24}), b({24, 24});
        for (int64_t i = 0; i < a.numel(); ++i) {
            a[i] = static_cast<float>(rng.uniform(0, 1));
            b[i] = static_cast<float>(
                std::min(1.0, std::max(0.0, a[i] + rng.uniform(-0.3, 0.3))));
        }
        double mse = 0;
        for (int64_t i = 0; i < a.numel(); ++i) {
            const double d = static_cast<double>(a[i]) - b[i];
            mse += d * d;
        }
        mse /= static_cast<double>(a.numel());
        worst_psnr = std::max(worst_psnr, std::abs(psnr(a, b) - 10.0 * std::log10(1.0 / mse)));
        worst_ssim = std::max(worst_ssim, std::abs(ssim(a, b) - ssim_literal(a, b)));
    }
    if (!(worst_psnr < 1e-6)) return {false, "psnr oracle gap " + fmt(worst_psnr)};
    if (!(worst_ssim < 1e-6)) return {false, "ssim oracle gap " + fmt(worst_ssim)};

    for (int64_t e = 33; e <= 96; ++e) {
        Tensor<float> img({e, 129 - e});
        for (int64_t i = 0; i < img.numel(); ++i) img[i] = static_cast<float>(rng.uniform(0, 1));
        auto [padded, grid] = pad_to_block(img, 32);
        if (padded.dim(0) % 32 != 0 || padded.dim(1) % 32 != 0)
            return {false, "pad not block aligned at extent " + std::to_string(e)};
        Tensor<float> back = crop_from_block(padded, grid);
        if (!bitwise_equal(back, img))
            return {false, "pad/crop round trip broke at extent " + std::to_string(e)};
    }
    return {true, "psnr gap " + fmt(worst_psnr) + ", ssim gap " + fmt(worst_ssim) +
                      ", pad/crop bit-exact for extents 33..96"};
}

}  // namespace

int main(int argc, char** argv) {
    std::vector<int> only;
    for (int i = 1; i < argc; ++i) {
        if (std::string(argv[i]) == "--only" && i + 1 < argc) {
            std::stringstream ss(argv[++i]);
            std::string tok;
            while (std::getline(ss, tok, ',')) only.push_back(std::stoi(tok));
        }
    }
    auto wanted = [&only](int n) {
        return only.empty() || std::find(only.begin(), only.end(), n) != only.end();
    };

    struct Criterion {
        int number;
        const char* title;
        std::function<Outcome()> fn;
    };
    const Criterion criteria[] = {
        {1, "operator verification suite", criterion1},
        {2, "sampling and initial-reconstruction identities", criterion2},
        {3, "classical sparse-recovery baseline", criterion3},
        {4, "zero-init identity", criterion4},
        {5, "toy end-to-end training", criterion5},
        {6, "ablation direction (fsoinet >= oinet >= vnet)", criterion6},
        {7, "learning-rate schedule", criterion7},
        {8, "checkpoint serialization", criterion8},
        {9, "metric oracles and pad/crop sweep", criterion9},
    };

    int failures = 0;
    for (const auto& c : criteria) {
        if (!wanted(c.number)) continue;
        auto t0 = Clock::now();
        Outcome o;
        try {
            o = c.fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = seconds_since(t0);
        std::printf("[%s] criterion %d: %s — %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", c.number,
                    c.title, o.detail.c_str(), secs);
        std::fflush(stdout);
        if (!o.pass) ++failures;
    }
    if (failures == 0)
        std::printf("all acceptance criteria passed\n");
    else
        std::printf("%d acceptance criteria FAILED\n", failures);
    return failures;
}
