#include "core/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>

#include "core/checkpoint.hpp"
#include "core/parallel.hpp"
#include "core/rng.hpp"

namespace fscs {

double lr_at(double epoch, const TrainConfig& cfg) {
    const double w = cfg.warmup_epochs;
    const double e = static_cast<double>(cfg.epochs);
    if (!(w < e)) throw std::invalid_argument("lr schedule: warmup_epochs must be below epochs");
    if (!(cfg.final_lr > 0.0) || cfg.final_lr > cfg.base_lr)
        throw std::invalid_argument("lr schedule: need 0 < final_lr <= base_lr");
    if (epoch < 0.0 || epoch > e)
        throw std::invalid_argument("lr schedule: epoch " + std::to_string(epoch) +
                                    " outside [0, " + std::to_string(e) + "]");
    if (epoch < w) return cfg.base_lr * (epoch / w);
    const double progress = (epoch - w) / (e - w);
    return cfg.final_lr + 0.5 * (cfg.base_lr - cfg.final_lr) * (1.0 + std::cos(M_PI * progress));
}

template <typename T>
void adam_step(const std::vector<Tensor<T>*>& params, const std::vector<Tensor<T>>& grads,
               AdamState<T>& state, double lr) {
    if (!(lr > 0.0)) throw std::invalid_argument("adam: learning rate must be positive");
    if (grads.size() != params.size())
        throw std::invalid_argument("adam: got " + std::to_string(grads.size()) +
                                    " gradients for " + std::to_string(params.size()) +
                                    " parameters");
    if (state.slots.empty()) {
        state.slots.resize(params.size());
        for (size_t i = 0; i < params.size(); ++i) {
            state.slots[i].m = Tensor<T>::zeros(params[i]->shape());
            state.slots[i].v = Tensor<T>::zeros(params[i]->shape());
        }
    }
    state.step += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (size_t i = 0; i < params.size(); ++i) {
        Tensor<T>& p = *params[i];
        const Tensor<T>& g = grads[i];
        if (!p.same_shape(g))
            throw std::invalid_argument("adam: gradient " + std::to_string(i) + " has shape " +
                                        shape_str(g.shape()) + ", parameter has " +
                                        shape_str(p.shape()));
        Tensor<T>& m = state.slots[i].m;
        Tensor<T>& v = state.slots[i].v;
        const T b1 = static_cast<T>(state.beta1), b2 = static_cast<T>(state.beta2);
        for (int64_t j = 0, e = p.numel(); j < e; ++j) {
            m[j] = b1 * m[j] + (T(1) - b1) * g[j];
            v[j] = b2 * v[j] + (T(1) - b2) * g[j] * g[j];
            const double mhat = static_cast<double>(m[j]) / bc1;
            const double vhat = static_cast<double>(v[j]) / bc2;
            p[j] = static_cast<T>(static_cast<double>(p[j]) -
                                  lr * mhat / (std::sqrt(vhat) + state.eps));
        }
    }
}

template <typename T>
PatchDataset<T> crop_patches(const std::vector<Tensor<T>>& images, int64_t patch_size,
                             int64_t stride, int64_t limit, uint64_t seed) {
    if (patch_size < 1 || stride < 1)
        throw std::invalid_argument("crop_patches: patch size and stride must be positive");
    PatchDataset<T> ds;
    ds.patch_size = patch_size;
    for (size_t i = 0; i < images.size(); ++i) {
        const Tensor<T>& img = images[i];
        if (img.rank() != 2)
            throw std::invalid_argument("crop_patches: images must be (H,W) grayscale");
        if (img.dim(0) < patch_size || img.dim(1) < patch_size) {
            std::cerr << "warning: image " << i << " (" << shape_str(img.shape())
                      << ") smaller than patch size " << patch_size << ", skipping\n";
            continue;
        }
        for (int64_t y = 0; y + patch_size <= img.dim(0); y += stride)
            for (int64_t x = 0; x + patch_size <= img.dim(1); x += stride) {
                Tensor<T> p({patch_size, patch_size});
                for (int64_t r = 0; r < patch_size; ++r)
                    for (int64_t c = 0; c < patch_size; ++c) {
                        const T v = img[(y + r) * img.dim(1) + x + c];
                        if (!(v >= T(0) && v <= T(1)))
                            throw std::invalid_argument(
                                "crop_patches: pixel values must lie in [0, 1]");
                        p[r * patch_size + c] = v;
                    }
                ds.patches.push_back(std::move(p));
            }
    }
    if (ds.patches.empty()) throw std::runtime_error("crop_patches: no patches could be extracted");
    if (limit > 0 && static_cast<int64_t>(ds.patches.size()) > limit) {
        std::vector<int64_t> idx(ds.patches.size());
        for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int64_t>(i);
        Rng rng(seed);
        rng.shuffle(idx);
        idx.resize(static_cast<size_t>(limit));
        std::sort(idx.begin(), idx.end());
        std::vector<Tensor<T>> kept;
        kept.reserve(idx.size());
        for (int64_t i : idx) kept.push_back(std::move(ds.patches[static_cast<size_t>(i)]));
        ds.patches = std::move(kept);
    }
    return ds;
}

template <typename T>
Tensor<T> augment(const Tensor<T>& patch, int index) {
    if (patch.rank() != 2 || patch.dim(0) != patch.dim(1))
        throw std::invalid_argument("augment: patch must be square");
    if (index < 0 || index > 7) throw std::invalid_argument("augment: index must be in 0..7");
    const int64_t n = patch.dim(0);
    Tensor<T> out = patch;
    for (int r = 0; r < index % 4; ++r) {
        Tensor<T> rot({n, n});
        for (int64_t y = 0; y < n; ++y)
            for (int64_t x = 0; x < n; ++x) rot[y * n + x] = out[(n - 1 - x) * n + y];
        out = std::move(rot);
    }
    if (index >= 4) {
        Tensor<T> flip({n, n});
        for (int64_t y = 0; y < n; ++y)
            for (int64_t x = 0; x < n; ++x) flip[y * n + x] = out[y * n + (n - 1 - x)];
        out = std::move(flip);
    }
    return out;
}

template <typename T>
Var total_loss(Tape<T>& t, Var x_rec, Var x, Var phi, double gamma) {
    if (gamma < 0.0) throw std::invalid_argument("total_loss: gamma must be non-negative");
    Var mse = mse_loss(t, x_rec, x);
    Var orth = orth_loss(t, phi);
    return add(t, mse, scale(t, orth, static_cast<T>(gamma)));
}

namespace {

template <typename T>
struct SampleResult {
    double mse = 0;
    std::vector<Tensor<T>> grads;
};

}  // namespace

template <typename T>
TrainResult train(Model<T>& model, const PatchDataset<T>& dataset, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
    if (dataset.patches.empty()) throw std::invalid_argument("train: dataset is empty");
    if (cfg.batch_size < 1) throw std::invalid_argument("train: batch size must be positive");
    if (cfg.epochs < 1) throw std::invalid_argument("train: epochs must be positive");
    lr_at(0.0, cfg);  // validates the schedule parameters

    std::vector<Tensor<T>*> params;
    for_each_param(model, std::function<void(const std::string&, Tensor<T>&)>(
                              [&params](const std::string&, Tensor<T>& p) {
                                  params.push_back(&p);
                              }));
    size_t phi_index = 0;  // phi is visited first
    AdamState<T> adam;

    TrainResult result;
    result.initial_orth = static_cast<double>(orth_loss_value(model.sampling));

    const int64_t n = static_cast<int64_t>(dataset.patches.size());
    const int64_t steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
    const int threads = cfg.threads > 0 ? cfg.threads : worker_count();

    std::vector<int64_t> order(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;

    for (int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng epoch_rng(cfg.seed + 0x51ed2701ULL * static_cast<uint64_t>(epoch + 1));
        epoch_rng.shuffle(order);

        double sum_total = 0, sum_mse = 0, sum_orth = 0, last_lr = 0;
        for (int64_t step = 0; step < steps_per_epoch; ++step) {
            const int64_t begin = step * cfg.batch_size;
            const int64_t end = std::min(n, begin + cfg.batch_size);
            const int64_t bsz = end - begin;

            // augmentation draws happen up front so threading cannot reorder them
            std::vector<int> aug_idx(static_cast<size_t>(bsz), 0);
            if (dataset.augment)
                for (int64_t i = 0; i < bsz; ++i)
                    aug_idx[static_cast<size_t>(i)] = static_cast<int>(epoch_rng.index(8));

            std::vector<SampleResult<T>> results(static_cast<size_t>(bsz));
            parallel_chunks(bsz, threads, [&](int64_t lo, int64_t hi) {
                for (int64_t i = lo; i < hi; ++i) {
                    const Tensor<T>& raw =
                        dataset.patches[static_cast<size_t>(order[static_cast<size_t>(begin + i)])];
                    Tensor<T> patch = dataset.augment
                                          ? augment(raw, aug_idx[static_cast<size_t>(i)])
                                          : raw;
                    Tensor<T> x = patch.reshaped({1, 1, dataset.patch_size, dataset.patch_size});
                    Tape<T> tape;
                    ModelVars<T> mv = bind_model(tape, model, /*requires_grad=*/true);
                    Var xv = tape.leaf(std::move(x), false);
                    ForwardVars<T> fw = model_forward(tape, mv, xv);
                    Var loss = mse_loss(tape, fw.x_rec, xv);
                    SampleResult<T>& r = results[static_cast<size_t>(i)];
                    r.mse = static_cast<double>(tape.value(loss)[0]);
                    GradientMap<T> gm = tape.backward(loss);
                    r.grads.reserve(mv.flat.size());
                    for (Var pv : mv.flat) r.grads.push_back(gm.at(pv));
                }
            });

            // fixed-order reduction keeps training bit-deterministic
            std::vector<Tensor<T>> grads;
            grads.reserve(params.size());
            for (size_t p = 0; p < params.size(); ++p)
                grads.push_back(Tensor<T>::zeros(params[p]->shape()));
            const T inv_b = static_cast<T>(1.0 / static_cast<double>(bsz));
            for (int64_t i = 0; i < bsz; ++i) {
                const SampleResult<T>& r = results[static_cast<size_t>(i)];
                for (size_t p = 0; p < params.size(); ++p) {
                    const Tensor<T>& g = r.grads[p];
                    Tensor<T>& acc = grads[p];
                    for (int64_t j = 0, e = g.numel(); j < e; ++j) acc[j] += inv_b * g[j];
                }
            }

            // orthogonality penalty: one extra tiny tape per step
            double orth_value = 0;
            if (cfg.gamma > 0.0) {
                Tape<T> ot;
                Var phi = ot.leaf(model.sampling.phi, true);
                Var ol = orth_loss(ot, phi);
                orth_value = static_cast<double>(ot.value(ol)[0]);
                GradientMap<T> ogm = ot.backward(ol);
                const Tensor<T>& og = ogm.at(phi);
                Tensor<T>& acc = grads[phi_index];
                const T g = static_cast<T>(cfg.gamma);
                for (int64_t j = 0, e = og.numel(); j < e; ++j) acc[j] += g * og[j];
            } else {
                orth_value = static_cast<double>(orth_loss_value(model.sampling));
            }

            double mean_mse = 0;
            for (const auto& r : results) mean_mse += r.mse;
            mean_mse /= static_cast<double>(bsz);
            const double total = mean_mse + cfg.gamma * orth_value;
            if (!std::isfinite(total))
                throw std::runtime_error("train: non-finite loss at epoch " +
                                         std::to_string(epoch) + ", step " + std::to_string(step));

            const double epoch_f =
                static_cast<double>(epoch) +
                static_cast<double>(step + 1) / static_cast<double>(steps_per_epoch);
            last_lr = lr_at(epoch_f, cfg);
            adam_step(params, grads, adam, last_lr);

            sum_total += total;
            sum_mse += mean_mse;
            sum_orth += orth_value;
        }

        EpochLog log;
        log.epoch = epoch;
        log.mean_total = sum_total / static_cast<double>(steps_per_epoch);
        log.mean_mse = sum_mse / static_cast<double>(steps_per_epoch);
        log.mean_orth = sum_orth / static_cast<double>(steps_per_epoch);
        log.lr = last_lr;
        result.log.push_back(log);
        if (on_epoch) on_epoch(log);

        if (!cfg.checkpoint_path.empty() && cfg.checkpoint_every > 0 &&
            (epoch + 1) % cfg.checkpoint_every == 0 && epoch + 1 < cfg.epochs) {
            save_checkpoint(cfg.checkpoint_path + ".epoch" + std::to_string(epoch + 1), model);
        }
    }

    result.final_orth = static_cast<double>(orth_loss_value(model.sampling));
    if (!cfg.checkpoint_path.empty()) save_checkpoint(cfg.checkpoint_path, model);
    if (!cfg.log_csv_path.empty()) write_train_log_csv(cfg.log_csv_path, result.log);
    return result;
}

void write_train_log_csv(const std::string& path, const std::vector<EpochLog>& log) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("train log: cannot open '" + path + "' for writing");
    os << "epoch,mean_total_loss,mean_mse,mean_orth,lr\n";
    os.precision(12);
    for (const auto& e : log)
        os << e.epoch << "," << e.mean_total << "," << e.mean_mse << "," << e.mean_orth << ","
           << e.lr << "\n";
}

#define FSCS_INSTANTIATE_TRAIN(T)                                                            \
    template void adam_step<T>(const std::vector<Tensor<T>*>&, const std::vector<Tensor<T>>&, \
                               AdamState<T>&, double);                                       \
    template PatchDataset<T> crop_patches<T>(const std::vector<Tensor<T>>&, int64_t, int64_t, \
                                             int64_t, uint64_t);                             \
    template Tensor<T> augment<T>(const Tensor<T>&, int);                                    \
    template Var total_loss<T>(Tape<T>&, Var, Var, Var, double);                             \
    template TrainResult train<T>(Model<T>&, const PatchDataset<T>&, const TrainConfig&,     \
                                  const EpochCallback&);

FSCS_INSTANTIATE_TRAIN(float)
FSCS_INSTANTIATE_TRAIN(double)
#undef FSCS_INSTANTIATE_TRAIN

}  // namespace fscs
