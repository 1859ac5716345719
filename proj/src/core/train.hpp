#pragma once

#include <functional>
#include <string>

#include "core/model.hpp"

namespace fscs {

struct TrainConfig {
    double ratio = 0.25;
    int64_t block_side = 32;
    int64_t channels = 16;
    int64_t phases = 16;
    Variant variant = Variant::fsoinet;

    int64_t batch_size = 32;
    int64_t epochs = 100;
    double base_lr = 2e-4;
    double final_lr = 5e-5;
    double warmup_epochs = 3;
    double gamma = 0.01;  // orthogonality penalty weight
    uint64_t seed = 1;

    int64_t patch_size = 96;
    int64_t patch_stride = 96;
    int64_t patch_limit = 0;  // 0 = keep all
    bool augment = true;
    std::string dataset_dir;

    int64_t checkpoint_every = 0;  // epochs; 0 = final checkpoint only
    std::string checkpoint_path;   // empty = do not write
    std::string log_csv_path;      // empty = do not write
    int threads = 0;               // 0 = auto
};

// Linear warm-up from 0 to base_lr over [0, warmup_epochs], then cosine
// annealing from base_lr down to final_lr at `epochs`.
double lr_at(double epoch, const TrainConfig& cfg);

template <typename T>
struct AdamState {
    struct Slot {
        Tensor<T> m, v;
    };
    std::vector<Slot> slots;  // lazily sized on first step
    int64_t step = 0;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

// Standard Adam update with bias correction. grads must cover all params.
template <typename T>
void adam_step(const std::vector<Tensor<T>*>& params, const std::vector<Tensor<T>>& grads,
               AdamState<T>& state, double lr);

template <typename T>
struct PatchDataset {
    int64_t patch_size = 0;
    bool augment = false;
    std::vector<Tensor<T>> patches;  // [ps, ps], values in [0, 1]
};

// Deterministic sliding-window crops; images smaller than the patch are
// skipped with a warning. With limit > 0 a seeded subset of that size is kept.
template <typename T>
PatchDataset<T> crop_patches(const std::vector<Tensor<T>>& images, int64_t patch_size,
                             int64_t stride, int64_t limit, uint64_t seed);

// The 8 dihedral transforms of a square patch: index%4 clockwise quarter
// turns, then a horizontal flip when index >= 4. Index 0 is the identity.
template <typename T>
Tensor<T> augment(const Tensor<T>& patch, int index);

// L = mse(x_rec, x) + gamma * orth(phi)
template <typename T>
Var total_loss(Tape<T>& t, Var x_rec, Var x, Var phi, double gamma);

struct EpochLog {
    int64_t epoch = 0;
    double mean_total = 0, mean_mse = 0, mean_orth = 0;
    double lr = 0;
};

struct TrainResult {
    std::vector<EpochLog> log;
    double initial_orth = 0;
    double final_orth = 0;
};

using EpochCallback = std::function<void(const EpochLog&)>;

// End-to-end optimization of the model on the dataset. Deterministic per
// seed: fixed shuffles, fixed augmentation draws, ordered gradient reduction.
template <typename T>
TrainResult train(Model<T>& model, const PatchDataset<T>& dataset, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

void write_train_log_csv(const std::string& path, const std::vector<EpochLog>& log);

}  // namespace fscs
