#include "fscs/fscs.h"

#include <cstdlib>
#include <cstring>
#include <memory>
#include <string>
#include <variant>

#include "core/checkpoint.hpp"
#include "core/image_io.hpp"
#include "core/metrics.hpp"
#include "core/model.hpp"
#include "core/pgd.hpp"
#include "core/synth.hpp"
#include "core/train.hpp"
#include "core/verify.hpp"

namespace {

thread_local std::string g_last_error;

fscs_status classify(const std::exception& e, fscs_status fallback) {
    const std::string msg = e.what();
    g_last_error = msg;
    for (const char* kw : {"cannot open", "truncated", "not a ", "failed", "is not a directory",
                           "no readable images", "missing tensor"})
        if (msg.find(kw) != std::string::npos) return FSCS_IO_ERROR;
    for (const char* kw : {"non-finite", "step size", "rank-deficient"})
        if (msg.find(kw) != std::string::npos) return FSCS_NUMERIC_ERROR;
    return fallback;
}

template <typename Fn>
fscs_status guard(Fn&& fn) {
    try {
        fn();
        return FSCS_OK;
    } catch (const std::invalid_argument& e) {
        return classify(e, FSCS_INVALID_ARGUMENT);
    } catch (const std::exception& e) {
        return classify(e, FSCS_ERROR);
    } catch (...) {
        g_last_error = "unknown error";
        return FSCS_ERROR;
    }
}

fscs_status invalid(const std::string& msg) {
    g_last_error = msg;
    return FSCS_INVALID_ARGUMENT;
}

}  // namespace

struct fscs_model {
    std::variant<fscs::Model<float>, fscs::Model<double>> m;

    bool is_double() const { return m.index() == 1; }

    fscs::ModelDesc desc() const {
        return std::visit([](const auto& model) { return model.desc(); }, m);
    }
};

struct fscs_eval_report {
    fscs::EvalReport report;
};

extern "C" {

const char* fscs_version(void) { return "0.1.0"; }

const char* fscs_last_error(void) { return g_last_error.c_str(); }

void fscs_free(void* p) { std::free(p); }

fscs_status fscs_model_create(const fscs_model_desc* desc, fscs_model** out) {
    if (!desc || !out) return invalid("model_create: null argument");
    *out = nullptr;
    return guard([&] {
        fscs::ModelDesc d;
        d.ratio = desc->ratio;
        d.block_side = desc->block_side;
        d.channels = desc->channels;
        d.phases = desc->phases;
        if (desc->mode < 0 || desc->mode > 2)
            throw std::invalid_argument("model_create: bad mode");
        d.variant = static_cast<fscs::Variant>(desc->mode);
        auto handle = std::make_unique<fscs_model>();
        if (desc->precision == FSCS_PRECISION_F64)
            handle->m = fscs::make_model<double>(d, desc->seed);
        else
            handle->m = fscs::make_model<float>(d, desc->seed);
        *out = handle.release();
    });
}

fscs_status fscs_model_load(const char* path, fscs_model** out) {
    if (!path || !out) return invalid("model_load: null argument");
    *out = nullptr;
    return guard([&] {
        auto handle = std::make_unique<fscs_model>();
        handle->m = fscs::load_checkpoint(path);
        *out = handle.release();
    });
}

fscs_status fscs_model_save(const fscs_model* model, const char* path) {
    if (!model || !path) return invalid("model_save: null argument");
    return guard([&] {
        std::visit([&](const auto& m) { fscs::save_checkpoint(path, m); }, model->m);
    });
}

void fscs_model_destroy(fscs_model* model) { delete model; }

fscs_status fscs_model_get_desc(const fscs_model* model, fscs_model_desc* out) {
    if (!model || !out) return invalid("model_get_desc: null argument");
    fscs::ModelDesc d = model->desc();
    out->ratio = d.ratio;
    out->block_side = static_cast<int32_t>(d.block_side);
    out->channels = static_cast<int32_t>(d.channels);
    out->phases = static_cast<int32_t>(d.phases);
    out->mode = static_cast<int32_t>(d.variant);
    out->precision = model->is_double() ? FSCS_PRECISION_F64 : FSCS_PRECISION_F32;
    out->seed = 0;
    return FSCS_OK;
}

uint64_t fscs_model_param_count(const fscs_model* model) {
    if (!model) return 0;
    return std::visit(
        [](const auto& m) { return static_cast<uint64_t>(fscs::param_count(m)); }, model->m);
}

fscs_status fscs_model_reconstruct(const fscs_model* model, const float* image, int32_t h,
                                   int32_t w, float* out_rec, float* out_init) {
    if (!model || !image || !out_rec || h < 1 || w < 1)
        return invalid("model_reconstruct: null argument or empty image");
    return guard([&] {
        fscs::Tensor<float> gray({h, w},
                                 std::vector<float>(image, image + static_cast<size_t>(h) * w));
        if (model->is_double()) {
            const auto& m = std::get<fscs::Model<double>>(model->m);
            auto rec = fscs::reconstruct_image(m, gray.cast<double>());
            for (int64_t i = 0; i < rec.rec.numel(); ++i)
                out_rec[i] = static_cast<float>(rec.rec[i]);
            if (out_init)
                for (int64_t i = 0; i < rec.init.numel(); ++i)
                    out_init[i] = static_cast<float>(rec.init[i]);
        } else {
            const auto& m = std::get<fscs::Model<float>>(model->m);
            auto rec = fscs::reconstruct_image(m, gray);
            std::memcpy(out_rec, rec.rec.data(), sizeof(float) * static_cast<size_t>(h) * w);
            if (out_init)
                std::memcpy(out_init, rec.init.data(),
                            sizeof(float) * static_cast<size_t>(h) * w);
        }
    });
}

fscs_status fscs_pgd_reconstruct(const float* image, int32_t h, int32_t w,
                                 const fscs_pgd_desc* desc, float* out_rec,
                                 double* residual_history, int32_t* out_hist_len) {
    if (!image || !desc || !out_rec || h < 1 || w < 1)
        return invalid("pgd_reconstruct: null argument or empty image");
    return guard([&] {
        auto s = fscs::init_sampling_matrix<double>(desc->block_side, desc->ratio, desc->seed);
        if (desc->orthonormal_rows) fscs::orthonormalize_rows(s);
        fscs::Tensor<double> gray({h, w});
        for (int64_t i = 0; i < gray.numel(); ++i) gray[i] = image[i];
        auto [padded, grid] = fscs::pad_to_block(gray, desc->block_side);
        fscs::Tensor<double> x = padded.reshaped({1, 1, grid.padded_h, grid.padded_w});
        fscs::Tensor<double> y = fscs::sample_value(x, s);

        fscs::PgdConfig cfg;
        cfg.step_size = desc->step_size > 0
                            ? desc->step_size
                            : (desc->orthonormal_rows ? 1.0 : 0.99 / fscs::spectral_norm_sq(s));
        cfg.reg_weight = desc->reg_weight;
        cfg.max_iters = desc->max_iters;
        cfg.tolerance = desc->tolerance;
        cfg.continuation = desc->continuation != 0;
        if (desc->continuation_init > 0) cfg.continuation_init = desc->continuation_init;
        if (desc->continuation_decay > 0) cfg.continuation_decay = desc->continuation_decay;

        fscs::PgdResult res = fscs::pgd_reconstruct(y, s, cfg);
        fscs::Tensor<double> cropped =
            fscs::crop_from_block(res.x.reshaped({grid.padded_h, grid.padded_w}), grid);
        for (int64_t i = 0; i < cropped.numel(); ++i) out_rec[i] = static_cast<float>(cropped[i]);
        if (residual_history) {
            const size_t n = res.residual_history.size();
            std::memcpy(residual_history, res.residual_history.data(), sizeof(double) * n);
            if (out_hist_len) *out_hist_len = static_cast<int32_t>(n);
        } else if (out_hist_len) {
            *out_hist_len = static_cast<int32_t>(res.residual_history.size());
        }
    });
}

}  // extern "C"

namespace {

template <typename T>
void run_training(fscs::Model<T>& model, const fscs_train_desc* desc,
                  fscs_epoch_callback on_epoch, void* user, fscs_train_report* out_report) {
    const auto files = fscs::list_image_files(desc->dataset_dir);
    std::vector<fscs::Tensor<T>> images;
    for (const auto& path : files) {
        fscs::Image img = fscs::read_image(path);
        fscs::Tensor<float> gray =
            img.channels == 3
                ? fscs::rgb_to_y(img.planes)
                : img.planes.reshaped({img.planes.dim(1), img.planes.dim(2)});
        images.push_back(gray.template cast<T>());
    }
    auto ds = fscs::crop_patches(images, desc->patch_size, desc->patch_stride, desc->patch_limit,
                                 desc->seed);
    ds.augment = desc->augment != 0;

    fscs::TrainConfig cfg;
    fscs::ModelDesc md = model.desc();
    cfg.ratio = md.ratio;
    cfg.block_side = md.block_side;
    cfg.channels = md.channels;
    cfg.phases = md.phases;
    cfg.variant = md.variant;
    cfg.batch_size = desc->batch_size;
    cfg.epochs = desc->epochs;
    cfg.base_lr = desc->base_lr;
    cfg.final_lr = desc->final_lr;
    cfg.warmup_epochs = desc->warmup_epochs;
    cfg.gamma = desc->gamma;
    cfg.seed = desc->seed;
    cfg.patch_size = desc->patch_size;
    cfg.patch_stride = desc->patch_stride;
    cfg.patch_limit = desc->patch_limit;
    cfg.augment = desc->augment != 0;
    cfg.checkpoint_every = desc->checkpoint_every;
    if (desc->checkpoint_path) cfg.checkpoint_path = desc->checkpoint_path;
    if (desc->log_csv_path) cfg.log_csv_path = desc->log_csv_path;
    cfg.threads = desc->threads;

    fscs::EpochCallback cb;
    if (on_epoch)
        cb = [on_epoch, user](const fscs::EpochLog& e) {
            on_epoch(user, static_cast<int32_t>(e.epoch), e.mean_total, e.mean_mse, e.mean_orth,
                     e.lr);
        };
    fscs::TrainResult result = fscs::train(model, ds, cfg, cb);
    if (out_report) {
        out_report->epochs_run = static_cast<int32_t>(result.log.size());
        out_report->first_epoch_loss = result.log.front().mean_total;
        out_report->final_epoch_loss = result.log.back().mean_total;
        out_report->initial_orth = result.initial_orth;
        out_report->final_orth = result.final_orth;
    }
}

}  // namespace

extern "C" {

fscs_status fscs_train_run(fscs_model* model, const fscs_train_desc* desc,
                           fscs_epoch_callback on_epoch, void* user,
                           fscs_train_report* out_report) {
    if (!model || !desc || !desc->dataset_dir) return invalid("train_run: null argument");
    return guard([&] {
        if (model->is_double())
            run_training(std::get<fscs::Model<double>>(model->m), desc, on_epoch, user,
                         out_report);
        else
            run_training(std::get<fscs::Model<float>>(model->m), desc, on_epoch, user,
                         out_report);
    });
}

fscs_status fscs_evaluate_dir(const fscs_model* model, const char* dir, int32_t quantize_8bit,
                              fscs_eval_report** out) {
    if (!model || !dir || !out) return invalid("evaluate_dir: null argument");
    *out = nullptr;
    return guard([&] {
        fscs::ReconFn recon;
        if (model->is_double()) {
            const auto& m = std::get<fscs::Model<double>>(model->m);
            recon = [&m](const fscs::Tensor<float>& g) {
                return fscs::reconstruct_image(m, g.cast<double>()).rec.cast<float>();
            };
        } else {
            const auto& m = std::get<fscs::Model<float>>(model->m);
            recon = [&m](const fscs::Tensor<float>& g) {
                return fscs::reconstruct_image(m, g).rec;
            };
        }
        fscs::EvalOptions opts;
        opts.quantize_8bit = quantize_8bit != 0;
        auto handle = std::make_unique<fscs_eval_report>();
        handle->report = fscs::evaluate_dataset(recon, dir, opts);
        *out = handle.release();
    });
}

int32_t fscs_eval_report_count(const fscs_eval_report* report) {
    return report ? static_cast<int32_t>(report->report.entries.size()) : 0;
}

const char* fscs_eval_report_name(const fscs_eval_report* report, int32_t i) {
    if (!report || i < 0 || i >= fscs_eval_report_count(report)) return "";
    return report->report.entries[static_cast<size_t>(i)].name.c_str();
}

double fscs_eval_report_psnr(const fscs_eval_report* report, int32_t i) {
    if (!report || i < 0 || i >= fscs_eval_report_count(report)) return 0;
    return report->report.entries[static_cast<size_t>(i)].psnr_db;
}

double fscs_eval_report_ssim(const fscs_eval_report* report, int32_t i) {
    if (!report || i < 0 || i >= fscs_eval_report_count(report)) return 0;
    return report->report.entries[static_cast<size_t>(i)].ssim;
}

double fscs_eval_report_mean_psnr(const fscs_eval_report* report) {
    return report ? report->report.mean_psnr : 0;
}

double fscs_eval_report_mean_ssim(const fscs_eval_report* report) {
    return report ? report->report.mean_ssim : 0;
}

fscs_status fscs_eval_report_write_csv(const fscs_eval_report* report, const char* path) {
    if (!report || !path) return invalid("eval_report_write_csv: null argument");
    return guard([&] { fscs::write_eval_csv(path, report->report); });
}

void fscs_eval_report_destroy(fscs_eval_report* report) { delete report; }

namespace {

fscs_status metric_guard(const float* a, const float* b, int32_t h, int32_t w, double* out,
                         double (*fn)(const fscs::Tensor<float>&, const fscs::Tensor<float>&)) {
    if (!a || !b || !out || h < 1 || w < 1) return invalid("metric: null argument");
    return guard([&] {
        fscs::Tensor<float> ta({h, w}, std::vector<float>(a, a + static_cast<size_t>(h) * w));
        fscs::Tensor<float> tb({h, w}, std::vector<float>(b, b + static_cast<size_t>(h) * w));
        *out = fn(ta, tb);
    });
}

}  // namespace

fscs_status fscs_psnr(const float* a, const float* b, int32_t h, int32_t w, double* out) {
    return metric_guard(a, b, h, w, out, &fscs::psnr);
}

fscs_status fscs_ssim(const float* a, const float* b, int32_t h, int32_t w, double* out) {
    return metric_guard(a, b, h, w, out, &fscs::ssim);
}

fscs_status fscs_image_read(const char* path, float** out_pixels, int32_t* out_h,
                            int32_t* out_w) {
    if (!path || !out_pixels || !out_h || !out_w) return invalid("image_read: null argument");
    *out_pixels = nullptr;
    return guard([&] {
        fscs::Image img = fscs::read_image(path);
        fscs::Tensor<float> gray =
            img.channels == 3
                ? fscs::rgb_to_y(img.planes)
                : img.planes.reshaped({img.planes.dim(1), img.planes.dim(2)});
        const size_t n = static_cast<size_t>(gray.numel());
        float* buf = static_cast<float*>(std::malloc(n * sizeof(float)));
        if (!buf) throw std::bad_alloc();
        std::memcpy(buf, gray.data(), n * sizeof(float));
        *out_pixels = buf;
        *out_h = static_cast<int32_t>(gray.dim(0));
        *out_w = static_cast<int32_t>(gray.dim(1));
    });
}

fscs_status fscs_image_write(const char* path, const float* pixels, int32_t h, int32_t w) {
    if (!path || !pixels || h < 1 || w < 1) return invalid("image_write: null argument");
    return guard([&] {
        fscs::Tensor<float> gray({h, w},
                                 std::vector<float>(pixels, pixels + static_cast<size_t>(h) * w));
        fscs::write_image(path, gray);
    });
}

fscs_status fscs_generate_dataset(const char* dir, int32_t count, int32_t size, uint64_t seed) {
    if (!dir || count < 1 || size < 2) return invalid("generate_dataset: bad arguments");
    return guard([&] { fscs::write_synth_dataset(dir, count, size, seed); });
}

int32_t fscs_verify_run(const char* fault_injection, fscs_verify_callback on_check, void* user) {
    try {
        auto results = fscs::run_verification(fault_injection ? fault_injection : "");
        int32_t failures = 0;
        for (const auto& r : results) {
            if (on_check) on_check(user, r.name.c_str(), r.pass ? 1 : 0, r.detail.c_str());
            if (!r.pass) ++failures;
        }
        return failures;
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return -1;
    }
}

}  // extern "C"
