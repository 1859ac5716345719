#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "fscs/fscs.h"

namespace {

struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& name) {
        path = std::filesystem::temp_directory_path() / name;
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
};

fscs_model_desc tiny_desc() {
    fscs_model_desc d{};
    d.ratio = 0.25;
    d.block_side = 8;
    d.channels = 4;
    d.phases = 2;
    d.mode = FSCS_MODE_FSOINET;
    d.precision = FSCS_PRECISION_F32;
    d.seed = 11;
    return d;
}

}  // namespace

TEST_CASE("version and error text are always available") {
    CHECK(std::string(fscs_version()) == "0.1.0");
    CHECK(fscs_last_error() != nullptr);
}

TEST_CASE("model lifecycle through the C surface") {
    fscs_model* model = nullptr;
    fscs_model_desc d = tiny_desc();
    REQUIRE(fscs_model_create(&d, &model) == FSCS_OK);
    REQUIRE(model != nullptr);

    fscs_model_desc got{};
    CHECK(fscs_model_get_desc(model, &got) == FSCS_OK);
    CHECK(got.ratio == doctest::Approx(0.25));
    CHECK(got.block_side == 8);
    CHECK(got.channels == 4);
    CHECK(got.phases == 2);
    CHECK(got.mode == FSCS_MODE_FSOINET);
    CHECK(fscs_model_param_count(model) > 0);

    TempDir dir("fscs_capi_model");
    const std::string p = (dir.path / "m.fsoi").string();
    CHECK(fscs_model_save(model, p.c_str()) == FSCS_OK);

    fscs_model* loaded = nullptr;
    REQUIRE(fscs_model_load(p.c_str(), &loaded) == FSCS_OK);
    CHECK(fscs_model_param_count(loaded) == fscs_model_param_count(model));

    fscs_model_destroy(loaded);
    fscs_model_destroy(model);
}

TEST_CASE("invalid descriptors are rejected with useful errors") {
    fscs_model* model = nullptr;
    fscs_model_desc d = tiny_desc();
    d.ratio = 1.5;
    CHECK(fscs_model_create(&d, &model) == FSCS_INVALID_ARGUMENT);
    CHECK(std::strlen(fscs_last_error()) > 0);
    CHECK(model == nullptr);
    CHECK(fscs_model_create(nullptr, &model) == FSCS_INVALID_ARGUMENT);
    CHECK(fscs_model_load("/nonexistent/x.fsoi", &model) == FSCS_IO_ERROR);
}

TEST_CASE("reconstruct pads arbitrary extents and matches across save/load") {
    fscs_model* model = nullptr;
    fscs_model_desc d = tiny_desc();
    REQUIRE(fscs_model_create(&d, &model) == FSCS_OK);

    const int32_t h = 30, w = 26;  // forces padding to 32x32
    std::vector<float> img(static_cast<size_t>(h) * w);
    for (size_t i = 0; i < img.size(); ++i)
        img[i] = 0.5f + 0.4f * std::sin(static_cast<float>(i) * 0.05f);
    std::vector<float> rec(img.size()), init(img.size());
    REQUIRE(fscs_model_reconstruct(model, img.data(), h, w, rec.data(), init.data()) == FSCS_OK);
    // fresh model: zero-initialized residual head means rec == init bit-exactly
    CHECK(std::memcmp(rec.data(), init.data(), sizeof(float) * rec.size()) == 0);

    TempDir dir("fscs_capi_rec");
    const std::string p = (dir.path / "m.fsoi").string();
    REQUIRE(fscs_model_save(model, p.c_str()) == FSCS_OK);
    fscs_model* loaded = nullptr;
    REQUIRE(fscs_model_load(p.c_str(), &loaded) == FSCS_OK);
    std::vector<float> rec2(img.size());
    REQUIRE(fscs_model_reconstruct(loaded, img.data(), h, w, rec2.data(), nullptr) == FSCS_OK);
    CHECK(std::memcmp(rec.data(), rec2.data(), sizeof(float) * rec.size()) == 0);

    fscs_model_destroy(loaded);
    fscs_model_destroy(model);
}

TEST_CASE("metrics through the C surface") {
    const int32_t h = 16, w = 16;
    std::vector<float> a(256), b(256);
    for (int i = 0; i < 256; ++i) {
        a[static_cast<size_t>(i)] = static_cast<float>(i % 17) / 17.0f;
        b[static_cast<size_t>(i)] = a[static_cast<size_t>(i)];
    }
    double p = 0, s = 0;
    CHECK(fscs_psnr(a.data(), b.data(), h, w, &p) == FSCS_OK);
    CHECK(std::isinf(p));
    CHECK(fscs_ssim(a.data(), b.data(), h, w, &s) == FSCS_OK);
    CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
    b[0] += 0.25f;
    CHECK(fscs_psnr(a.data(), b.data(), h, w, &p) == FSCS_OK);
    CHECK(std::isfinite(p));
    CHECK(fscs_ssim(nullptr, b.data(), h, w, &s) == FSCS_INVALID_ARGUMENT);
}

TEST_CASE("image IO and dataset generation through the C surface") {
    TempDir dir("fscs_capi_img");
    REQUIRE(fscs_generate_dataset((dir.path / "data").string().c_str(), 3, 40, 5) == FSCS_OK);

    float* pixels = nullptr;
    int32_t h = 0, w = 0;
    REQUIRE(fscs_image_read((dir.path / "data" / "img000.pgm").string().c_str(), &pixels, &h,
                            &w) == FSCS_OK);
    CHECK(h == 40);
    CHECK(w == 40);
    const std::string copy = (dir.path / "copy.png").string();
    CHECK(fscs_image_write(copy.c_str(), pixels, h, w) == FSCS_OK);
    float* again = nullptr;
    int32_t h2 = 0, w2 = 0;
    REQUIRE(fscs_image_read(copy.c_str(), &again, &h2, &w2) == FSCS_OK);
    CHECK(h2 == 40);
    CHECK(std::memcmp(pixels, again, sizeof(float) * 1600) == 0);  // both 8-bit quantized
    fscs_free(pixels);
    fscs_free(again);

    CHECK(fscs_image_read((dir.path / "none.pgm").string().c_str(), &pixels, &h, &w) ==
          FSCS_IO_ERROR);
}

TEST_CASE("pgd through the C surface recovers an orthonormal-row sample well") {
    TempDir dir("fscs_capi_pgd");
    REQUIRE(fscs_generate_dataset((dir.path / "data").string().c_str(), 1, 32, 9) == FSCS_OK);
    float* img = nullptr;
    int32_t h = 0, w = 0;
    REQUIRE(fscs_image_read((dir.path / "data" / "img000.pgm").string().c_str(), &img, &h, &w) ==
            FSCS_OK);

    fscs_pgd_desc pd{};
    pd.ratio = 0.5;
    pd.block_side = 16;
    pd.seed = 3;
    pd.orthonormal_rows = 1;
    pd.step_size = 0;  // auto
    pd.reg_weight = 0.002;
    pd.max_iters = 150;
    pd.tolerance = 0;
    pd.continuation = 1;
    pd.continuation_init = 0.05;
    pd.continuation_decay = 0.95;
    std::vector<float> rec(static_cast<size_t>(h) * w);
    std::vector<double> hist(151);
    int32_t hist_len = 0;
    REQUIRE(fscs_pgd_reconstruct(img, h, w, &pd, rec.data(), hist.data(), &hist_len) == FSCS_OK);
    CHECK(hist_len > 1);
    double p = 0;
    CHECK(fscs_psnr(img, rec.data(), h, w, &p) == FSCS_OK);
    CHECK(p > 20.0);
    fscs_free(img);

    // invalid ratio propagates as INVALID_ARGUMENT
    pd.ratio = 2.0;
    std::vector<float> dummy(static_cast<size_t>(h) * w, 0.5f);
    CHECK(fscs_pgd_reconstruct(dummy.data(), h, w, &pd, rec.data(), nullptr, nullptr) ==
          FSCS_INVALID_ARGUMENT);
}

TEST_CASE("training and evaluation through the C surface") {
    TempDir dir("fscs_capi_train");
    REQUIRE(fscs_generate_dataset((dir.path / "data").string().c_str(), 4, 64, 21) == FSCS_OK);

    fscs_model* model = nullptr;
    fscs_model_desc d = tiny_desc();
    REQUIRE(fscs_model_create(&d, &model) == FSCS_OK);

    fscs_train_desc td{};
    const std::string data_dir = (dir.path / "data").string();
    const std::string ckpt = (dir.path / "model.fsoi").string();
    const std::string log = (dir.path / "log.csv").string();
    td.dataset_dir = data_dir.c_str();
    td.patch_size = 32;
    td.patch_stride = 32;
    td.patch_limit = 8;
    td.augment = 1;
    td.batch_size = 4;
    td.epochs = 3;
    td.base_lr = 1e-3;
    td.final_lr = 1e-4;
    td.warmup_epochs = 1;
    td.gamma = 0.01;
    td.seed = 5;
    td.checkpoint_path = ckpt.c_str();
    td.log_csv_path = log.c_str();

    int epochs_seen = 0;
    fscs_train_report report{};
    REQUIRE(fscs_train_run(
                model, &td,
                [](void* user, int32_t, double, double, double, double) {
                    ++*static_cast<int*>(user);
                },
                &epochs_seen, &report) == FSCS_OK);
    CHECK(epochs_seen == 3);
    CHECK(report.epochs_run == 3);
    CHECK(std::isfinite(report.final_epoch_loss));
    CHECK(std::filesystem::exists(ckpt));
    CHECK(std::filesystem::exists(log));

    fscs_eval_report* rep = nullptr;
    REQUIRE(fscs_evaluate_dir(model, data_dir.c_str(), 0, &rep) == FSCS_OK);
    REQUIRE(fscs_eval_report_count(rep) == 4);
    CHECK(std::string(fscs_eval_report_name(rep, 0)) == "img000.pgm");
    CHECK(std::isfinite(fscs_eval_report_mean_ssim(rep)));
    const std::string csv = (dir.path / "eval.csv").string();
    CHECK(fscs_eval_report_write_csv(rep, csv.c_str()) == FSCS_OK);
    CHECK(std::filesystem::exists(csv));
    fscs_eval_report_destroy(rep);

    // missing dataset directory is an IO error
    CHECK(fscs_evaluate_dir(model, (dir.path / "nope").string().c_str(), 0, &rep) ==
          FSCS_IO_ERROR);
    fscs_model_destroy(model);
}

TEST_CASE("verification through the C surface, including the fault hook") {
    struct Tally {
        int total = 0;
        std::string first_fail;
    } tally;
    auto cb = [](void* user, const char* name, int32_t passed, const char*) {
        auto* t = static_cast<Tally*>(user);
        t->total += 1;
        if (!passed && t->first_fail.empty()) t->first_fail = name;
    };
    int32_t failures = fscs_verify_run(nullptr, cb, &tally);
    CHECK(failures == 0);
    CHECK(tally.total > 15);

    Tally tally2;
    failures = fscs_verify_run("conv2d-backward", cb, &tally2);
    CHECK(failures == 1);
    CHECK(tally2.first_fail == "gradcheck.conv2d");
}
