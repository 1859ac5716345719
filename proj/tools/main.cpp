// Command-line front end; all core functionality is reached through the
// shared library's C API (fscs/fscs.h).
#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "fscs/fscs.h"

namespace {

// exit codes: 0 success, 1 verification/runtime failure, 2 usage or config
// error, 3 numerical failure
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;

int exit_code_for(fscs_status s) {
    switch (s) {
        case FSCS_OK: return 0;
        case FSCS_INVALID_ARGUMENT:
        case FSCS_IO_ERROR: return kExitUsage;
        case FSCS_NUMERIC_ERROR: return kExitNumeric;
        default: return kExitFailure;
    }
}

int fail(fscs_status s, const std::string& what) {
    std::cerr << "error: " << what << ": " << fscs_last_error() << "\n";
    return exit_code_for(s);
}

std::string default_out_dir() {
    const char* env = std::getenv("FSCS_OUT_DIR");
    return env && *env ? env : ".";
}

struct ModelFlags {
    double ratio = 0.25;
    int block_side = 32;
    int channels = 16;
    int phases = 16;
    std::string mode = "fsoinet";
    std::string precision = "f32";
    uint64_t seed = 1;
};

void add_model_flags(CLI::App* cmd, ModelFlags& f) {
    cmd->add_option("--ratio", f.ratio, "sampling ratio r in (0,1]");
    cmd->add_option("--block-side", f.block_side, "block side sqrt(N)");
    cmd->add_option("--channels", f.channels, "feature channels C");
    cmd->add_option("--phases", f.phases, "phase count N_k");
    cmd->add_option("--mode", f.mode, "reconstruction variant")
        ->check(CLI::IsMember({"fsoinet", "oinet", "vnet"}));
    cmd->add_option("--precision", f.precision, "compute precision")
        ->check(CLI::IsMember({"f32", "f64"}));
    cmd->add_option("--seed", f.seed, "rng seed");
}

int32_t mode_id(const std::string& m) {
    if (m == "oinet") return FSCS_MODE_OINET;
    if (m == "vnet") return FSCS_MODE_VNET;
    return FSCS_MODE_FSOINET;
}

void attach_config(CLI::App* cmd, std::string& path) {
    cmd->add_option("--config", path, "key=value config file; flags override it");
}

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r");
    size_t e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

// Expands `key=value` lines from the config file into --key=value arguments
// for the given subcommand. Keys already given on the command line keep their
// explicit values; unknown keys are rejected.
std::vector<std::string> expand_config(const CLI::App* cmd, const std::string& path,
                                       const std::vector<std::string>& given) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file '" + path + "'");
    auto explicitly_set = [&given](const std::string& flag) {
        for (const std::string& a : given)
            if (a == flag || a.rfind(flag + "=", 0) == 0) return true;
        return false;
    };
    std::vector<std::string> extra;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key=value");
        std::string key = trim(t.substr(0, eq));
        std::string value = trim(t.substr(eq + 1));
        for (char& c : key)
            if (c == '_') c = '-';
        const std::string flag = "--" + key;
        const CLI::Option* opt = cmd->get_option_no_throw(flag);
        if (!opt || flag == "--config")
            throw ConfigError(path + ":" + std::to_string(lineno) + ": unknown key '" + key +
                              "' for '" + cmd->get_name() + "'");
        if (!explicitly_set(flag)) extra.push_back(flag + "=" + value);
    }
    return extra;
}

// every run logs its fully resolved configuration before doing work
void echo_config(const CLI::App* cmd) {
    std::cout << "# resolved config for '" << cmd->get_name() << "'\n";
    for (const CLI::Option* opt : cmd->get_options()) {
        if (opt->get_name().rfind("--", 0) != 0) continue;
        std::string value = opt->count() ? opt->results().at(0) : opt->get_default_str();
        if (value.empty() && !opt->count()) value = "<unset>";
        std::cout << "#   " << opt->get_name().substr(2) << " = " << value << "\n";
    }
}

struct GrayImage {
    std::vector<float> pixels;
    int32_t h = 0, w = 0;
};

bool load_gray(const std::string& path, GrayImage& out, int& code) {
    float* buf = nullptr;
    fscs_status s = fscs_image_read(path.c_str(), &buf, &out.h, &out.w);
    if (s != FSCS_OK) {
        code = fail(s, "reading '" + path + "'");
        return false;
    }
    out.pixels.assign(buf, buf + static_cast<size_t>(out.h) * out.w);
    fscs_free(buf);
    return true;
}

void quantize_inplace(std::vector<float>& v) {
    for (float& x : v) {
        float c = std::min(1.0f, std::max(0.0f, x));
        x = std::round(c * 255.0f) / 255.0f;
    }
}

std::string stem_of(const std::string& path) {
    return std::filesystem::path(path).stem().string();
}

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(),
                                                  suffix) == 0;
}

int cmd_train(CLI::App* cmd, const ModelFlags& mf, const std::string& dataset,
              const fscs_train_desc& base, const std::string& out_path,
              const std::string& log_path) {
    echo_config(cmd);

    fscs_model_desc md{};
    md.ratio = mf.ratio;
    md.block_side = mf.block_side;
    md.channels = mf.channels;
    md.phases = mf.phases;
    md.mode = mode_id(mf.mode);
    md.precision = mf.precision == "f64" ? FSCS_PRECISION_F64 : FSCS_PRECISION_F32;
    md.seed = mf.seed;

    fscs_model* model = nullptr;
    fscs_status s = fscs_model_create(&md, &model);
    if (s != FSCS_OK) return fail(s, "creating model");

    fscs_train_desc td = base;
    td.dataset_dir = dataset.c_str();
    td.seed = mf.seed;
    td.checkpoint_path = out_path.c_str();
    td.log_csv_path = log_path.empty() ? nullptr : log_path.c_str();

    std::cout << "training " << mf.mode << " model: ratio " << mf.ratio << ", C " << mf.channels
              << ", phases " << mf.phases << ", " << fscs_model_param_count(model)
              << " parameters\n";
    fscs_train_report report{};
    s = fscs_train_run(
        model, &td,
        [](void*, int32_t epoch, double loss, double mse, double orth, double lr) {
            std::printf("epoch %3d  loss %.6e  mse %.6e  orth %.6e  lr %.3e\n", epoch, loss, mse,
                        orth, lr);
            std::fflush(stdout);
        },
        nullptr, &report);
    if (s != FSCS_OK) {
        fscs_model_destroy(model);
        return fail(s, "training");
    }
    std::cout << "done: first-epoch loss " << report.first_epoch_loss << ", final "
              << report.final_epoch_loss << ", orth " << report.initial_orth << " -> "
              << report.final_orth << "\n";
    std::cout << "checkpoint written to " << out_path << "\n";
    fscs_model_destroy(model);
    return 0;
}

int cmd_reconstruct(CLI::App* cmd, const std::string& checkpoint,
                    const std::vector<std::string>& inputs, const std::string& out_dir,
                    bool emit_init, bool quantize, double expect_ratio) {
    echo_config(cmd);
    fscs_model* model = nullptr;
    fscs_status s = fscs_model_load(checkpoint.c_str(), &model);
    if (s != FSCS_OK) return fail(s, "loading checkpoint");

    fscs_model_desc md{};
    fscs_model_get_desc(model, &md);
    if (expect_ratio > 0 && std::abs(md.ratio - expect_ratio) > 1e-6) {
        std::cerr << "error: checkpoint ratio " << md.ratio << " does not match requested ratio "
                  << expect_ratio << "\n";
        fscs_model_destroy(model);
        return kExitUsage;
    }
    std::filesystem::create_directories(out_dir);

    for (const std::string& path : inputs) {
        GrayImage img;
        int code = 0;
        if (!load_gray(path, img, code)) {
            fscs_model_destroy(model);
            return code;
        }
        std::vector<float> rec(img.pixels.size()), init(img.pixels.size());
        s = fscs_model_reconstruct(model, img.pixels.data(), img.h, img.w, rec.data(),
                                   init.data());
        if (s != FSCS_OK) {
            fscs_model_destroy(model);
            return fail(s, "reconstructing '" + path + "'");
        }
        const std::string ext = ends_with(path, ".png") ? ".png" : ".pgm";
        const std::string rec_path = out_dir + "/" + stem_of(path) + "_rec" + ext;
        fscs_image_write(rec_path.c_str(), rec.data(), img.h, img.w);
        if (emit_init) {
            const std::string init_path = out_dir + "/" + stem_of(path) + "_init" + ext;
            fscs_image_write(init_path.c_str(), init.data(), img.h, img.w);
        }
        std::vector<float> ref = img.pixels;
        if (quantize) {
            quantize_inplace(ref);
            quantize_inplace(rec);
        }
        double p = 0, ss = 0;
        fscs_psnr(ref.data(), rec.data(), img.h, img.w, &p);
        fscs_ssim(ref.data(), rec.data(), img.h, img.w, &ss);
        std::printf("%-30s %dx%d  psnr %6.2f dB  ssim %.4f  -> %s\n", path.c_str(), img.w, img.h,
                    p, ss, rec_path.c_str());
    }
    fscs_model_destroy(model);
    return 0;
}

int cmd_pgd(CLI::App* cmd, const std::string& input, const fscs_pgd_desc& desc,
            const std::string& out_path, const std::string& csv_path) {
    echo_config(cmd);
    GrayImage img;
    int code = 0;
    if (!load_gray(input, img, code)) return code;

    std::vector<float> rec(img.pixels.size());
    std::vector<double> hist(static_cast<size_t>(desc.max_iters) + 1);
    int32_t hist_len = 0;
    fscs_status s = fscs_pgd_reconstruct(img.pixels.data(), img.h, img.w, &desc, rec.data(),
                                         hist.data(), &hist_len);
    if (s != FSCS_OK) return fail(s, "pgd reconstruction");

    fscs_image_write(out_path.c_str(), rec.data(), img.h, img.w);
    double p = 0, ss = 0;
    fscs_psnr(img.pixels.data(), rec.data(), img.h, img.w, &p);
    fscs_ssim(img.pixels.data(), rec.data(), img.h, img.w, &ss);
    std::printf("pgd: %d iterations, final residual %.3e, psnr %6.2f dB, ssim %.4f -> %s\n",
                hist_len - 1, hist[static_cast<size_t>(hist_len - 1)], p, ss, out_path.c_str());
    if (!csv_path.empty()) {
        FILE* f = std::fopen(csv_path.c_str(), "w");
        if (!f) {
            std::cerr << "error: cannot write '" << csv_path << "'\n";
            return kExitUsage;
        }
        std::fprintf(f, "iteration,residual\n");
        for (int32_t i = 0; i < hist_len; ++i)
            std::fprintf(f, "%d,%.12e\n", i, hist[static_cast<size_t>(i)]);
        std::fclose(f);
        std::cout << "residual history written to " << csv_path << "\n";
    }
    return 0;
}

int cmd_eval(CLI::App* cmd, const std::string& checkpoint, const std::string& dataset,
             bool quantize, const std::string& csv_path) {
    echo_config(cmd);
    fscs_model* model = nullptr;
    fscs_status s = fscs_model_load(checkpoint.c_str(), &model);
    if (s != FSCS_OK) return fail(s, "loading checkpoint");

    fscs_eval_report* report = nullptr;
    s = fscs_evaluate_dir(model, dataset.c_str(), quantize ? 1 : 0, &report);
    if (s != FSCS_OK) {
        fscs_model_destroy(model);
        return fail(s, "evaluating '" + dataset + "'");
    }
    std::printf("%-30s %10s %8s\n", "image", "psnr(dB)", "ssim");
    for (int32_t i = 0; i < fscs_eval_report_count(report); ++i)
        std::printf("%-30s %10.3f %8.4f\n", fscs_eval_report_name(report, i),
                    fscs_eval_report_psnr(report, i), fscs_eval_report_ssim(report, i));
    std::printf("%-30s %10.3f %8.4f\n", "mean", fscs_eval_report_mean_psnr(report),
                fscs_eval_report_mean_ssim(report));
    if (!csv_path.empty()) {
        s = fscs_eval_report_write_csv(report, csv_path.c_str());
        if (s != FSCS_OK) {
            fscs_eval_report_destroy(report);
            fscs_model_destroy(model);
            return fail(s, "writing report");
        }
        std::cout << "report written to " << csv_path << "\n";
    }
    fscs_eval_report_destroy(report);
    fscs_model_destroy(model);
    return 0;
}

int cmd_verify(CLI::App* cmd, const std::string& fault) {
    echo_config(cmd);
    struct Counter {
        int total = 0;
    } counter;
    int32_t failures = fscs_verify_run(
        fault.empty() ? nullptr : fault.c_str(),
        [](void* user, const char* name, int32_t passed, const char* detail) {
            auto* c = static_cast<Counter*>(user);
            c->total += 1;
            std::printf("[%s] %-42s %s\n", passed ? "PASS" : "FAIL", name, detail);
        },
        &counter);
    if (failures < 0) {
        std::cerr << "error: verification could not run: " << fscs_last_error() << "\n";
        return kExitFailure;
    }
    std::printf("%d/%d checks passed\n", counter.total - failures, counter.total);
    return failures == 0 ? 0 : kExitFailure;
}

int cmd_gen_data(CLI::App* cmd, const std::string& dir, int count, int size, uint64_t seed) {
    echo_config(cmd);
    fscs_status s = fscs_generate_dataset(dir.c_str(), count, size, seed);
    if (s != FSCS_OK) return fail(s, "generating dataset");
    std::cout << "wrote " << count << " " << size << "x" << size << " images to " << dir << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"block compressive sensing toolkit (version " +
                 std::string(fscs_version()) + ")"};
    app.require_subcommand(1);
    std::string config_path;

    // train
    auto* train = app.add_subcommand("train", "train a reconstruction model");
    attach_config(train, config_path);
    ModelFlags train_mf;
    add_model_flags(train, train_mf);
    std::string dataset, train_out = default_out_dir() + "/model.fsoi";
    std::string train_log = default_out_dir() + "/train_log.csv";
    fscs_train_desc td{};
    td.patch_size = 96;
    td.patch_stride = 96;
    td.patch_limit = 0;
    td.augment = 1;
    td.batch_size = 32;
    td.epochs = 100;
    td.base_lr = 2e-4;
    td.final_lr = 5e-5;
    td.warmup_epochs = 3;
    td.gamma = 0.01;
    td.checkpoint_every = 0;
    td.threads = 0;
    bool no_augment = false;
    train->add_option("--dataset", dataset, "directory of PGM/PNG training images")->required();
    train->add_option("--epochs", td.epochs, "training epochs");
    train->add_option("--batch-size", td.batch_size, "batch size");
    train->add_option("--base-lr", td.base_lr, "peak learning rate");
    train->add_option("--final-lr", td.final_lr, "final learning rate");
    train->add_option("--warmup-epochs", td.warmup_epochs, "linear warm-up length");
    train->add_option("--gamma", td.gamma, "orthogonality penalty weight");
    train->add_option("--patch-size", td.patch_size, "training patch size");
    train->add_option("--patch-stride", td.patch_stride, "patch extraction stride");
    train->add_option("--patch-limit", td.patch_limit, "cap on extracted patches (0 = all)");
    train->add_flag("--no-augment", no_augment, "disable dihedral augmentation");
    train->add_option("--checkpoint-every", td.checkpoint_every,
                      "write intermediate checkpoints every N epochs");
    train->add_option("--threads", td.threads, "worker threads (0 = auto)");
    train->add_option("--out", train_out, "checkpoint output path");
    train->add_option("--log", train_log, "training log CSV path");

    // reconstruct
    auto* rec = app.add_subcommand("reconstruct", "sample and reconstruct images with a model");
    attach_config(rec, config_path);
    std::string rec_ckpt, rec_out_dir = default_out_dir();
    std::vector<std::string> rec_inputs;
    bool emit_init = false, rec_quant = false;
    double rec_ratio = 0;
    rec->add_option("--checkpoint", rec_ckpt, "model checkpoint")->required();
    rec->add_option("inputs", rec_inputs, "input images")->required()->expected(-1);
    rec->add_option("--out-dir", rec_out_dir, "output directory");
    rec->add_flag("--emit-init", emit_init, "also write the initial reconstruction");
    rec->add_flag("--quantize-8bit", rec_quant, "quantize to 8-bit before metrics");
    rec->add_option("--ratio", rec_ratio, "expected sampling ratio (checked against checkpoint)");

    // pgd
    auto* pgd = app.add_subcommand("pgd", "classical proximal-gradient baseline");
    attach_config(pgd, config_path);
    std::string pgd_input, pgd_out = default_out_dir() + "/pgd_rec.pgm", pgd_csv;
    fscs_pgd_desc pd{};
    pd.ratio = 0.5;
    pd.block_side = 32;
    pd.seed = 1;
    pd.orthonormal_rows = 0;
    pd.step_size = 0;  // auto
    pd.reg_weight = 0.0;
    pd.max_iters = 200;
    pd.tolerance = 1e-6;
    pd.continuation = 0;
    pd.continuation_init = 0.1;
    pd.continuation_decay = 0.97;
    bool orth_phi = false, continuation = false;
    pgd->add_option("input", pgd_input, "input image")->required();
    pgd->add_option("--ratio", pd.ratio, "sampling ratio r in (0,1]");
    pgd->add_option("--block-side", pd.block_side, "block side sqrt(N)");
    pgd->add_option("--seed", pd.seed, "sampling matrix seed");
    pgd->add_option("--rho", pd.step_size, "step size (0 = 1/sigma_max^2)");
    pgd->add_option("--lambda", pd.reg_weight, "l1 regularization weight");
    pgd->add_option("--iters", pd.max_iters, "maximum iterations");
    pgd->add_option("--tol", pd.tolerance, "relative-change stopping tolerance");
    pgd->add_flag("--orthonormal-phi", orth_phi, "orthonormalize the sampling matrix rows");
    pgd->add_flag("--continuation", continuation, "geometric lambda continuation");
    pgd->add_option("--cont-init", pd.continuation_init, "continuation start value");
    pgd->add_option("--cont-decay", pd.continuation_decay, "continuation decay per iteration");
    pgd->add_option("--out", pgd_out, "reconstruction output path");
    pgd->add_option("--residual-csv", pgd_csv, "write per-iteration residuals");

    // eval
    auto* ev = app.add_subcommand("eval", "evaluate a model over an image directory");
    attach_config(ev, config_path);
    std::string ev_ckpt, ev_dataset, ev_csv;
    bool ev_quant = false;
    ev->add_option("--checkpoint", ev_ckpt, "model checkpoint")->required();
    ev->add_option("--dataset", ev_dataset, "directory of PGM/PNG images")->required();
    ev->add_flag("--quantize-8bit", ev_quant, "quantize to 8-bit before metrics");
    ev->add_option("--csv", ev_csv, "write the report as CSV");

    // verify
    auto* ver = app.add_subcommand("verify", "run the operator property suites");
    attach_config(ver, config_path);
    std::string fault;
    ver->add_option("--inject-fault", fault, "corrupt a named backward path (testing hook)")
        ->group("");

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "write a procedural grayscale dataset");
    attach_config(gen, config_path);
    std::string gen_dir = default_out_dir() + "/dataset";
    int gen_count = 24, gen_size = 192;
    uint64_t gen_seed = 7;
    gen->add_option("--out-dir", gen_dir, "output directory");
    gen->add_option("--count", gen_count, "number of images");
    gen->add_option("--size", gen_size, "image side length");
    gen->add_option("--seed", gen_seed, "generator seed");

    // config expansion: resolve --config before the real parse so key=value
    // entries become ordinary flags (explicit flags win)
    std::vector<std::string> args(argv + 1, argv + argc);
    CLI::App* subs[] = {train, rec, pgd, ev, ver, gen};
    CLI::App* active = nullptr;
    if (!args.empty())
        for (CLI::App* s : subs)
            if (s->get_name() == args[0]) active = s;
    std::string cfg_file;
    for (size_t i = 1; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size())
            cfg_file = args[i + 1];
        else if (args[i].rfind("--config=", 0) == 0)
            cfg_file = args[i].substr(9);
    }
    if (active && !cfg_file.empty()) {
        try {
            auto extra = expand_config(active, cfg_file, args);
            args.insert(args.end(), extra.begin(), extra.end());
        } catch (const ConfigError& e) {
            std::cerr << "error: " << e.what() << "\n";
            return kExitUsage;
        }
    }
    std::vector<const char*> cargv;
    cargv.push_back(argv[0]);
    for (const std::string& a : args) cargv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(cargv.size()), cargv.data());
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return kExitUsage;
    }

    td.augment = no_augment ? 0 : 1;
    pd.orthonormal_rows = orth_phi ? 1 : 0;
    pd.continuation = continuation ? 1 : 0;

    if (train->parsed()) return cmd_train(train, train_mf, dataset, td, train_out, train_log);
    if (rec->parsed())
        return cmd_reconstruct(rec, rec_ckpt, rec_inputs, rec_out_dir, emit_init, rec_quant,
                               rec_ratio);
    if (pgd->parsed()) return cmd_pgd(pgd, pgd_input, pd, pgd_out, pgd_csv);
    if (ev->parsed()) return cmd_eval(ev, ev_ckpt, ev_dataset, ev_quant, ev_csv);
    if (ver->parsed()) return cmd_verify(ver, fault);
    if (gen->parsed()) return cmd_gen_data(gen, gen_dir, gen_count, gen_size, gen_seed);
    return kExitUsage;
}
