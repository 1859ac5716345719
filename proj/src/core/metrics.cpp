#include "core/metrics.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>

#include "core/image_io.hpp"
#include "core/parallel.hpp"

namespace fscs {

namespace {

void check_pair(const Tensor<float>& a, const Tensor<float>& b, const char* op) {
    if (a.rank() != 2 || b.rank() != 2 || !a.same_shape(b))
        throw std::invalid_argument(std::string(op) + ": expected equal-shape (H,W) images, got " +
                                    shape_str(a.shape()) + " and " + shape_str(b.shape()));
}

constexpr int kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;
constexpr double kSsimK1 = 0.01;
constexpr double kSsimK2 = 0.03;

std::vector<double> gaussian_window() {
    std::vector<double> w(kSsimWindow);
    const double c = (kSsimWindow - 1) / 2.0;
    double sum = 0;
    for (int i = 0; i < kSsimWindow; ++i) {
        double d = (i - c) / kSsimSigma;
        w[static_cast<size_t>(i)] = std::exp(-0.5 * d * d);
        sum += w[static_cast<size_t>(i)];
    }
    for (auto& v : w) v /= sum;
    return w;
}

// separable valid-mode Gaussian filter
std::vector<double> filter_valid(const std::vector<double>& img, int64_t h, int64_t w,
                                 const std::vector<double>& win) {
    const int64_t k = static_cast<int64_t>(win.size());
    const int64_t oh = h - k + 1, ow = w - k + 1;
    std::vector<double> tmp(static_cast<size_t>(h * ow));
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < ow; ++x) {
            double acc = 0;
            for (int64_t i = 0; i < k; ++i)
                acc += win[static_cast<size_t>(i)] * img[static_cast<size_t>(y * w + x + i)];
            tmp[static_cast<size_t>(y * ow + x)] = acc;
        }
    std::vector<double> out(static_cast<size_t>(oh * ow));
    for (int64_t y = 0; y < oh; ++y)
        for (int64_t x = 0; x < ow; ++x) {
            double acc = 0;
            for (int64_t i = 0; i < k; ++i)
                acc += win[static_cast<size_t>(i)] * tmp[static_cast<size_t>((y + i) * ow + x)];
            out[static_cast<size_t>(y * ow + x)] = acc;
        }
    return out;
}

}  // namespace

double psnr(const Tensor<float>& a, const Tensor<float>& b) {
    check_pair(a, b, "psnr");
    double acc = 0;
    for (int64_t i = 0, e = a.numel(); i < e; ++i) {
        double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        acc += d * d;
    }
    const double mse = acc / static_cast<double>(a.numel());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

double ssim(const Tensor<float>& a, const Tensor<float>& b) {
    check_pair(a, b, "ssim");
    const int64_t h = a.dim(0), w = a.dim(1);
    if (h < kSsimWindow || w < kSsimWindow)
        throw std::invalid_argument("ssim: image " + shape_str(a.shape()) +
                                    " smaller than the 11x11 window");
    const size_t n = static_cast<size_t>(h * w);
    std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
    for (size_t i = 0; i < n; ++i) {
        x[i] = a[static_cast<int64_t>(i)];
        y[i] = b[static_cast<int64_t>(i)];
        xx[i] = x[i] * x[i];
        yy[i] = y[i] * y[i];
        xy[i] = x[i] * y[i];
    }
    const auto win = gaussian_window();
    auto mu_x = filter_valid(x, h, w, win);
    auto mu_y = filter_valid(y, h, w, win);
    auto m_xx = filter_valid(xx, h, w, win);
    auto m_yy = filter_valid(yy, h, w, win);
    auto m_xy = filter_valid(xy, h, w, win);
    const double c1 = kSsimK1 * kSsimK1, c2 = kSsimK2 * kSsimK2;
    double acc = 0;
    for (size_t i = 0; i < mu_x.size(); ++i) {
        const double mx = mu_x[i], my = mu_y[i];
        const double sx = m_xx[i] - mx * mx;
        const double sy = m_yy[i] - my * my;
        const double sxy = m_xy[i] - mx * my;
        acc += ((2 * mx * my + c1) * (2 * sxy + c2)) /
               ((mx * mx + my * my + c1) * (sx + sy + c2));
    }
    return acc / static_cast<double>(mu_x.size());
}

Tensor<float> rgb_to_y(const Tensor<float>& rgb) {
    if (rgb.rank() != 3 || rgb.dim(0) != 3)
        throw std::invalid_argument("rgb_to_y: expected a (3,H,W) image, got " +
                                    shape_str(rgb.shape()));
    const int64_t h = rgb.dim(1), w = rgb.dim(2), hw = h * w;
    Tensor<float> y({h, w});
    const float* r = rgb.data();
    const float* g = rgb.data() + hw;
    const float* b = rgb.data() + 2 * hw;
    for (int64_t i = 0; i < hw; ++i)
        y[i] = 0.299f * r[i] + 0.587f * g[i] + 0.114f * b[i];
    return y;
}

Tensor<float> quantize_8bit(const Tensor<float>& img) {
    Tensor<float> out(img.shape());
    for (int64_t i = 0, e = img.numel(); i < e; ++i) {
        float v = std::min(1.0f, std::max(0.0f, img[i]));
        out[i] = std::round(v * 255.0f) / 255.0f;
    }
    return out;
}

EvalReport evaluate_dataset(const ReconFn& recon, const std::string& dir,
                            const EvalOptions& opts) {
    const auto files = list_image_files(dir);
    struct Slot {
        bool ok = false;
        EvalEntry entry;
    };
    std::vector<Slot> slots(files.size());
    const int threads = opts.threads > 0 ? opts.threads : worker_count();
    parallel_chunks(static_cast<int64_t>(files.size()), threads, [&](int64_t lo, int64_t hi) {
        for (int64_t i = lo; i < hi; ++i) {
            const std::string& path = files[static_cast<size_t>(i)];
            Tensor<float> gray;
            try {
                Image img = read_image(path);
                gray = img.channels == 3 ? rgb_to_y(img.planes)
                                         : img.planes.reshaped({img.planes.dim(1),
                                                                img.planes.dim(2)});
            } catch (const std::exception& e) {
                std::cerr << "warning: skipping '" << path << "': " << e.what() << "\n";
                continue;
            }
            Tensor<float> rec = recon(gray);
            if (opts.quantize_8bit) {
                gray = quantize_8bit(gray);
                rec = quantize_8bit(rec);
            }
            Slot& s = slots[static_cast<size_t>(i)];
            s.entry.name = path.substr(path.find_last_of('/') + 1);
            s.entry.psnr_db = psnr(gray, rec);
            s.entry.ssim = ssim(gray, rec);
            s.ok = true;
        }
    });
    EvalReport report;
    for (const Slot& s : slots)
        if (s.ok) report.entries.push_back(s.entry);
    if (report.entries.empty())
        throw std::runtime_error("evaluate: no readable images in '" + dir + "'");
    double ps = 0, ss = 0;
    for (const auto& e : report.entries) {
        ps += e.psnr_db;
        ss += e.ssim;
    }
    report.mean_psnr = ps / static_cast<double>(report.entries.size());
    report.mean_ssim = ss / static_cast<double>(report.entries.size());
    return report;
}

void write_eval_csv(const std::string& path, const EvalReport& report) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("eval report: cannot open '" + path + "' for writing");
    os << "name,psnr_db,ssim\n";
    os.precision(10);
    for (const auto& e : report.entries)
        os << e.name << "," << e.psnr_db << "," << e.ssim << "\n";
    os << "mean," << report.mean_psnr << "," << report.mean_ssim << "\n";
}

}  // namespace fscs
