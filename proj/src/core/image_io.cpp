#include "core/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>

namespace fscs {

namespace {

uint8_t to_byte(float v) {
    float c = std::min(1.0f, std::max(0.0f, v));
    return static_cast<uint8_t>(std::lround(c * 255.0f));
}

int pgm_next_value(std::istream& is) {
    // skips whitespace and '#' comments between header tokens
    int c;
    while ((c = is.get()) != EOF) {
        if (c == '#') {
            while ((c = is.get()) != EOF && c != '\n') {
            }
        } else if (!std::isspace(c)) {
            is.unget();
            break;
        }
    }
    int v;
    if (!(is >> v)) throw std::runtime_error("pgm: malformed header");
    return v;
}

Image read_pgm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open '" + path + "'");
    char m0 = 0, m1 = 0;
    is.get(m0);
    is.get(m1);
    if (m0 != 'P' || m1 != '5')
        throw std::runtime_error("pgm: '" + path + "' is not a binary (P5) PGM");
    const int w = pgm_next_value(is);
    const int h = pgm_next_value(is);
    const int maxval = pgm_next_value(is);
    if (w < 1 || h < 1) throw std::runtime_error("pgm: bad dimensions in '" + path + "'");
    if (maxval < 1 || maxval > 255)
        throw std::runtime_error("pgm: only 8-bit PGM supported, maxval=" + std::to_string(maxval));
    is.get();  // single whitespace after maxval
    std::vector<unsigned char> raw(static_cast<size_t>(w) * static_cast<size_t>(h));
    is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!is) throw std::runtime_error("pgm: truncated pixel data in '" + path + "'");
    Image img;
    img.channels = 1;
    img.planes = Tensor<float>({1, h, w});
    for (size_t i = 0; i < raw.size(); ++i)
        img.planes[static_cast<int64_t>(i)] =
            static_cast<float>(raw[i]) / static_cast<float>(maxval);
    return img;
}

struct FileCloser {
    void operator()(FILE* f) const {
        if (f) std::fclose(f);
    }
};

Image read_png(const std::string& path) {
    std::unique_ptr<FILE, FileCloser> fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw std::runtime_error("cannot open '" + path + "'");
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("png: out of memory");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw std::runtime_error("png: out of memory");
    }
    std::vector<png_bytep> rows;
    std::vector<unsigned char> data;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("png: failed to decode '" + path + "'");
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);

    png_uint_32 w = png_get_image_width(png, info);
    png_uint_32 h = png_get_image_height(png, info);
    int color = png_get_color_type(png, info);
    int depth = png_get_bit_depth(png, info);

    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);

    color = png_get_color_type(png, info);
    const int channels = (color == PNG_COLOR_TYPE_GRAY) ? 1 : 3;
    if (color != PNG_COLOR_TYPE_GRAY && color != PNG_COLOR_TYPE_RGB) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("png: unsupported color type in '" + path + "'");
    }

    data.resize(static_cast<size_t>(w) * h * static_cast<size_t>(channels));
    rows.resize(h);
    for (png_uint_32 y = 0; y < h; ++y)
        rows[y] = data.data() + static_cast<size_t>(y) * w * static_cast<size_t>(channels);
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    Image img;
    img.channels = channels;
    img.planes = Tensor<float>({channels, static_cast<int64_t>(h), static_cast<int64_t>(w)});
    const int64_t hw = static_cast<int64_t>(h) * static_cast<int64_t>(w);
    for (int64_t i = 0; i < hw; ++i)
        for (int c = 0; c < channels; ++c)
            img.planes[c * hw + i] =
                static_cast<float>(data[static_cast<size_t>(i * channels + c)]) / 255.0f;
    return img;
}

void check_gray(const Tensor<float>& gray) {
    if (gray.rank() != 2)
        throw std::invalid_argument("image write: expected a (H,W) image, got " +
                                    shape_str(gray.shape()));
}

}  // namespace

Image read_image(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open '" + path + "'");
    unsigned char magic[8] = {};
    is.read(reinterpret_cast<char*>(magic), 8);
    is.close();
    static const unsigned char png_sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    if (std::memcmp(magic, png_sig, 8) == 0) return read_png(path);
    if (magic[0] == 'P' && magic[1] == '5') return read_pgm(path);
    throw std::runtime_error("'" + path + "': not a PGM (P5) or PNG file");
}

void write_pgm(const std::string& path, const Tensor<float>& gray) {
    check_gray(gray);
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
    os << "P5\n" << gray.dim(1) << " " << gray.dim(0) << "\n255\n";
    std::vector<unsigned char> raw(static_cast<size_t>(gray.numel()));
    for (int64_t i = 0, e = gray.numel(); i < e; ++i) raw[static_cast<size_t>(i)] = to_byte(gray[i]);
    os.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!os) throw std::runtime_error("write to '" + path + "' failed");
}

void write_png_gray(const std::string& path, const Tensor<float>& gray) {
    check_gray(gray);
    std::unique_ptr<FILE, FileCloser> fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw std::runtime_error("cannot open '" + path + "' for writing");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("png: out of memory");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw std::runtime_error("png: out of memory");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("png: failed to encode '" + path + "'");
    }
    const int64_t h = gray.dim(0), w = gray.dim(1);
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
                 PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<unsigned char> row(static_cast<size_t>(w));
    for (int64_t y = 0; y < h; ++y) {
        for (int64_t x = 0; x < w; ++x) row[static_cast<size_t>(x)] = to_byte(gray[y * w + x]);
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

void write_image(const std::string& path, const Tensor<float>& gray) {
    if (path.size() >= 4 && path.substr(path.size() - 4) == ".png")
        write_png_gray(path, gray);
    else
        write_pgm(path, gray);
}

std::vector<std::string> list_image_files(const std::string& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw std::runtime_error("'" + dir + "' is not a directory");
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        std::string ext = entry.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        if (ext == ".pgm" || ext == ".png") files.push_back(entry.path().string());
    }
    std::sort(files.begin(), files.end());
    return files;
}

}  // namespace fscs
