#include "crossview/io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <stdexcept>
#include <vector>

namespace crossview {
namespace {

constexpr char kMagic[4] = {'C', 'V', 'L', 'T'};
constexpr std::uint32_t kMaxDim = 1u << 20;

void put_u32le(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32le(std::istream& in, const std::string& path) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4))
        throw std::runtime_error("cvt: truncated header in '" + path + "'");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::string lower_ext(const std::string& path) {
    const std::size_t dot = path.rfind('.');
    if (dot == std::string::npos) return "";
    std::string ext = path.substr(dot);
    for (char& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return ext;
}

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

Raster cvt_read(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cvt: cannot open '" + path + "'");
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("cvt: bad magic in '" + path + "'");
    const std::uint32_t c = get_u32le(in, path);
    const std::uint32_t h = get_u32le(in, path);
    const std::uint32_t w = get_u32le(in, path);
    if (c == 0 || h == 0 || w == 0)
        throw std::runtime_error("cvt: zero dimension in '" + path + "'");
    if (c > kMaxDim || h > kMaxDim || w > kMaxDim ||
        static_cast<std::uint64_t>(c) * h * w > (1ull << 31))
        throw std::runtime_error("cvt: dimensions overflow in '" + path + "'");
    Raster r(static_cast<int>(c), static_cast<int>(h), static_cast<int>(w));
    // float32 little-endian payload; this code assumes a little-endian host,
    // which the build targets.
    static_assert(sizeof(float) == 4);
    if (!in.read(reinterpret_cast<char*>(r.data.data()),
                 static_cast<std::streamsize>(r.size() * 4)))
        throw std::runtime_error("cvt: payload shorter than header dimensions in '" + path + "'");
    return r;
}

void cvt_write(const Raster& r, const std::string& path) {
    if (r.size() == 0) throw std::invalid_argument("cvt: empty raster");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cvt: cannot open '" + path + "' for writing");
    out.write(kMagic, 4);
    put_u32le(out, static_cast<std::uint32_t>(r.channels));
    put_u32le(out, static_cast<std::uint32_t>(r.height));
    put_u32le(out, static_cast<std::uint32_t>(r.width));
    out.write(reinterpret_cast<const char*>(r.data.data()),
              static_cast<std::streamsize>(r.size() * 4));
    if (!out) throw std::runtime_error("cvt: write failed for '" + path + "'");
}

Raster png_read(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw std::runtime_error("png: cannot open '" + path + "'");

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("png: out of memory");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw std::runtime_error("png: out of memory");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("png: failed to decode '" + path + "'");
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);

    const png_byte color = png_get_color_type(png, info);
    const png_byte depth = png_get_bit_depth(png, info);
    if (depth == 16) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("png: 16-bit depth is unsupported ('" + path + "')");
    }
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_read_update_info(png, info);

    const int w = static_cast<int>(png_get_image_width(png, info));
    const int h = static_cast<int>(png_get_image_height(png, info));
    const int ch = png_get_channels(png, info);
    if (ch != 1 && ch != 3 && ch != 4) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("png: unsupported channel count " + std::to_string(ch) +
                                 " in '" + path + "' (expected 1, 3, or 4)");
    }

    std::vector<png_byte> row(static_cast<std::size_t>(w) * ch);
    Raster r(ch, h, w);
    for (int y = 0; y < h; ++y) {
        png_read_row(png, row.data(), nullptr);
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < ch; ++c)
                r.at(c, y, x) = static_cast<float>(row[static_cast<std::size_t>(x) * ch + c]) /
                                255.0f;
    }
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return r;
}

void png_write(const Raster& r, const std::string& path) {
    if (r.channels != 1 && r.channels != 3 && r.channels != 4)
        throw std::invalid_argument("png: raster must have 1, 3, or 4 channels, got " +
                                    std::to_string(r.channels));
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw std::runtime_error("png: cannot open '" + path + "' for writing");

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
    png_init_io(png, fp.get());
    const int color = r.channels == 1   ? PNG_COLOR_TYPE_GRAY
                      : r.channels == 3 ? PNG_COLOR_TYPE_RGB
                                        : PNG_COLOR_TYPE_RGBA;
    png_set_IHDR(png, info, static_cast<png_uint_32>(r.width),
                 static_cast<png_uint_32>(r.height), 8, color, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    std::vector<png_byte> row(static_cast<std::size_t>(r.width) * r.channels);
    for (int y = 0; y < r.height; ++y) {
        for (int x = 0; x < r.width; ++x)
            for (int c = 0; c < r.channels; ++c) {
                const float v = std::min(1.0f, std::max(0.0f, r.at(c, y, x)));
                row[static_cast<std::size_t>(x) * r.channels + c] =
                    static_cast<png_byte>(std::lround(v * 255.0f));
            }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Raster raster_read(const std::string& path) {
    const std::string ext = lower_ext(path);
    if (ext == ".png") return png_read(path);
    if (ext == ".cvt") return cvt_read(path);
    throw std::invalid_argument("raster_read: unsupported extension '" + ext + "' in '" + path +
                                "' (expected .png or .cvt)");
}

void raster_write(const Raster& r, const std::string& path) {
    const std::string ext = lower_ext(path);
    if (ext == ".png") return png_write(r, path);
    if (ext == ".cvt") return cvt_write(r, path);
    throw std::invalid_argument("raster_write: unsupported extension '" + ext + "' in '" + path +
                                "' (expected .png or .cvt)");
}

}  // namespace crossview
