#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <memory>

#include "edof/error.hpp"
#include "edof/image.hpp"

namespace edof
{

namespace
{

struct FileCloser
{
    void operator()(FILE *f) const
    {
        if (f)
            std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path &path, const char *mode)
{
    FilePtr f(std::fopen(path.c_str(), mode));
    if (!f)
        throw IoError("cannot open " + path.string());
    return f;
}

[[noreturn]] void png_error_handler(png_structp, png_const_charp msg) { throw IoError(std::string("png: ") + msg); }
void png_warning_handler(png_structp, png_const_charp) {}

void write_rows(const std::filesystem::path &path, std::size_t width, std::size_t height, int color_type,
                int bit_depth, const std::vector<png_byte> &pixels, std::size_t row_bytes)
{
    auto file = open_file(path, "wb");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_handler, png_warning_handler);
    png_infop info = png_create_info_struct(png);
    try {
        png_init_io(png, file.get());
        png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), bit_depth,
                     color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
        png_write_info(png, info);
        for (std::size_t y = 0; y < height; ++y)
            png_write_row(png, pixels.data() + y * row_bytes);
        png_write_end(png, nullptr);
    } catch (...) {
        png_destroy_write_struct(&png, &info);
        throw;
    }
    png_destroy_write_struct(&png, &info);
}

} // namespace

Image read_png(const std::filesystem::path &path)
{
    auto file = open_file(path, "rb");
    png_byte sig[8];
    if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
        throw IoError(path.string() + ": not a PNG file");

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_handler, png_warning_handler);
    png_infop info = png_create_info_struct(png);
    Image image;
    try {
        png_init_io(png, file.get());
        png_set_sig_bytes(png, 8);
        png_read_info(png, info);

        const int color = png_get_color_type(png, info);
        const int depth = png_get_bit_depth(png, info);
        if (color == PNG_COLOR_TYPE_PALETTE)
            png_set_palette_to_rgb(png);
        if (color == PNG_COLOR_TYPE_GRAY && depth < 8)
            png_set_expand_gray_1_2_4_to_8(png);
        if (color & PNG_COLOR_MASK_ALPHA)
            png_set_strip_alpha(png);
        if (png_get_valid(png, info, PNG_INFO_tRNS))
            png_set_tRNS_to_alpha(png), png_set_strip_alpha(png);
        if (depth == 16)
            png_set_swap(png); // host order
        png_read_update_info(png, info);

        const std::size_t w = png_get_image_width(png, info), h = png_get_image_height(png, info);
        const std::size_t channels = png_get_channels(png, info);
        const int out_depth = png_get_bit_depth(png, info);
        const std::size_t row_bytes = png_get_rowbytes(png, info);
        std::vector<png_byte> pixels(row_bytes * h);
        std::vector<png_bytep> rows(h);
        for (std::size_t y = 0; y < h; ++y)
            rows[y] = pixels.data() + y * row_bytes;
        png_read_image(png, rows.data());

        const std::size_t out_channels = channels >= 3 ? 3 : 1;
        image = Image::zeros(out_channels, h, w);
        const double scale = out_depth == 16 ? 1.0 / 65535.0 : 1.0 / 255.0;
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x)
                for (std::size_t c = 0; c < out_channels; ++c) {
                    const std::size_t idx = x * channels + c;
                    double v;
                    if (out_depth == 16) {
                        std::uint16_t s;
                        std::memcpy(&s, rows[y] + 2 * idx, 2);
                        v = s;
                    } else {
                        v = rows[y][idx];
                    }
                    image.channels[c](y, x) = v * scale;
                }
    } catch (...) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw;
    }
    png_destroy_read_struct(&png, &info, nullptr);
    return image;
}

void write_png(const std::filesystem::path &path, const Image &image, int bit_depth)
{
    image.validate();
    const std::size_t nc = image.channel_count();
    if (nc != 1 && nc != 3)
        throw ShapeError("write_png: image must have 1 or 3 channels");
    if (bit_depth != 8 && bit_depth != 16)
        throw DomainError("write_png: bit depth must be 8 or 16");
    const std::size_t w = image.width(), h = image.height();
    const std::size_t bytes = static_cast<std::size_t>(bit_depth / 8);
    const std::size_t row_bytes = w * nc * bytes;
    std::vector<png_byte> pixels(row_bytes * h);
    const double maxv = bit_depth == 16 ? 65535.0 : 255.0;
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t c = 0; c < nc; ++c) {
                const double v = std::clamp(image.channels[c](y, x), 0.0, 1.0);
                const auto q = static_cast<unsigned>(std::lround(v * maxv));
                png_byte *p = pixels.data() + y * row_bytes + (x * nc + c) * bytes;
                if (bit_depth == 16) {
                    p[0] = static_cast<png_byte>(q >> 8); // PNG stores big-endian
                    p[1] = static_cast<png_byte>(q & 0xff);
                } else {
                    p[0] = static_cast<png_byte>(q);
                }
            }
    write_rows(path, w, h, nc == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, bit_depth, pixels, row_bytes);
}

void write_png_gray16(const std::filesystem::path &path, const RealGrid &grid, double lo, double hi)
{
    if (!(hi > lo))
        throw DomainError("write_png_gray16: empty value range");
    Image img = Image::zeros(1, grid.rows(), grid.cols());
    for (std::size_t i = 0; i < grid.size(); ++i)
        img.channels[0][i] = (grid[i] - lo) / (hi - lo);
    write_png(path, img, 16);
}

} // namespace edof
