#include "dufold/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <vector>

#include "dufold/errors.hpp"

namespace dufold {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

Tensor load_png(const std::string& file) {
    FilePtr fp(std::fopen(file.c_str(), "rb"));
    if (!fp) throw DataError("load_png: cannot open " + file);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw DataError("load_png: out of memory");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw DataError("load_png: out of memory");
    }
    std::vector<png_bytep> rows;
    std::vector<unsigned char> buffer;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw DataError("load_png: failed decoding " + file);
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);

    const png_uint_32 W = png_get_image_width(png, info);
    const png_uint_32 H = png_get_image_height(png, info);
    const int color = png_get_color_type(png, info);
    int depth = png_get_bit_depth(png, info);

    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);
    depth = png_get_bit_depth(png, info);
    const int ch = png_get_channels(png, info);
    if (ch != 1 && ch != 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw DataError("load_png: " + file + " has unsupported channel count " + std::to_string(ch));
    }

    const std::size_t rowbytes = png_get_rowbytes(png, info);
    buffer.assign(rowbytes * H, 0);
    rows.resize(H);
    for (png_uint_32 y = 0; y < H; ++y) rows[y] = buffer.data() + y * rowbytes;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    const double scale = depth == 16 ? 65535.0 : 255.0;
    Tensor img = Tensor::zeros({static_cast<std::size_t>(ch), H, W});
    for (png_uint_32 y = 0; y < H; ++y) {
        const unsigned char* row = buffer.data() + y * rowbytes;
        for (png_uint_32 x = 0; x < W; ++x)
            for (int c = 0; c < ch; ++c) {
                double v;
                if (depth == 16) {
                    const std::size_t o = (static_cast<std::size_t>(x) * ch + c) * 2;
                    v = static_cast<double>((row[o] << 8) | row[o + 1]);  // PNG is big-endian
                } else {
                    v = static_cast<double>(row[static_cast<std::size_t>(x) * ch + c]);
                }
                img[(static_cast<std::size_t>(c) * H + y) * W + x] = v / scale;
            }
    }
    return img;
}

void save_png(const std::string& file, const Tensor& image, int bits) {
    const Shape& s = image.shape();
    if (image.is_complex() || (s.size() != 2 && s.size() != 3))
        throw ArgumentError("save_png: expected a real (C, H, W) or (H, W) tensor");
    if (bits != 8 && bits != 16) throw ArgumentError("save_png: bit depth must be 8 or 16");
    const std::size_t ch = s.size() == 3 ? s[0] : 1;
    const std::size_t H = s[s.size() - 2], W = s.back();
    if (ch != 1 && ch != 3) throw ArgumentError("save_png: channel count must be 1 or 3");

    FilePtr fp(std::fopen(file.c_str(), "wb"));
    if (!fp) throw DataError("save_png: cannot open " + file + " for writing");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw DataError("save_png: out of memory");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw DataError("save_png: out of memory");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw DataError("save_png: failed writing " + file);
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(W), static_cast<png_uint_32>(H), bits,
                 ch == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    const double scale = bits == 16 ? 65535.0 : 255.0;
    std::vector<unsigned char> row(W * ch * (bits / 8));
    for (std::size_t y = 0; y < H; ++y) {
        for (std::size_t x = 0; x < W; ++x)
            for (std::size_t c = 0; c < ch; ++c) {
                const double v = std::clamp(image[(c * H + y) * W + x], 0.0, 1.0);
                const auto q = static_cast<std::uint32_t>(std::lround(v * scale));
                if (bits == 16) {  // PNG stores big-endian samples
                    row[(x * ch + c) * 2] = static_cast<unsigned char>(q >> 8);
                    row[(x * ch + c) * 2 + 1] = static_cast<unsigned char>(q & 0xFF);
                } else {
                    row[x * ch + c] = static_cast<unsigned char>(q);
                }
            }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

ImageDataset load_images(const std::string& path) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(path)) throw DataError("load_images: " + path + " is not a directory");
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(path)) {
        if (!e.is_regular_file()) continue;
        std::string ext = e.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
        if (ext == ".png") files.push_back(e.path().string());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw DataError("load_images: no PNG files in " + path);

    ImageDataset ds;
    ds.provenance = "folder:" + path;
    std::string offending;
    for (const auto& f : files) {
        Tensor img = load_png(f);
        if (!ds.items.empty() && !shape_eq(img.shape(), ds.items.front().shape()))
            offending += (offending.empty() ? "" : ", ") + f;
        else
            ds.items.push_back(std::move(img));
    }
    if (!offending.empty())
        throw DataError("load_images: mixed dimensions in " + path + ": " + offending);
    ds.channels = ds.items.front().shape()[0];
    return ds;
}

}  // namespace dufold
