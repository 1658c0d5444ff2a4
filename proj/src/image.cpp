#include "strata/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace strata {

namespace {

std::uint8_t quantize(float v)
{
    const float c = std::clamp(v, 0.0F, 1.0F);
    return static_cast<std::uint8_t>(std::lround(c * 255.0F));
}

void png_append(png_structp png, png_bytep data, png_size_t length)
{
    auto* out = static_cast<std::string*>(png_get_io_ptr(png));
    out->append(reinterpret_cast<const char*>(data), length);
}

void png_noop_flush(png_structp) {}

struct ReadCursor {
    const std::string* bytes;
    std::size_t offset;
};

void png_consume(png_structp png, png_bytep data, png_size_t length)
{
    auto* cur = static_cast<ReadCursor*>(png_get_io_ptr(png));
    if (cur->offset + length > cur->bytes->size())
        png_error(png, "truncated PNG stream");
    std::memcpy(data, cur->bytes->data() + cur->offset, length);
    cur->offset += length;
}

[[noreturn]] void png_throw(png_structp, png_const_charp msg)
{
    throw std::runtime_error(std::string("libpng: ") + msg);
}

void png_warn(png_structp, png_const_charp) {}

} // namespace

std::string encode_png(const Image& image)
{
    if (image.height <= 0 || image.width <= 0)
        throw std::invalid_argument("cannot encode an empty image");

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_throw, png_warn);
    png_infop info = png_create_info_struct(png);
    std::string out;
    std::vector<std::uint8_t> row(static_cast<std::size_t>(image.width) * 3);
    try {
        png_set_write_fn(png, &out, png_append, png_noop_flush);
        png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height),
                     8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                     PNG_FILTER_TYPE_DEFAULT);
        png_set_compression_level(png, 6);
        png_write_info(png, info);
        for (int y = 0; y < image.height; ++y) {
            for (int x = 0; x < image.width; ++x) {
                for (int c = 0; c < 3; ++c)
                    row[static_cast<std::size_t>(x) * 3 + c] = quantize(image.at(y, x, c));
            }
            png_write_row(png, row.data());
        }
        png_write_end(png, nullptr);
    } catch (...) {
        png_destroy_write_struct(&png, &info);
        throw;
    }
    png_destroy_write_struct(&png, &info);
    return out;
}

Image decode_png(const std::string& bytes)
{
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_throw, png_warn);
    png_infop info = png_create_info_struct(png);
    ReadCursor cursor{&bytes, 0};
    Image image;
    try {
        png_set_read_fn(png, &cursor, png_consume);
        png_read_info(png, info);
        png_set_strip_16(png);
        png_set_strip_alpha(png);
        png_set_palette_to_rgb(png);
        png_set_gray_to_rgb(png);
        png_read_update_info(png, info);
        const int w = static_cast<int>(png_get_image_width(png, info));
        const int h = static_cast<int>(png_get_image_height(png, info));
        if (png_get_channels(png, info) != 3)
            throw std::runtime_error("unsupported PNG channel layout");
        image = Image(h, w);
        std::vector<std::uint8_t> row(static_cast<std::size_t>(w) * 3);
        for (int y = 0; y < h; ++y) {
            png_read_row(png, row.data(), nullptr);
            for (int i = 0; i < w * 3; ++i)
                image.pixels[static_cast<std::size_t>(y) * w * 3 + i] = row[static_cast<std::size_t>(i)] / 255.0F;
        }
    } catch (...) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw;
    }
    png_destroy_read_struct(&png, &info, nullptr);
    return image;
}

void write_png(const std::filesystem::path& path, const Image& image)
{
    std::ofstream f(path, std::ios::binary);
    if (!f)
        throw std::runtime_error("cannot open " + path.string() + " for writing");
    const auto bytes = encode_png(image);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Image read_png(const std::filesystem::path& path)
{
    std::ifstream f(path, std::ios::binary);
    if (!f)
        throw std::runtime_error("cannot open " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return decode_png(ss.str());
}

Image image_from_tensor(const torch::Tensor& chw)
{
    if (chw.dim() != 3 || chw.size(0) != 3)
        throw std::invalid_argument("expected a [3,H,W] tensor");
    auto t = chw.detach().to(torch::kFloat32).clamp(0.0, 1.0).permute({1, 2, 0}).contiguous();
    Image img(static_cast<int>(t.size(0)), static_cast<int>(t.size(1)));
    std::memcpy(img.pixels.data(), t.data_ptr<float>(), img.pixels.size() * sizeof(float));
    return img;
}

torch::Tensor image_to_tensor(const Image& image)
{
    auto t = torch::from_blob(const_cast<float*>(image.pixels.data()), {image.height, image.width, 3},
                              torch::kFloat32);
    return t.permute({2, 0, 1}).clone();
}

torch::Tensor stack_images(const std::vector<Image>& images)
{
    if (images.empty())
        throw std::invalid_argument("no images to stack");
    const int h = images.front().height;
    const int w = images.front().width;
    auto out = torch::empty({static_cast<int64_t>(images.size()), h, w, 3}, torch::kFloat32);
    auto* dst = out.data_ptr<float>();
    const std::size_t plane = static_cast<std::size_t>(h) * w * 3;
    for (std::size_t i = 0; i < images.size(); ++i) {
        if (images[i].height != h || images[i].width != w)
            throw std::invalid_argument("images differ in size");
        std::memcpy(dst + i * plane, images[i].pixels.data(), plane * sizeof(float));
    }
    return out.permute({0, 3, 1, 2}).contiguous();
}

std::vector<Image> unstack_images(const torch::Tensor& nchw)
{
    std::vector<Image> out;
    out.reserve(static_cast<std::size_t>(nchw.size(0)));
    for (int64_t i = 0; i < nchw.size(0); ++i)
        out.push_back(image_from_tensor(nchw[i]));
    return out;
}

Image mosaic(const std::vector<Image>& tiles, int columns, int gap, float background)
{
    if (tiles.empty() || columns <= 0)
        throw std::invalid_argument("mosaic needs tiles and a positive column count");
    const int th = tiles.front().height;
    const int tw = tiles.front().width;
    const int rows = (static_cast<int>(tiles.size()) + columns - 1) / columns;
    Image out(rows * th + (rows + 1) * gap, columns * tw + (columns + 1) * gap, background);
    for (std::size_t i = 0; i < tiles.size(); ++i) {
        const int r = static_cast<int>(i) / columns;
        const int c = static_cast<int>(i) % columns;
        const int oy = gap + r * (th + gap);
        const int ox = gap + c * (tw + gap);
        for (int y = 0; y < th; ++y) {
            for (int x = 0; x < tw; ++x) {
                for (int ch = 0; ch < 3; ++ch)
                    out.at(oy + y, ox + x, ch) = tiles[i].at(y, x, ch);
            }
        }
    }
    return out;
}

} // namespace strata
