#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace strata {

/// RGB image, row-major HWC, channel values in [0, 1].
struct Image {
    int height = 0;
    int width = 0;
    std::vector<float> pixels;

    Image() = default;
    Image(int h, int w, float fill = 0.0F)
        : height(h), width(w), pixels(static_cast<std::size_t>(h) * w * 3, fill) {}

    float& at(int y, int x, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
    float at(int y, int x, int c) const { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }

    bool operator==(const Image&) const = default;
};

/// 8-bit PNG bytes. Values are clamped to [0,1] and rounded to the nearest level.
std::string encode_png(const Image& image);
Image decode_png(const std::string& bytes);

void write_png(const std::filesystem::path& path, const Image& image);
Image read_png(const std::filesystem::path& path);

/// [3,H,W] tensor (any float dtype) to image; values are clamped.
Image image_from_tensor(const torch::Tensor& chw);
torch::Tensor image_to_tensor(const Image& image);

/// Stacks images into an [N,3,H,W] float32 tensor.
torch::Tensor stack_images(const std::vector<Image>& images);
std::vector<Image> unstack_images(const torch::Tensor& nchw);

/// Tiles equally sized images row by row with a background gap.
Image mosaic(const std::vector<Image>& tiles, int columns, int gap = 2, float background = 1.0F);

} // namespace strata
