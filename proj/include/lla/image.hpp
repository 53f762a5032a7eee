#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "lla/tensor.hpp"

namespace lla {

/// 8-bit image, interleaved channels (row-major, HWC).
struct Image {
    std::size_t channels = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> pixels;

    Image() = default;
    Image(std::size_t c, std::size_t h, std::size_t w, std::uint8_t fill = 0)
        : channels(c), height(h), width(w), pixels(c * h * w, fill) {}

    std::uint8_t& at(std::size_t c, std::size_t y, std::size_t x) { return pixels[(y * width + x) * channels + c]; }
    std::uint8_t at(std::size_t c, std::size_t y, std::size_t x) const {
        return pixels[(y * width + x) * channels + c];
    }
    bool operator==(const Image&) const = default;
};

/// Binary PGM (P5) for 1 channel, PPM (P6) for 3; maxval 255 only.
Image decode_pnm(std::string_view bytes);
std::string encode_pnm(const Image& img);
Image load_image(const std::filesystem::path& path);
void save_image(const std::filesystem::path& path, const Image& img);

Image crop(const Image& img, std::size_t top, std::size_t left, std::size_t height, std::size_t width);
Image flip_horizontal(const Image& img);
/// Mirror padding without repeating the edge pixel; pad must be < each dim.
Image reflect_pad(const Image& img, std::size_t pad);
Image center_crop(const Image& img, std::size_t size);

/// Random parameters of one training-time augmentation.
struct AugmentDraw {
    std::size_t top = 0;
    std::size_t left = 0;
    bool flip = false;
};

AugmentDraw draw_augment(const Image& img, std::size_t out_size, std::size_t pad, std::mt19937_64& rng);
Image apply_augment(const Image& img, std::size_t out_size, std::size_t pad, const AugmentDraw& draw);

/// Reflect-pad by `pad`, crop a uniformly placed out_size square, then flip
/// with probability 0.5.
Image augment_train(const Image& img, std::size_t out_size, std::size_t pad, std::mt19937_64& rng);

/// Corners TL, TR, BL, BR, then center; followed by the horizontal flip of each
/// in the same order.
std::vector<Image> ten_crop(const Image& img, std::size_t crop_size);

struct Normalization {
    std::vector<double> mean{0.5};
    std::vector<double> std{0.5};
};

/// Scales to [0, 1], then (x - mean[c]) / std[c]; single-entry vectors broadcast.
Tensor to_tensor(const Image& img, const Normalization& norm);
/// Stacks equally sized images into one (n, c, h, w) batch.
Tensor to_batch(const std::vector<Image>& images, const Normalization& norm);

}  // namespace lla
