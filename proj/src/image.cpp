#include "lla/image.hpp"

#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "lla/errors.hpp"

namespace lla {

namespace {

class PnmHeader {
public:
    explicit PnmHeader(std::string_view bytes) : bytes_(bytes) {}

    std::size_t number() {
        skip_space_and_comments();
        std::size_t v = 0;
        std::size_t digits = 0;
        while (pos_ < bytes_.size() && std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
            v = v * 10 + static_cast<std::size_t>(bytes_[pos_] - '0');
            ++pos_;
            ++digits;
        }
        if (digits == 0) throw FormatError("pnm: malformed header");
        return v;
    }

    std::size_t data_start() {
        if (pos_ >= bytes_.size() || !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
            throw FormatError("pnm: missing separator before pixel data");
        }
        return pos_ + 1;
    }

private:
    void skip_space_and_comments() {
        while (pos_ < bytes_.size()) {
            const char ch = bytes_[pos_];
            if (std::isspace(static_cast<unsigned char>(ch))) {
                ++pos_;
            } else if (ch == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
            } else {
                break;
            }
        }
    }
    std::string_view bytes_;
    std::size_t pos_ = 2;
};

std::size_t reflect(std::ptrdiff_t i, std::size_t n) {
    const auto len = static_cast<std::ptrdiff_t>(n);
    if (i < 0) i = -i;
    if (i >= len) i = 2 * (len - 1) - i;
    return static_cast<std::size_t>(i);
}

}  // namespace

Image decode_pnm(std::string_view bytes) {
    if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
        throw FormatError("pnm: only binary P5/P6 images are supported");
    }
    PnmHeader h(bytes);
    const std::size_t channels = bytes[1] == '5' ? 1 : 3;
    const std::size_t width = h.number();
    const std::size_t height = h.number();
    const std::size_t maxval = h.number();
    if (maxval != 255) throw FormatError("pnm: unsupported maxval " + std::to_string(maxval));
    if (width == 0 || height == 0) throw FormatError("pnm: empty image");
    const std::size_t start = h.data_start();
    Image img(channels, height, width);
    if (bytes.size() - start < img.pixels.size()) throw FormatError("pnm: truncated pixel data");
    std::copy(bytes.begin() + static_cast<std::ptrdiff_t>(start),
              bytes.begin() + static_cast<std::ptrdiff_t>(start + img.pixels.size()), img.pixels.begin());
    return img;
}

std::string encode_pnm(const Image& img) {
    if (img.channels != 1 && img.channels != 3) {
        throw std::invalid_argument("pnm: cannot encode " + std::to_string(img.channels) + " channels");
    }
    std::string out = img.channels == 1 ? "P5\n" : "P6\n";
    out += std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
    out.append(img.pixels.begin(), img.pixels.end());
    return out;
}

Image load_image(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read image " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    try {
        return decode_pnm(ss.str());
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

void save_image(const std::filesystem::path& path, const Image& img) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write image " + path.string());
    f << encode_pnm(img);
}

Image crop(const Image& img, std::size_t top, std::size_t left, std::size_t height, std::size_t width) {
    if (top + height > img.height || left + width > img.width) {
        throw std::invalid_argument("crop window exceeds image bounds");
    }
    Image out(img.channels, height, width);
    const std::size_t row = width * img.channels;
    for (std::size_t y = 0; y < height; ++y) {
        const auto* src = img.pixels.data() + ((top + y) * img.width + left) * img.channels;
        std::copy(src, src + row, out.pixels.data() + y * row);
    }
    return out;
}

Image flip_horizontal(const Image& img) {
    Image out(img.channels, img.height, img.width);
    for (std::size_t y = 0; y < img.height; ++y) {
        for (std::size_t x = 0; x < img.width; ++x) {
            for (std::size_t c = 0; c < img.channels; ++c) out.at(c, y, x) = img.at(c, y, img.width - 1 - x);
        }
    }
    return out;
}

Image reflect_pad(const Image& img, std::size_t pad) {
    if (pad == 0) return img;
    if (pad >= img.height || pad >= img.width) {
        throw std::invalid_argument("reflect_pad: pad " + std::to_string(pad) + " too large for image");
    }
    Image out(img.channels, img.height + 2 * pad, img.width + 2 * pad);
    const auto p = static_cast<std::ptrdiff_t>(pad);
    for (std::size_t y = 0; y < out.height; ++y) {
        const std::size_t sy = reflect(static_cast<std::ptrdiff_t>(y) - p, img.height);
        for (std::size_t x = 0; x < out.width; ++x) {
            const std::size_t sx = reflect(static_cast<std::ptrdiff_t>(x) - p, img.width);
            for (std::size_t c = 0; c < img.channels; ++c) out.at(c, y, x) = img.at(c, sy, sx);
        }
    }
    return out;
}

Image center_crop(const Image& img, std::size_t size) {
    if (size > img.height || size > img.width) {
        throw std::invalid_argument("center_crop: size " + std::to_string(size) + " exceeds image");
    }
    return crop(img, (img.height - size) / 2, (img.width - size) / 2, size, size);
}

AugmentDraw draw_augment(const Image& img, std::size_t out_size, std::size_t pad, std::mt19937_64& rng) {
    const std::size_t ph = img.height + 2 * pad;
    const std::size_t pw = img.width + 2 * pad;
    if (out_size > ph || out_size > pw) {
        throw std::invalid_argument("augment: out_size " + std::to_string(out_size) +
                                    " larger than padded image");
    }
    std::uniform_int_distribution<std::size_t> dy(0, ph - out_size);
    std::uniform_int_distribution<std::size_t> dx(0, pw - out_size);
    std::bernoulli_distribution flip(0.5);
    AugmentDraw d;
    d.top = dy(rng);
    d.left = dx(rng);
    d.flip = flip(rng);
    return d;
}

Image apply_augment(const Image& img, std::size_t out_size, std::size_t pad, const AugmentDraw& draw) {
    Image out = crop(reflect_pad(img, pad), draw.top, draw.left, out_size, out_size);
    return draw.flip ? flip_horizontal(out) : out;
}

Image augment_train(const Image& img, std::size_t out_size, std::size_t pad, std::mt19937_64& rng) {
    return apply_augment(img, out_size, pad, draw_augment(img, out_size, pad, rng));
}

std::vector<Image> ten_crop(const Image& img, std::size_t crop_size) {
    if (crop_size == 0 || crop_size > img.height || crop_size > img.width) {
        throw std::invalid_argument("ten_crop: crop size " + std::to_string(crop_size) + " does not fit " +
                                    std::to_string(img.height) + "x" + std::to_string(img.width));
    }
    const std::size_t bottom = img.height - crop_size;
    const std::size_t right = img.width - crop_size;
    std::vector<Image> out;
    out.reserve(10);
    out.push_back(crop(img, 0, 0, crop_size, crop_size));
    out.push_back(crop(img, 0, right, crop_size, crop_size));
    out.push_back(crop(img, bottom, 0, crop_size, crop_size));
    out.push_back(crop(img, bottom, right, crop_size, crop_size));
    out.push_back(center_crop(img, crop_size));
    for (std::size_t i = 0; i < 5; ++i) out.push_back(flip_horizontal(out[i]));
    return out;
}

Tensor to_tensor(const Image& img, const Normalization& norm) {
    return to_batch({img}, norm);
}

Tensor to_batch(const std::vector<Image>& images, const Normalization& norm) {
    if (images.empty()) throw std::invalid_argument("to_batch: no images");
    const Image& first = images.front();
    auto pick = [&](const std::vector<double>& v, std::size_t c, const char* what) {
        if (v.size() == 1) return v[0];
        if (v.size() != first.channels) {
            throw std::invalid_argument(std::string("normalization ") + what + " has " +
                                        std::to_string(v.size()) + " entries for " +
                                        std::to_string(first.channels) + " channels");
        }
        return v[c];
    };
    Tensor t(Shape{images.size(), first.channels, first.height, first.width});
    for (std::size_t n = 0; n < images.size(); ++n) {
        const Image& img = images[n];
        if (img.channels != first.channels || img.height != first.height || img.width != first.width) {
            throw DimensionError("shape", "to_batch: images differ in size");
        }
        for (std::size_t c = 0; c < img.channels; ++c) {
            const double m = pick(norm.mean, c, "mean");
            const double s = pick(norm.std, c, "std");
            for (std::size_t y = 0; y < img.height; ++y) {
                for (std::size_t x = 0; x < img.width; ++x) {
                    t.at(n, c, y, x) = (static_cast<double>(img.at(c, y, x)) / 255.0 - m) / s;
                }
            }
        }
    }
    return t;
}

}  // namespace lla
