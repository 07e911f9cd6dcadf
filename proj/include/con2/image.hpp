// ============================================================================
// image.hpp - float raster images and the context augmentations
//
// Images are planar CHW floats in [0,1]. The three context transforms
// (invert, vflip, equalize) are parameter-free and deterministic; invert and
// vflip are exact involutions, equalize is idempotent up to one 1/255
// quantization level.
// ============================================================================

#pragma once
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "con2/util.hpp"

namespace con2 {

struct Image {
    int h = 0, w = 0, c = 0;
    std::vector<float> data;  // planar CHW

    Image() = default;
    Image(int height, int width, int channels, float fill = 0.0f)
        : h(height), w(width), c(channels),
          data(static_cast<std::size_t>(height) * width * channels, fill) {}

    float& at(int ch, int y, int x) {
        return data[(static_cast<std::size_t>(ch) * h + y) * w + x];
    }
    float at(int ch, int y, int x) const {
        return data[(static_cast<std::size_t>(ch) * h + y) * w + x];
    }

    std::size_t pixels() const { return static_cast<std::size_t>(h) * w * c; }

    bool in_unit_range() const {
        for (float v : data)
            if (!(v >= 0.0f && v <= 1.0f)) return false;
        return true;
    }
};

inline void require_valid(const Image& img) {
    if (img.h < 1 || img.w < 1 || (img.c != 1 && img.c != 3))
        throw ConfigError("invalid image shape");
    if (img.data.size() != img.pixels()) throw ConfigError("image buffer size mismatch");
}

// x -> 1 - x on every pixel
inline Image invert(const Image& img) {
    require_valid(img);
    Image out = img;
    for (auto& v : out.data) v = 1.0f - v;
    return out;
}

// mirror vertically: row r -> row h-1-r
inline Image vflip(const Image& img) {
    require_valid(img);
    Image out(img.h, img.w, img.c);
    for (int ch = 0; ch < img.c; ++ch)
        for (int y = 0; y < img.h; ++y)
            for (int x = 0; x < img.w; ++x) out.at(ch, y, x) = img.at(ch, img.h - 1 - y, x);
    return out;
}

// Per-channel histogram equalization over 256 bins, classic integer CDF
// remap. A channel with at most one occupied bin is left unchanged.
inline Image equalize(const Image& img) {
    require_valid(img);
    Image out(img.h, img.w, img.c);
    const int npix = img.h * img.w;
    for (int ch = 0; ch < img.c; ++ch) {
        std::array<long, 256> hist{};
        std::vector<int> levels(npix);
        for (int i = 0; i < npix; ++i) {
            float v = img.data[static_cast<std::size_t>(ch) * npix + i];
            int q = static_cast<int>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
            levels[i] = q;
            hist[q]++;
        }
        int occupied = 0, last_occupied = 0;
        for (int b = 0; b < 256; ++b)
            if (hist[b]) {
                occupied++;
                last_occupied = b;
            }
        std::array<int, 256> lut{};
        long step = occupied <= 1 ? 0 : (static_cast<long>(npix) - hist[last_occupied]) / 255;
        if (step == 0) {
            for (int b = 0; b < 256; ++b) lut[b] = b;
        } else {
            long n = step / 2;
            for (int b = 0; b < 256; ++b) {
                lut[b] = static_cast<int>(std::min<long>(n / step, 255));
                n += hist[b];
            }
        }
        for (int i = 0; i < npix; ++i)
            out.data[static_cast<std::size_t>(ch) * npix + i] =
                static_cast<float>(lut[levels[i]]) / 255.0f;
    }
    return out;
}

enum class ContextAug { invert, vflip, equalize };

inline Image apply_context(const Image& img, ContextAug kind) {
    switch (kind) {
        case ContextAug::invert: return invert(img);
        case ContextAug::vflip: return vflip(img);
        case ContextAug::equalize: return equalize(img);
    }
    throw ConfigError("unknown context augmentation");
}

inline std::string context_aug_name(ContextAug kind) {
    switch (kind) {
        case ContextAug::invert: return "invert";
        case ContextAug::vflip: return "vflip";
        case ContextAug::equalize: return "equalize";
    }
    return "?";
}

inline ContextAug context_aug_from_name(const std::string& name) {
    if (name == "invert") return ContextAug::invert;
    if (name == "vflip" || name == "flip") return ContextAug::vflip;
    if (name == "equalize") return ContextAug::equalize;
    throw ConfigError("unknown context augmentation: " + name);
}

// Grayscale inputs are replicated to 3 channels so one content-augmentation
// policy serves every dataset.
inline Image to_three_channels(const Image& img) {
    if (img.c == 3) return img;
    Image out(img.h, img.w, 3);
    const int npix = img.h * img.w;
    for (int ch = 0; ch < 3; ++ch)
        std::copy(img.data.begin(), img.data.begin() + npix,
                  out.data.begin() + static_cast<std::size_t>(ch) * npix);
    return out;
}

// Bilinear resize with half-pixel centers.
inline Image resize_bilinear(const Image& img, int out_h, int out_w) {
    require_valid(img);
    if (out_h < 1 || out_w < 1) throw ConfigError("resize target must be positive");
    if (out_h == img.h && out_w == img.w) return img;
    Image out(out_h, out_w, img.c);
    const double sy = static_cast<double>(img.h) / out_h;
    const double sx = static_cast<double>(img.w) / out_w;
    for (int ch = 0; ch < img.c; ++ch) {
        for (int y = 0; y < out_h; ++y) {
            double fy = (y + 0.5) * sy - 0.5;
            int y0 = static_cast<int>(std::floor(fy));
            double wy = fy - y0;
            int y0c = std::clamp(y0, 0, img.h - 1);
            int y1c = std::clamp(y0 + 1, 0, img.h - 1);
            for (int x = 0; x < out_w; ++x) {
                double fx = (x + 0.5) * sx - 0.5;
                int x0 = static_cast<int>(std::floor(fx));
                double wx = fx - x0;
                int x0c = std::clamp(x0, 0, img.w - 1);
                int x1c = std::clamp(x0 + 1, 0, img.w - 1);
                double top = (1.0 - wx) * img.at(ch, y0c, x0c) + wx * img.at(ch, y0c, x1c);
                double bot = (1.0 - wx) * img.at(ch, y1c, x0c) + wx * img.at(ch, y1c, x1c);
                out.at(ch, y, x) =
                    static_cast<float>(std::clamp((1.0 - wy) * top + wy * bot, 0.0, 1.0));
            }
        }
    }
    return out;
}

inline Image center_crop(const Image& img, int size) {
    if (size > img.h || size > img.w) throw ConfigError("crop larger than image");
    Image out(size, size, img.c);
    int y0 = (img.h - size) / 2;
    int x0 = (img.w - size) / 2;
    for (int ch = 0; ch < img.c; ++ch)
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x) out.at(ch, y, x) = img.at(ch, y0 + y, x0 + x);
    return out;
}

}  // namespace con2
