// ============================================================================
// content_aug.hpp - SimCLR-style content augmentations
//
// Sampling and application are split: sample_content_transform draws a fully
// parameterized descriptor, apply_content_transform replays it. Replaying the
// same descriptor on the same image is bit-identical, which is what makes
// frozen test-time policies and golden batch fixtures possible.
// ============================================================================

#pragma once
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include <json.hpp>

#include "con2/image.hpp"
#include "con2/rng.hpp"

namespace con2 {

struct ContentPolicy {
    double crop_scale_min = 0.08;  // fraction of source area
    double crop_scale_max = 1.0;
    double hflip_prob = 0.5;
    double jitter_prob = 0.8;
    double brightness = 0.8;
    double contrast = 0.8;
    double saturation = 0.8;
    double hue = 0.2;
    double grayscale_prob = 0.2;
    int out_size = 224;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(crop_scale_min > 0.0) || crop_scale_min > crop_scale_max || crop_scale_max > 1.0)
            throw ConfigError("content policy: crop scale range must satisfy 0 < min <= max <= 1");
        if (hue < 0.0 || hue > 0.5) throw ConfigError("content policy: hue strength in [0, 0.5]");
        if (out_size < 1) throw ConfigError("content policy: output size must be positive");
        for (double p : {hflip_prob, jitter_prob, grayscale_prob})
            if (p < 0.0 || p > 1.0) throw ConfigError("content policy: probabilities in [0, 1]");
        if (brightness < 0.0 || contrast < 0.0 || saturation < 0.0)
            throw ConfigError("content policy: jitter strengths must be >= 0");
    }

    // Degenerate policy whose transforms are the identity (up to resize).
    static ContentPolicy identity(int out_size) {
        ContentPolicy p;
        p.crop_scale_min = p.crop_scale_max = 1.0;
        p.hflip_prob = 0.0;
        p.jitter_prob = 0.0;
        p.brightness = p.contrast = p.saturation = p.hue = 0.0;
        p.grayscale_prob = 0.0;
        p.out_size = out_size;
        return p;
    }
};

// A replayable transform. Crop coordinates are fractions of the source frame
// so one descriptor applies to any image of the dataset's (uniform) size.
struct ContentTransform {
    double crop_y = 0.0, crop_x = 0.0, crop_h = 1.0, crop_w = 1.0;
    bool hflip = false;
    bool jitter = false;
    double brightness = 1.0, contrast = 1.0, saturation = 1.0, hue_shift = 0.0;
    bool grayscale = false;
    int out_size = 0;

    bool operator==(const ContentTransform&) const = default;
};

inline void to_json(nlohmann::json& j, const ContentTransform& t) {
    j = nlohmann::json{{"crop_y", t.crop_y},         {"crop_x", t.crop_x},
                       {"crop_h", t.crop_h},         {"crop_w", t.crop_w},
                       {"hflip", t.hflip},           {"jitter", t.jitter},
                       {"brightness", t.brightness}, {"contrast", t.contrast},
                       {"saturation", t.saturation}, {"hue_shift", t.hue_shift},
                       {"grayscale", t.grayscale},   {"out_size", t.out_size}};
}

inline void from_json(const nlohmann::json& j, ContentTransform& t) {
    j.at("crop_y").get_to(t.crop_y);
    j.at("crop_x").get_to(t.crop_x);
    j.at("crop_h").get_to(t.crop_h);
    j.at("crop_w").get_to(t.crop_w);
    j.at("hflip").get_to(t.hflip);
    j.at("jitter").get_to(t.jitter);
    j.at("brightness").get_to(t.brightness);
    j.at("contrast").get_to(t.contrast);
    j.at("saturation").get_to(t.saturation);
    j.at("hue_shift").get_to(t.hue_shift);
    j.at("grayscale").get_to(t.grayscale);
    j.at("out_size").get_to(t.out_size);
}

// Random resized crop in fraction space: sample an area fraction and a log
// -uniform aspect ratio, accept when the rectangle fits, fall back to the
// full frame after 10 attempts (so a (1,1) scale range yields the identity).
inline ContentTransform sample_content_transform(const ContentPolicy& policy, Rng& rng) {
    policy.validate();
    ContentTransform t;
    t.out_size = policy.out_size;

    bool placed = false;
    for (int attempt = 0; attempt < 10 && !placed; ++attempt) {
        double area = rng.uniform(policy.crop_scale_min, policy.crop_scale_max);
        double log_ratio = rng.uniform(std::log(3.0 / 4.0), std::log(4.0 / 3.0));
        double ratio = std::exp(log_ratio);
        double fw = std::sqrt(area * ratio);
        double fh = std::sqrt(area / ratio);
        if (fw <= 1.0 && fh <= 1.0) {
            t.crop_h = fh;
            t.crop_w = fw;
            t.crop_y = rng.uniform(0.0, 1.0 - fh);
            t.crop_x = rng.uniform(0.0, 1.0 - fw);
            placed = true;
        }
    }
    if (!placed) {
        t.crop_y = t.crop_x = 0.0;
        t.crop_h = t.crop_w = 1.0;
    }

    t.hflip = rng.bernoulli(policy.hflip_prob);
    t.jitter = rng.bernoulli(policy.jitter_prob);
    if (t.jitter) {
        t.brightness = rng.uniform(std::max(0.0, 1.0 - policy.brightness), 1.0 + policy.brightness);
        t.contrast = rng.uniform(std::max(0.0, 1.0 - policy.contrast), 1.0 + policy.contrast);
        t.saturation = rng.uniform(std::max(0.0, 1.0 - policy.saturation), 1.0 + policy.saturation);
        t.hue_shift = rng.uniform(-policy.hue, policy.hue);
    }
    t.grayscale = rng.bernoulli(policy.grayscale_prob);
    return t;
}

namespace detail {

inline double luma(double r, double g, double b) {
    return 0.299 * r + 0.587 * g + 0.114 * b;
}

inline void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v) {
    double mx = std::max({r, g, b}), mn = std::min({r, g, b});
    v = mx;
    double delta = mx - mn;
    s = mx > 0.0 ? delta / mx : 0.0;
    if (delta == 0.0) {
        h = 0.0;
    } else if (mx == r) {
        h = std::fmod((g - b) / delta, 6.0) / 6.0;
    } else if (mx == g) {
        h = ((b - r) / delta + 2.0) / 6.0;
    } else {
        h = ((r - g) / delta + 4.0) / 6.0;
    }
    if (h < 0.0) h += 1.0;
}

inline void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
    double hh = std::fmod(h, 1.0);
    if (hh < 0.0) hh += 1.0;
    hh *= 6.0;
    int i = static_cast<int>(hh) % 6;
    double f = hh - std::floor(hh);
    double p = v * (1.0 - s);
    double q = v * (1.0 - s * f);
    double t = v * (1.0 - s * (1.0 - f));
    switch (i) {
        case 0: r = v, g = t, b = p; break;
        case 1: r = q, g = v, b = p; break;
        case 2: r = p, g = v, b = t; break;
        case 3: r = p, g = q, b = v; break;
        case 4: r = t, g = p, b = v; break;
        default: r = v, g = p, b = q; break;
    }
}

}  // namespace detail

// Replays a descriptor: crop+resize, horizontal flip, color jitter (fixed
// order brightness -> contrast -> saturation -> hue), grayscale. Expects a
// 3-channel image; every step keeps values in [0,1].
inline Image apply_content_transform(const Image& img, const ContentTransform& t) {
    require_valid(img);
    if (img.c != 3) throw ConfigError("content transforms expect 3-channel images");

    int ch0 = std::clamp(static_cast<int>(std::lround(t.crop_h * img.h)), 1, img.h);
    int cw0 = std::clamp(static_cast<int>(std::lround(t.crop_w * img.w)), 1, img.w);
    int cy = std::clamp(static_cast<int>(std::lround(t.crop_y * img.h)), 0, img.h - ch0);
    int cx = std::clamp(static_cast<int>(std::lround(t.crop_x * img.w)), 0, img.w - cw0);

    Image crop(ch0, cw0, 3);
    for (int ch = 0; ch < 3; ++ch)
        for (int y = 0; y < ch0; ++y)
            for (int x = 0; x < cw0; ++x) crop.at(ch, y, x) = img.at(ch, cy + y, cx + x);

    Image out = resize_bilinear(crop, t.out_size, t.out_size);

    if (t.hflip) {
        for (int ch = 0; ch < 3; ++ch)
            for (int y = 0; y < out.h; ++y)
                for (int x = 0; x < out.w / 2; ++x)
                    std::swap(out.at(ch, y, x), out.at(ch, y, out.w - 1 - x));
    }

    const int npix = out.h * out.w;
    auto clampf = [](double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); };

    if (t.jitter) {
        for (int i = 0; i < npix; ++i)
            for (int ch = 0; ch < 3; ++ch) {
                auto& v = out.data[static_cast<std::size_t>(ch) * npix + i];
                v = clampf(v * t.brightness);
            }
        double mean_luma = 0.0;
        for (int i = 0; i < npix; ++i)
            mean_luma += detail::luma(out.data[i], out.data[npix + i], out.data[2 * npix + i]);
        mean_luma /= npix;
        for (int i = 0; i < npix; ++i)
            for (int ch = 0; ch < 3; ++ch) {
                auto& v = out.data[static_cast<std::size_t>(ch) * npix + i];
                v = clampf(t.contrast * v + (1.0 - t.contrast) * mean_luma);
            }
        for (int i = 0; i < npix; ++i) {
            double l = detail::luma(out.data[i], out.data[npix + i], out.data[2 * npix + i]);
            for (int ch = 0; ch < 3; ++ch) {
                auto& v = out.data[static_cast<std::size_t>(ch) * npix + i];
                v = clampf(t.saturation * v + (1.0 - t.saturation) * l);
            }
        }
        if (t.hue_shift != 0.0) {
            for (int i = 0; i < npix; ++i) {
                double h, s, v, r, g, b;
                detail::rgb_to_hsv(out.data[i], out.data[npix + i], out.data[2 * npix + i], h, s, v);
                detail::hsv_to_rgb(h + t.hue_shift, s, v, r, g, b);
                out.data[i] = clampf(r);
                out.data[npix + i] = clampf(g);
                out.data[2 * npix + i] = clampf(b);
            }
        }
    }

    if (t.grayscale) {
        for (int i = 0; i < npix; ++i) {
            double l = detail::luma(out.data[i], out.data[npix + i], out.data[2 * npix + i]);
            out.data[i] = out.data[npix + i] = out.data[2 * npix + i] = clampf(l);
        }
    }
    return out;
}

}  // namespace con2
