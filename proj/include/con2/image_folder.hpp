// ============================================================================
// image_folder.hpp - PNG/JPEG folder ingestion
//
// OpenCV is used for decoding/encoding only; resizing and cropping go through
// the library's own bilinear kernel so pixel fixtures do not depend on OpenCV
// interpolation details.
// ============================================================================

#pragma once
#include <algorithm>
#include <filesystem>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "con2/dataset.hpp"
#include "con2/image.hpp"

namespace con2 {

struct FolderLayout {
    struct Entry {
        std::string subdir;
        std::string split;  // "train" | "test"
        std::string label;  // "normal" | "anomaly"
    };
    std::vector<Entry> entries;
    int resize_shorter = 256;  // 0 = stretch directly to crop_size
    int crop_size = 224;

    void validate() const {
        if (entries.empty()) throw ConfigError("folder layout: no entries");
        bool has_train_normal = false, has_test = false;
        for (const auto& e : entries) {
            if (e.split != "train" && e.split != "test")
                throw ConfigError("folder layout: split must be train or test: " + e.subdir);
            if (e.label != "normal" && e.label != "anomaly")
                throw ConfigError("folder layout: label must be normal or anomaly: " + e.subdir);
            if (e.split == "train" && e.label == "anomaly")
                throw ConfigError(
                    "folder layout: anomaly data in the train position is not allowed "
                    "(training must be anomaly-free): " +
                    e.subdir);
            has_train_normal |= e.split == "train";
            has_test |= e.split == "test";
        }
        if (!has_train_normal) throw ConfigError("folder layout: no train entry");
        if (!has_test) throw ConfigError("folder layout: no test entry");
        if (crop_size < 8) throw ConfigError("folder layout: crop_size must be >= 8");
        if (resize_shorter != 0 && resize_shorter < crop_size)
            throw ConfigError("folder layout: resize_shorter must be >= crop_size");
    }
};

inline Image decode_image_file(const std::filesystem::path& path) {
    cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
    if (bgr.empty()) throw ConfigError("undecodable image file: " + path.string());
    Image img(bgr.rows, bgr.cols, 3);
    for (int y = 0; y < bgr.rows; ++y) {
        const auto* row = bgr.ptr<cv::Vec3b>(y);
        for (int x = 0; x < bgr.cols; ++x) {
            img.at(0, y, x) = row[x][2] / 255.0f;  // BGR -> RGB
            img.at(1, y, x) = row[x][1] / 255.0f;
            img.at(2, y, x) = row[x][0] / 255.0f;
        }
    }
    return img;
}

inline void encode_image_file(const std::filesystem::path& path, const Image& img) {
    Image three = to_three_channels(img);
    cv::Mat bgr(three.h, three.w, CV_8UC3);
    for (int y = 0; y < three.h; ++y) {
        auto* row = bgr.ptr<cv::Vec3b>(y);
        for (int x = 0; x < three.w; ++x) {
            auto q = [&](int ch) {
                return static_cast<unsigned char>(
                    std::lround(std::clamp(three.at(ch, y, x), 0.0f, 1.0f) * 255.0f));
            };
            row[x] = cv::Vec3b(q(2), q(1), q(0));
        }
    }
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    if (!cv::imwrite(path.string(), bgr))
        throw ArtifactError("cannot write image: " + path.string());
}

// Resize the shorter edge, then center-crop (or stretch when resize_shorter
// is 0).
inline Image ingest_resize(const Image& img, int resize_shorter, int crop_size) {
    if (resize_shorter == 0) return resize_bilinear(img, crop_size, crop_size);
    double scale = static_cast<double>(resize_shorter) / std::min(img.h, img.w);
    int nh = std::max(crop_size, static_cast<int>(std::lround(img.h * scale)));
    int nw = std::max(crop_size, static_cast<int>(std::lround(img.w * scale)));
    return center_crop(resize_bilinear(img, nh, nw), crop_size);
}

inline DatasetSplit load_image_folder(const std::filesystem::path& root,
                                      const FolderLayout& layout) {
    namespace fs = std::filesystem;
    layout.validate();
    if (!fs::is_directory(root)) throw ConfigError("dataset folder missing: " + root.string());

    DatasetSplit split;
    for (const auto& entry : layout.entries) {
        fs::path dir = root / entry.subdir;
        if (!fs::is_directory(dir)) throw ConfigError("dataset subfolder missing: " + dir.string());
        std::vector<fs::path> files;
        for (const auto& f : fs::directory_iterator(dir))
            if (f.is_regular_file()) files.push_back(f.path());
        std::sort(files.begin(), files.end());
        for (const auto& f : files) {
            Image img = ingest_resize(decode_image_file(f), layout.resize_shorter,
                                      layout.crop_size);
            if (entry.split == "train") {
                split.train.push_back(std::move(img));
            } else {
                split.test.push_back(std::move(img));
                split.test_labels.push_back(entry.label == "anomaly" ? 1 : 0);
            }
        }
    }
    if (split.train.empty()) throw ConfigError("empty normal-train split in " + root.string());
    return split;
}

}  // namespace con2
