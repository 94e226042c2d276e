#pragma once

// Shared fixtures for the test binaries: seeded random images and masks, temporary directories
// and a small on-disk toy dataset.

#include "anonypipe/dataset.hpp"
#include "anonypipe/image_io.hpp"

#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <algorithm>
#include <random>
#include <string>
#include <vector>

namespace testing {

using namespace anonypipe;

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    int uniform_int(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(engine_); }
    double uniform(double lo = 0.0, double hi = 1.0) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
    double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }
    bool coin(double p = 0.5) { return uniform() < p; }
    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
};

inline Image8 random_image(Rng& rng, int w, int h) {
    Image8 img(w, h);
    for (int c = 0; c < 3; ++c)
        for (Eigen::Index i = 0; i < img[c].size(); ++i) img[c].data()[i] = static_cast<std::uint8_t>(rng.uniform_int(0, 255));
    return img;
}

/// Smooth image: per-channel linear ramps plus mild noise.
inline Image8 smooth_image(Rng& rng, int w, int h) {
    Image8 img(w, h);
    for (int c = 0; c < 3; ++c) {
        const double a = rng.uniform(40, 200), gx = rng.uniform(-1, 1), gy = rng.uniform(-1, 1);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) img[c](y, x) = to_u8(a + gx * x + gy * y + rng.uniform(-8, 8));
    }
    return img;
}

/// Every level appears equally often (up to rounding), shuffled per channel.
inline Image8 level_ramp_image(Rng& rng, int w, int h) {
    Image8 img(w, h);
    const Eigen::Index n = Eigen::Index(w) * h;
    for (int c = 0; c < 3; ++c) {
        std::vector<std::uint8_t> v(n);
        for (Eigen::Index i = 0; i < n; ++i) v[i] = static_cast<std::uint8_t>(i * 256 / n);
        std::shuffle(v.begin(), v.end(), rng.engine());
        std::copy(v.begin(), v.end(), img[c].data());
    }
    return img;
}

/// Mixture of random rectangles and scattered pixels; `density` controls the scattered part.
inline BitMask random_mask(Rng& rng, int w, int h, double density = 0.05) {
    BitMask m = BitMask::Zero(h, w);
    const int rects = rng.uniform_int(0, 3);
    for (int i = 0; i < rects; ++i) {
        const int x0 = rng.uniform_int(0, w - 1), y0 = rng.uniform_int(0, h - 1);
        const int rw = rng.uniform_int(1, w - x0), rh = rng.uniform_int(1, h - y0);
        m.block(y0, x0, rh, rw).setConstant(true);
    }
    for (Eigen::Index i = 0; i < m.size(); ++i)
        if (rng.coin(density)) m.data()[i] = true;
    return m;
}

class TempDir {
public:
    TempDir() {
        std::string tmpl = (std::filesystem::temp_directory_path() / "anonypipe-test-XXXXXX").string();
        if (!::mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
        path_ = tmpl;
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

private:
    std::filesystem::path path_;
};

inline void write_text(const std::filesystem::path& p, const std::string& text) {
    std::filesystem::create_directories(p.parent_path());
    std::ofstream(p, std::ios::binary) << text;
}

inline std::string read_text(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct ToyDatasetFiles {
    std::filesystem::path annotations, images, faces, keypoints;
    int image_count = 0;
    int person_instances = 0;
};

/// Writes a toy dataset: images with person-like polygons, COCO annotations with keypoints, and a
/// face-box sidecar with one box per person near the top of its polygon. Instances are distributed
/// round-robin over images. Extra non-person and crowd annotations are added when `distractors`.
inline ToyDatasetFiles write_toy_dataset(const std::filesystem::path& root, int images, int persons,
                                         std::uint64_t seed = 7, bool distractors = false) {
    Rng rng(seed);
    ToyDatasetFiles files;
    files.images = root / "images";
    files.annotations = root / "annotations" / "instances.json";
    files.faces = root / "annotations" / "faces.jsonl";
    files.keypoints = root / "annotations" / "keypoints.jsonl";
    files.image_count = images;
    files.person_instances = persons;

    nlohmann::json doc{{"images", nlohmann::json::array()},
                       {"annotations", nlohmann::json::array()},
                       {"categories", {{{"id", 1}, {"name", "person"}}, {{"id", 2}, {"name", "car"}}}}};
    std::string faces, kps_lines;
    const int W = 128, H = 96;
    for (int i = 0; i < images; ++i) {
        const std::string name = (i % 2 ? "sub/" : "") + std::string("img_") + std::to_string(i) + ".png";
        doc["images"].push_back({{"id", 100 + i}, {"file_name", name}, {"width", W}, {"height", H}});
        write_image(files.images / name, smooth_image(rng, W, H));
    }
    std::int64_t next_id = 1;
    for (int p = 0; p < persons; ++p) {
        const int image_id = 100 + p % images;
        const double w = rng.uniform(14, 34), h = rng.uniform(30, 60);
        const double x = rng.uniform(2, W - w - 2), y = rng.uniform(2, H - h - 2);
        const nlohmann::json poly = {x + 0.3 * w, y,     x + 0.7 * w, y,         x + w, y + 0.4 * h,
                                     x + 0.8 * w, y + h, x + 0.2 * w, y + h, x, y + 0.4 * h};
        nlohmann::json kp = nlohmann::json::array();
        for (int k = 0; k < kNumKeypoints; ++k) {
            kp.push_back(x + rng.uniform(0.2, 0.8) * w);
            kp.push_back(y + (k + 0.5) / kNumKeypoints * h);
            kp.push_back(2);
        }
        const std::int64_t id = next_id++;
        doc["annotations"].push_back({{"id", id},
                                      {"image_id", image_id},
                                      {"category_id", 1},
                                      {"segmentation", nlohmann::json::array({poly})},
                                      {"bbox", {x, y, w, h}},
                                      {"iscrowd", 0},
                                      {"keypoints", kp}});
        const double fw = 0.4 * w;
        faces += nlohmann::json{{"image_id", image_id}, {"bbox", {x + 0.3 * w, y, fw, fw}}, {"score", 0.9}}.dump() + "\n";
    }
    if (distractors) {
        doc["annotations"].push_back({{"id", next_id++}, {"image_id", 100}, {"category_id", 2},
                                      {"segmentation", nlohmann::json::array({nlohmann::json::array({10, 10, 30, 10, 30, 30, 10, 30})})}, {"bbox", {10, 10, 20, 20}},
                                      {"iscrowd", 0}});
        doc["annotations"].push_back({{"id", next_id++}, {"image_id", 100}, {"category_id", 1},
                                      {"segmentation", nlohmann::json::array({nlohmann::json::array({50, 50, 70, 50, 70, 70, 50, 70})})}, {"bbox", {50, 50, 20, 20}},
                                      {"iscrowd", 1}});
    }
    write_text(files.annotations, doc.dump(1));
    write_text(files.faces, faces);
    write_text(files.keypoints, kps_lines);
    return files;
}

}  // namespace testing
