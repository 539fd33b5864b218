#pragma once

// Synthetic geometric-shapes dataset shared by the training tests and the
// acceptance suite: one patient per frame, class 1 a bright disc, class 2 the
// ring around it, class 3 a rectangle, each with a distinct intensity band.

#include <cmath>
#include <filesystem>
#include <random>
#include <string>

#include "echoseg/manifest.hpp"
#include "echoseg/preprocessing.hpp"
#include "echoseg/types.hpp"

namespace echoseg::testing {

inline Manifest build_shapes_dataset(const std::filesystem::path& dir, int n_train, int n_val,
                                     int n_test, int size, uint64_t seed = 1234) {
    namespace fs = std::filesystem;
    const fs::path images = dir / "images";
    const fs::path masks = dir / "masks";
    fs::remove_all(dir);
    fs::create_directories(images);
    fs::create_directories(masks);

    std::mt19937 rng(static_cast<unsigned>(seed));
    std::uniform_real_distribution<float> noise(-0.05f, 0.05f);

    Manifest manifest;
    const int total = n_train + n_val + n_test;
    for (int i = 0; i < total; ++i) {
        FrameImage frame;
        frame.height = size;
        frame.width = size;
        frame.pixels.assign(static_cast<size_t>(size) * size, 0.0f);
        LabelMap mask;
        mask.height = size;
        mask.width = size;
        mask.labels.assign(frame.pixels.size(), 0);

        const int cy = size / 3 + static_cast<int>(rng() % (size / 4));
        const int cx = size / 3 + static_cast<int>(rng() % (size / 4));
        const double r_inner = size / 8.0 + rng() % (size / 12);
        const double r_outer = r_inner + size / 16.0;

        const int ry0 = 2 * size / 3 + static_cast<int>(rng() % (size / 8));
        const int rx0 = size / 12 + static_cast<int>(rng() % (size / 8));
        const int rh = size / 8, rw = size / 6;

        for (int y = 0; y < size; ++y) {
            for (int x = 0; x < size; ++x) {
                const size_t idx = static_cast<size_t>(y) * size + x;
                const double d = std::hypot(y - cy, x - cx);
                float value = 0.1f;
                if (d <= r_inner) {
                    mask.labels[idx] = 1;
                    value = 0.9f;
                } else if (d <= r_outer) {
                    mask.labels[idx] = 2;
                    value = 0.55f;
                } else if (y >= ry0 && y < std::min(size, ry0 + rh) && x >= rx0 &&
                           x < std::min(size, rx0 + rw)) {
                    mask.labels[idx] = 3;
                    value = 0.32f;
                }
                frame.pixels[idx] = value + noise(rng);
            }
        }

        char name[64];
        std::snprintf(name, sizeof(name), "patient%04d_2CH_ED", i);
        const std::string image_path = (images / (std::string(name) + ".png")).string();
        const std::string mask_path = (masks / (std::string(name) + "_gt.png")).string();
        export_png16(frame, image_path);
        export_mask_png(mask, mask_path);

        SampleRecord record;
        record.image_path = image_path;
        record.mask_path = mask_path;
        record.patient_id = parse_patient_id(image_path);
        record.split = i < n_train ? Split::Train : (i < n_train + n_val ? Split::Val : Split::Test);
        manifest.records.push_back(std::move(record));
    }
    return manifest;
}

} // namespace echoseg::testing
