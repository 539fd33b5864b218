#include "echoseg/augment.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace echoseg {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kMaxRotationDeg = 10.0;

struct Transform {
    bool hflip;
    double cos_t;
    double sin_t;
    double cy;
    double cx;

    // Maps an output pixel back to its source location.
    std::pair<double, double> source_of(int y, int x) const {
        double dy = y - cy;
        double dx = x - cx;
        // inverse rotation
        const double sy = cos_t * dy - sin_t * dx;
        const double sx = sin_t * dy + cos_t * dx;
        double src_y = sy + cy;
        double src_x = sx + cx;
        if (hflip) src_x = 2.0 * cx - src_x;
        return {src_y, src_x};
    }
};

Transform make_transform(const AugmentParams& params, int height, int width) {
    const double theta = params.rotation_deg * kPi / 180.0;
    return {params.hflip, std::cos(theta), std::sin(theta), (height - 1) / 2.0, (width - 1) / 2.0};
}

} // namespace

AugmentParams draw_augment_params(uint64_t seed) {
    std::mt19937_64 gen(seed);
    AugmentParams params;
    params.hflip = std::uniform_real_distribution<double>(0.0, 1.0)(gen) < 0.5;
    params.rotation_deg =
        std::uniform_real_distribution<double>(-kMaxRotationDeg, kMaxRotationDeg)(gen);
    return params;
}

std::pair<FrameImage, LabelMap> apply_augment(const FrameImage& frame, const LabelMap& mask,
                                              const AugmentParams& params) {
    if (frame.height != mask.height || frame.width != mask.width)
        throw Error(ErrorCode::ShapeMismatch, "frame and mask shapes differ");

    const int h = frame.height, w = frame.width;
    const Transform transform = make_transform(params, h, w);

    FrameImage out_frame = frame;
    LabelMap out_mask = mask;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const auto [sy, sx] = transform.source_of(y, x);
            const double cy = std::clamp(sy, 0.0, static_cast<double>(h - 1));
            const double cx = std::clamp(sx, 0.0, static_cast<double>(w - 1));

            const int y0 = static_cast<int>(std::floor(cy));
            const int x0 = static_cast<int>(std::floor(cx));
            const int y1 = std::min(y0 + 1, h - 1);
            const int x1 = std::min(x0 + 1, w - 1);
            const double wy = cy - y0;
            const double wx = cx - x0;
            const double top = frame.at(y0, x0) * (1.0 - wx) + frame.at(y0, x1) * wx;
            const double bot = frame.at(y1, x0) * (1.0 - wx) + frame.at(y1, x1) * wx;
            out_frame.at(y, x) = static_cast<float>(top * (1.0 - wy) + bot * wy);

            const int ny = std::clamp(static_cast<int>(std::lround(cy)), 0, h - 1);
            const int nx = std::clamp(static_cast<int>(std::lround(cx)), 0, w - 1);
            out_mask.at(y, x) = mask.at(ny, nx);
        }
    }
    return {std::move(out_frame), std::move(out_mask)};
}

std::pair<FrameImage, LabelMap> augment(const FrameImage& frame, const LabelMap& mask,
                                        uint64_t seed) {
    return apply_augment(frame, mask, draw_augment_params(seed));
}

} // namespace echoseg
