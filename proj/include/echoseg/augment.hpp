#pragma once

#include <cstdint>
#include <utility>

#include "echoseg/types.hpp"

namespace echoseg {

struct AugmentParams {
    bool hflip = false;
    double rotation_deg = 0.0; // drawn uniformly from [-10, +10]
};

AugmentParams draw_augment_params(uint64_t seed);

// Applies the same geometric transform to both inputs: horizontal flip, then
// rotation about the image center. Image samples bilinearly, mask by nearest
// neighbor, both with edge replication so no values outside the originals
// appear.
std::pair<FrameImage, LabelMap> apply_augment(const FrameImage& frame, const LabelMap& mask,
                                              const AugmentParams& params);

std::pair<FrameImage, LabelMap> augment(const FrameImage& frame, const LabelMap& mask,
                                        uint64_t seed);

} // namespace echoseg
