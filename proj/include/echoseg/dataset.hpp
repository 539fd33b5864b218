#pragma once

#include <torch/torch.h>

#include <vector>

#include "echoseg/manifest.hpp"
#include "echoseg/types.hpp"

namespace echoseg {

struct Sample {
    FrameImage frame; // normalized and resized to the run resolution
    LabelMap mask;
    double weight = 1.0;
    std::string patient_id;
};

// Materializes every record of one split according to the config's data
// route. PNG routes read the 16-bit image + 8-bit mask PNG pair (the strict
// route re-validates stem pairing); the NIfTI route expands each volume per
// the slice strategy. Frames are robust-normalized, then resized with the
// mask (bilinear / nearest). Pseudo records are skipped unless
// config.pseudo_enabled.
std::vector<Sample> load_split(const Manifest& manifest, Split split, const RunConfig& config);

torch::Tensor frames_to_tensor(const std::vector<const FrameImage*>& frames);
torch::Tensor masks_to_tensor(const std::vector<const LabelMap*>& masks);

LabelMap labelmap_from_prediction(const torch::Tensor& logits_hw4); // argmax over classes

} // namespace echoseg
