#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "echoseg/types.hpp"

namespace echoseg {

struct NormalizationParams {
    double clip_lo_pct = 0.5;
    double clip_hi_pct = 99.5;
    // Center/scale estimators are fixed to median/stddev; kept explicit so a
    // run's resolved config records what was applied.
    std::string center = "median";
    std::string scale = "stddev";
};

// Percentile by linear interpolation on the sorted values, pct in [0, 100].
double percentile(std::vector<double> values, double pct);

// Clip to [p_lo, p_hi] of the frame, subtract the clipped median, divide by
// the clipped standard deviation. Constant frames map to all-zeros.
FrameImage robust_normalize(const FrameImage& frame, const NormalizationParams& params = {});

// Extracts frames from a NIfTI cine file. MIDDLE selects index floor(T/2),
// ALL returns every frame in order. When a sibling mask volume exists
// (same name with a _gt suffix), its frames are paired with the images.
std::vector<std::pair<FrameImage, std::optional<LabelMap>>> load_nifti_frames(
    const std::string& path, SliceStrategy strategy);

struct Png16Sidecar {
    std::string source_path;
    int frame_index = 0;
    double min = 0.0;
    double max = 0.0;
    bool degenerate_range = false;
};

// Writes a 16-bit grayscale PNG with intensities affinely mapped from
// [min, max] to [0, 65535], plus a JSON sidecar (<out_path>.json) recording
// the inverse mapping. Returns out_path.
std::string export_png16(const FrameImage& frame, const std::string& out_path);

Png16Sidecar read_png16_sidecar(const std::string& png_path);

// Loads a 16-bit PNG back into a FrameImage (raw stored values, no inverse
// mapping applied; normalization happens at training time).
FrameImage load_png16_frame(const std::string& path);

// Applies the sidecar's affine mapping to recover source intensities.
FrameImage load_png16_frame_restored(const std::string& path);

// 8-bit label-map PNG with raw values {0..3}; lossless.
std::string export_mask_png(const LabelMap& mask, const std::string& out_path);

LabelMap load_mask_png(const std::string& path);

// Bilinear for images, nearest-neighbor for masks; target in {224, 256, 512}.
std::pair<FrameImage, std::optional<LabelMap>> resize_pair(const FrameImage& frame,
                                                           const std::optional<LabelMap>& mask,
                                                           int target);

// Shared interpolation helpers (half-pixel-center convention).
std::vector<float> resize_bilinear(const std::vector<float>& src, int src_h, int src_w,
                                   int dst_h, int dst_w);
std::vector<uint8_t> resize_nearest(const std::vector<uint8_t>& src, int src_h, int src_w,
                                    int dst_h, int dst_w);

} // namespace echoseg
