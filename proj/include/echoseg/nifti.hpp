#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace echoseg {

// Minimal NIfTI-1 volume support (.nii and .nii.gz). Covers the 2-D frame /
// 2-D+time layouts used by echo cine data; true 3-D volumes are rejected.
struct NiftiVolume {
    int width = 0;    // nx, fastest-varying axis
    int height = 0;   // ny
    int frames = 0;   // time / stacked-slice axis, 1 for plain 2-D files
    double spacing_x = 1.0; // pixdim[1]
    double spacing_y = 1.0; // pixdim[2]
    bool has_spacing = false;
    // Frame-major data, each frame row-major: data[f][y * width + x].
    std::vector<float> data;

    const float* frame(int f) const { return data.data() + static_cast<size_t>(f) * width * height; }
};

// Throws UNREADABLE_VOLUME for unsupported headers and EMPTY_VOLUME when the
// frame axis is zero.
NiftiVolume read_nifti(const std::string& path);

// Test and fixture support: writes float32 or uint8 data, gzipped when the
// path ends in .gz.
void write_nifti(const std::string& path, const NiftiVolume& volume, bool as_uint8 = false);

} // namespace echoseg
