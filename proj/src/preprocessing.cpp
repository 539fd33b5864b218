#include "echoseg/preprocessing.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "echoseg/nifti.hpp"
#include "echoseg/png_io.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace echoseg {

double percentile(std::vector<double> values, double pct) {
    if (values.empty()) throw Error(ErrorCode::EmptyInput, "percentile of empty set");
    if (pct < 0.0 || pct > 100.0)
        throw Error(ErrorCode::InvalidConfig, "percentile must lie in [0, 100]");
    std::sort(values.begin(), values.end());
    const double rank = pct / 100.0 * static_cast<double>(values.size() - 1);
    const size_t lo = static_cast<size_t>(std::floor(rank));
    const size_t hi = static_cast<size_t>(std::ceil(rank));
    const double frac = rank - static_cast<double>(lo);
    return values[lo] + (values[hi] - values[lo]) * frac;
}

FrameImage robust_normalize(const FrameImage& frame, const NormalizationParams& params) {
    if (!(params.clip_lo_pct >= 0.0 && params.clip_lo_pct < params.clip_hi_pct &&
          params.clip_hi_pct <= 100.0))
        throw Error(ErrorCode::InvalidConfig, "clip percentiles must satisfy 0 <= lo < hi <= 100");

    std::vector<double> values(frame.pixels.begin(), frame.pixels.end());
    if (values.empty()) throw Error(ErrorCode::EmptyInput, "cannot normalize an empty frame");

    const double lo = percentile(values, params.clip_lo_pct);
    const double hi = percentile(values, params.clip_hi_pct);

    std::vector<double> clipped(values.size());
    for (size_t i = 0; i < values.size(); ++i) clipped[i] = std::clamp(values[i], lo, hi);

    std::vector<double> sorted = clipped;
    std::sort(sorted.begin(), sorted.end());
    const size_t n = sorted.size();
    const double median =
        n % 2 == 1 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);

    double mean = 0.0;
    for (double v : clipped) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : clipped) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    const double stddev = std::sqrt(var);

    FrameImage out = frame;
    if (stddev <= 0.0) {
        std::fill(out.pixels.begin(), out.pixels.end(), 0.0f);
        return out;
    }
    for (size_t i = 0; i < clipped.size(); ++i)
        out.pixels[i] = static_cast<float>((clipped[i] - median) / stddev);
    return out;
}

namespace {

std::string sibling_mask_path(const std::string& path) {
    // patientXXXX_2CH_ED.nii.gz -> patientXXXX_2CH_ED_gt.nii.gz
    std::string base = path;
    std::string ext;
    for (const char* candidate : {".nii.gz", ".nii"}) {
        if (base.size() > std::strlen(candidate) &&
            base.compare(base.size() - std::strlen(candidate), std::string::npos, candidate) == 0) {
            ext = candidate;
            base.resize(base.size() - ext.size());
            break;
        }
    }
    if (ext.empty()) return {};
    return base + "_gt" + ext;
}

std::string parse_patient_token(const std::string& path) {
    const std::string stem = fs::path(path).filename().string();
    if (stem.rfind("patient", 0) == 0) {
        size_t end = 7;
        while (end < stem.size() && std::isdigit(static_cast<unsigned char>(stem[end]))) ++end;
        if (end > 7) return stem.substr(0, end);
    }
    const size_t underscore = stem.find('_');
    return underscore == std::string::npos ? fs::path(stem).stem().string()
                                           : stem.substr(0, underscore);
}

View parse_view(const std::string& name) {
    if (name.find("2CH") != std::string::npos) return View::CH2;
    if (name.find("4CH") != std::string::npos) return View::CH4;
    return View::Unknown;
}

Phase parse_phase(const std::string& name) {
    if (name.find("_ED") != std::string::npos) return Phase::ED;
    if (name.find("_ES") != std::string::npos) return Phase::ES;
    return Phase::Unlabeled;
}

} // namespace

std::vector<std::pair<FrameImage, std::optional<LabelMap>>> load_nifti_frames(
    const std::string& path, SliceStrategy strategy) {
    const NiftiVolume volume = read_nifti(path);
    if (volume.frames == 0) throw Error(ErrorCode::EmptyVolume, "no frames in " + path);

    std::optional<NiftiVolume> masks;
    const std::string mask_path = sibling_mask_path(path);
    if (!mask_path.empty() && fs::exists(mask_path)) {
        masks = read_nifti(mask_path);
        if (masks->width != volume.width || masks->height != volume.height ||
            masks->frames != volume.frames)
            throw Error(ErrorCode::ShapeMismatch, "mask volume shape differs from image: " + path);
    }

    std::vector<int> indices;
    if (strategy == SliceStrategy::Middle) {
        indices.push_back(volume.frames / 2);
    } else {
        indices.resize(volume.frames);
        for (int i = 0; i < volume.frames; ++i) indices[i] = i;
    }

    const std::string name = fs::path(path).filename().string();
    std::vector<std::pair<FrameImage, std::optional<LabelMap>>> out;
    out.reserve(indices.size());
    for (int idx : indices) {
        FrameImage frame;
        frame.height = volume.height;
        frame.width = volume.width;
        frame.source_format = SourceFormat::NiftiFloat;
        frame.patient_id = parse_patient_token(path);
        frame.view = parse_view(name);
        frame.phase = parse_phase(name);
        frame.frame_index = idx;
        if (volume.has_spacing) frame.spacing_mm = {volume.spacing_x, volume.spacing_y};
        const float* src = volume.frame(idx);
        frame.pixels.assign(src, src + static_cast<size_t>(volume.width) * volume.height);
        validate_frame(frame);

        std::optional<LabelMap> mask;
        if (masks) {
            LabelMap lm;
            lm.height = masks->height;
            lm.width = masks->width;
            lm.labels.resize(static_cast<size_t>(lm.height) * lm.width);
            const float* msrc = masks->frame(idx);
            for (size_t i = 0; i < lm.labels.size(); ++i) {
                const int v = static_cast<int>(std::lround(msrc[i]));
                if (v < 0 || v >= kNumClasses)
                    throw Error(ErrorCode::OutOfRangeLabel,
                                "mask value " + std::to_string(v) + " in " + mask_path);
                lm.labels[i] = static_cast<uint8_t>(v);
            }
            mask = std::move(lm);
        }
        out.emplace_back(std::move(frame), std::move(mask));
    }
    return out;
}

std::string export_png16(const FrameImage& frame, const std::string& out_path) {
    validate_frame(frame);
    double mn = frame.pixels[0], mx = frame.pixels[0];
    for (float v : frame.pixels) {
        mn = std::min(mn, static_cast<double>(v));
        mx = std::max(mx, static_cast<double>(v));
    }
    const bool degenerate = !(mx > mn);
    const double scale = degenerate ? 0.0 : 65535.0 / (mx - mn);

    std::vector<uint16_t> quantized(frame.pixels.size());
    for (size_t i = 0; i < quantized.size(); ++i) {
        const double mapped = (static_cast<double>(frame.pixels[i]) - mn) * scale;
        quantized[i] = static_cast<uint16_t>(std::lround(std::clamp(mapped, 0.0, 65535.0)));
    }
    write_png16(out_path, quantized.data(), frame.height, frame.width);

    json sidecar = {{"source_path", frame.patient_id.empty() ? out_path : frame.patient_id},
                    {"frame_index", frame.frame_index},
                    {"min", mn},
                    {"max", mx},
                    {"degenerate_range", degenerate}};
    std::ofstream meta(out_path + ".json");
    if (!meta) throw Error(ErrorCode::IoWriteFailure, "cannot write sidecar for " + out_path);
    meta << sidecar.dump(2) << "\n";
    return out_path;
}

Png16Sidecar read_png16_sidecar(const std::string& png_path) {
    std::ifstream meta(png_path + ".json");
    if (!meta) throw Error(ErrorCode::IoReadFailure, "missing sidecar for " + png_path);
    json j = json::parse(meta, nullptr, false);
    if (j.is_discarded() || !j.contains("min") || !j.contains("max"))
        throw Error(ErrorCode::MalformedRecord, "invalid sidecar for " + png_path);
    Png16Sidecar sidecar;
    sidecar.source_path = j.value("source_path", "");
    sidecar.frame_index = j.value("frame_index", 0);
    sidecar.min = j["min"].get<double>();
    sidecar.max = j["max"].get<double>();
    sidecar.degenerate_range = j.value("degenerate_range", false);
    return sidecar;
}

FrameImage load_png16_frame(const std::string& path) {
    const Png16 png = read_png16(path);
    FrameImage frame;
    frame.height = png.height;
    frame.width = png.width;
    frame.source_format = SourceFormat::Png16;
    frame.pixels.resize(png.pixels.size());
    for (size_t i = 0; i < png.pixels.size(); ++i) frame.pixels[i] = png.pixels[i];
    const std::string stem = fs::path(path).filename().string();
    frame.patient_id = parse_patient_token(path);
    frame.view = parse_view(stem);
    frame.phase = parse_phase(stem);
    return frame;
}

FrameImage load_png16_frame_restored(const std::string& path) {
    FrameImage frame = load_png16_frame(path);
    const Png16Sidecar sidecar = read_png16_sidecar(path);
    const double span = sidecar.max - sidecar.min;
    for (auto& v : frame.pixels)
        v = static_cast<float>(sidecar.min + (span <= 0.0 ? 0.0 : v / 65535.0 * span));
    frame.source_format = SourceFormat::NiftiFloat;
    return frame;
}

std::string export_mask_png(const LabelMap& mask, const std::string& out_path) {
    validate_labelmap(mask);
    write_png8(out_path, mask.labels.data(), mask.height, mask.width);
    return out_path;
}

LabelMap load_mask_png(const std::string& path) {
    const Png8 png = read_png8(path);
    LabelMap mask;
    mask.height = png.height;
    mask.width = png.width;
    mask.labels = png.pixels;
    return validate_labelmap(mask);
}

std::vector<float> resize_bilinear(const std::vector<float>& src, int src_h, int src_w,
                                   int dst_h, int dst_w) {
    std::vector<float> dst(static_cast<size_t>(dst_h) * dst_w);
    const double sy = static_cast<double>(src_h) / dst_h;
    const double sx = static_cast<double>(src_w) / dst_w;
    for (int y = 0; y < dst_h; ++y) {
        const double fy = (y + 0.5) * sy - 0.5;
        const int y0 = std::clamp(static_cast<int>(std::floor(fy)), 0, src_h - 1);
        const int y1 = std::min(y0 + 1, src_h - 1);
        const double wy = std::clamp(fy - y0, 0.0, 1.0);
        for (int x = 0; x < dst_w; ++x) {
            const double fx = (x + 0.5) * sx - 0.5;
            const int x0 = std::clamp(static_cast<int>(std::floor(fx)), 0, src_w - 1);
            const int x1 = std::min(x0 + 1, src_w - 1);
            const double wx = std::clamp(fx - x0, 0.0, 1.0);
            const double top = src[static_cast<size_t>(y0) * src_w + x0] * (1.0 - wx) +
                               src[static_cast<size_t>(y0) * src_w + x1] * wx;
            const double bot = src[static_cast<size_t>(y1) * src_w + x0] * (1.0 - wx) +
                               src[static_cast<size_t>(y1) * src_w + x1] * wx;
            dst[static_cast<size_t>(y) * dst_w + x] = static_cast<float>(top * (1.0 - wy) + bot * wy);
        }
    }
    return dst;
}

std::vector<uint8_t> resize_nearest(const std::vector<uint8_t>& src, int src_h, int src_w,
                                    int dst_h, int dst_w) {
    std::vector<uint8_t> dst(static_cast<size_t>(dst_h) * dst_w);
    for (int y = 0; y < dst_h; ++y) {
        const int sy = std::min(static_cast<int>((y + 0.5) * src_h / dst_h), src_h - 1);
        for (int x = 0; x < dst_w; ++x) {
            const int sx = std::min(static_cast<int>((x + 0.5) * src_w / dst_w), src_w - 1);
            dst[static_cast<size_t>(y) * dst_w + x] = src[static_cast<size_t>(sy) * src_w + sx];
        }
    }
    return dst;
}

std::pair<FrameImage, std::optional<LabelMap>> resize_pair(const FrameImage& frame,
                                                           const std::optional<LabelMap>& mask,
                                                           int target) {
    if (target != 224 && target != 256 && target != 512)
        throw Error(ErrorCode::InvalidTarget, "resize target must be one of {224, 256, 512}");
    if (mask && (mask->height != frame.height || mask->width != frame.width))
        throw Error(ErrorCode::ShapeMismatch, "mask shape differs from frame");

    FrameImage out_frame = frame;
    if (frame.height != target || frame.width != target) {
        out_frame.pixels = resize_bilinear(frame.pixels, frame.height, frame.width, target, target);
        out_frame.height = target;
        out_frame.width = target;
    }

    std::optional<LabelMap> out_mask;
    if (mask) {
        LabelMap m = *mask;
        if (mask->height != target || mask->width != target) {
            m.labels = resize_nearest(mask->labels, mask->height, mask->width, target, target);
            m.height = target;
            m.width = target;
        }
        out_mask = std::move(m);
    }
    return {std::move(out_frame), std::move(out_mask)};
}

} // namespace echoseg
