#include "echoseg/types.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace echoseg {

namespace {

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

[[noreturn]] void bad_enum(const std::string& what, const std::string& value) {
    throw Error(ErrorCode::InvalidConfig, "unknown " + what + " '" + value + "'");
}

} // namespace

std::string to_string(SampleSource s) {
    return s == SampleSource::GroundTruth ? "ground_truth" : "pseudo";
}

std::string to_string(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
    }
    return "train";
}

std::string to_string(ModelKind k) {
    switch (k) {
        case ModelKind::UNet: return "unet";
        case ModelKind::AttUNet: return "att_unet";
        case ModelKind::TransUNetLite: return "transunet_lite";
    }
    return "unet";
}

std::string to_string(LossKind k) {
    switch (k) {
        case LossKind::CE: return "ce";
        case LossKind::CEDice: return "ce_dice";
        case LossKind::CEDiceFocal: return "ce_dice_focal";
    }
    return "ce";
}

std::string to_string(DataRoute r) {
    switch (r) {
        case DataRoute::NiftiDirect: return "nifti_direct";
        case DataRoute::Png16: return "png16";
        case DataRoute::Png16Strict: return "png16_strict";
    }
    return "png16";
}

std::string to_string(SliceStrategy s) {
    return s == SliceStrategy::Middle ? "middle" : "all";
}

SampleSource sample_source_from_string(const std::string& s) {
    const std::string v = lower(s);
    if (v == "ground_truth" || v == "gt") return SampleSource::GroundTruth;
    if (v == "pseudo") return SampleSource::Pseudo;
    bad_enum("sample source", s);
}

Split split_from_string(const std::string& s) {
    const std::string v = lower(s);
    if (v == "train") return Split::Train;
    if (v == "val") return Split::Val;
    if (v == "test") return Split::Test;
    bad_enum("split", s);
}

ModelKind model_kind_from_string(const std::string& s) {
    const std::string v = lower(s);
    if (v == "unet") return ModelKind::UNet;
    if (v == "att_unet" || v == "attention_unet") return ModelKind::AttUNet;
    if (v == "transunet_lite" || v == "transunet") return ModelKind::TransUNetLite;
    bad_enum("model", s);
}

LossKind loss_kind_from_string(const std::string& s) {
    const std::string v = lower(s);
    if (v == "ce") return LossKind::CE;
    if (v == "ce_dice") return LossKind::CEDice;
    if (v == "ce_dice_focal") return LossKind::CEDiceFocal;
    bad_enum("loss", s);
}

DataRoute data_route_from_string(const std::string& s) {
    const std::string v = lower(s);
    if (v == "nifti_direct" || v == "nifti") return DataRoute::NiftiDirect;
    if (v == "png16") return DataRoute::Png16;
    if (v == "png16_strict") return DataRoute::Png16Strict;
    bad_enum("data route", s);
}

SliceStrategy slice_strategy_from_string(const std::string& s) {
    const std::string v = lower(s);
    if (v == "middle") return SliceStrategy::Middle;
    if (v == "all") return SliceStrategy::All;
    bad_enum("slice strategy", s);
}

void validate_frame(const FrameImage& frame) {
    if (frame.height < 16 || frame.width < 16)
        throw Error(ErrorCode::ShapeMismatch,
                    "frame must be at least 16x16, got " + std::to_string(frame.height) + "x" +
                        std::to_string(frame.width));
    if (frame.pixels.size() != static_cast<size_t>(frame.height) * frame.width)
        throw Error(ErrorCode::ShapeMismatch, "pixel buffer does not match frame shape");
    for (size_t i = 0; i < frame.pixels.size(); ++i) {
        const float v = frame.pixels[i];
        if (!std::isfinite(v))
            throw Error(ErrorCode::ShapeMismatch,
                        "non-finite intensity at linear index " + std::to_string(i));
        if (frame.source_format == SourceFormat::Png16 && (v < 0.0f || v > 65535.0f))
            throw Error(ErrorCode::ShapeMismatch,
                        "PNG16 intensity out of [0, 65535] at linear index " + std::to_string(i));
    }
}

LabelMap validate_labelmap(const LabelMap& labels) {
    if (labels.labels.size() != static_cast<size_t>(labels.height) * labels.width)
        throw Error(ErrorCode::ShapeMismatch, "label buffer does not match map shape");
    for (int y = 0; y < labels.height; ++y) {
        for (int x = 0; x < labels.width; ++x) {
            const int v = labels.at(y, x);
            if (v < 0 || v >= kNumClasses) {
                std::ostringstream oss;
                oss << "label " << v << " at (" << y << ", " << x << ") outside {0..3}";
                throw Error(ErrorCode::OutOfRangeLabel, oss.str());
            }
        }
    }
    return labels;
}

LabelMap validate_labelmap(const std::vector<int>& labels, int height, int width) {
    if (labels.size() != static_cast<size_t>(height) * width)
        throw Error(ErrorCode::ShapeMismatch, "label buffer does not match map shape");
    LabelMap out;
    out.height = height;
    out.width = width;
    out.labels.resize(labels.size());
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const int v = labels[static_cast<size_t>(y) * width + x];
            if (v < 0 || v >= kNumClasses) {
                std::ostringstream oss;
                oss << "label " << v << " at (" << y << ", " << x << ") outside {0..3}";
                throw Error(ErrorCode::OutOfRangeLabel, oss.str());
            }
            out.at(y, x) = static_cast<uint8_t>(v);
        }
    }
    return out;
}

void validate_record(const SampleRecord& record) {
    if (!(record.weight > 0.0 && record.weight <= 1.0))
        throw Error(ErrorCode::InvalidConfig,
                    "sample weight must lie in (0, 1], got " + std::to_string(record.weight));
    if (record.image_path.empty() || record.mask_path.empty())
        throw Error(ErrorCode::InvalidConfig, "record must name both image and mask paths");
}

void validate_config(const RunConfig& config) {
    if (config.resolution != 256 && config.resolution != 512)
        throw Error(ErrorCode::InvalidConfig, "resolution must be 256 or 512");
    if (config.batch_size < 4 || config.batch_size > 8)
        throw Error(ErrorCode::InvalidConfig, "batch_size must lie in [4, 8]");
    if (config.epochs <= 0) throw Error(ErrorCode::InvalidConfig, "epochs must be positive");
    if (config.lr <= 0.0) throw Error(ErrorCode::InvalidConfig, "lr must be positive");
    if (config.lr_step <= 0) throw Error(ErrorCode::InvalidConfig, "lr_step must be positive");
    if (config.lr_gamma <= 0.0) throw Error(ErrorCode::InvalidConfig, "lr_gamma must be positive");
    if (config.grad_clip_norm <= 0.0)
        throw Error(ErrorCode::InvalidConfig, "grad_clip_norm must be positive");
}

} // namespace echoseg
