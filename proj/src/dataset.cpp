#include "echoseg/dataset.hpp"

#include <cstring>
#include <filesystem>

#include "echoseg/preprocessing.hpp"

namespace fs = std::filesystem;

namespace echoseg {

namespace {

Sample finalize_sample(FrameImage frame, LabelMap mask, const SampleRecord& record,
                       const RunConfig& config) {
    FrameImage normalized = robust_normalize(frame);
    if (normalized.spacing_mm && normalized.width > 0 && normalized.height > 0) {
        const double fx = static_cast<double>(normalized.width) / config.resolution;
        const double fy = static_cast<double>(normalized.height) / config.resolution;
        normalized.spacing_mm = {normalized.spacing_mm->first * fx,
                                 normalized.spacing_mm->second * fy};
    }
    auto [resized_frame, resized_mask] =
        resize_pair(normalized, std::optional<LabelMap>(std::move(mask)), config.resolution);
    Sample sample;
    sample.frame = std::move(resized_frame);
    sample.mask = std::move(*resized_mask);
    sample.weight = record.weight;
    sample.patient_id = record.patient_id;
    return sample;
}

} // namespace

std::vector<Sample> load_split(const Manifest& manifest, Split split, const RunConfig& config) {
    validate_config(config);
    std::vector<Sample> samples;
    for (const auto& record : manifest.records) {
        if (record.split != split) continue;
        if (record.source == SampleSource::Pseudo && !config.pseudo_enabled) continue;

        if (config.data_route == DataRoute::NiftiDirect) {
            // image and mask volumes expanded per slice strategy
            const auto frames = load_nifti_frames(record.image_path, config.slice_strategy);
            for (const auto& [frame, mask] : frames) {
                if (!mask)
                    throw Error(ErrorCode::IoReadFailure,
                                record.image_path + " has no paired mask volume");
                samples.push_back(finalize_sample(frame, *mask, record, config));
            }
        } else {
            if (config.data_route == DataRoute::Png16Strict &&
                normalize_stem(record.image_path) != normalize_stem(record.mask_path))
                throw Error(ErrorCode::ShapeMismatch,
                            "strict route: stems differ for " + record.image_path + " / " +
                                record.mask_path);
            FrameImage frame = load_png16_frame(record.image_path);
            frame.patient_id = record.patient_id;
            LabelMap mask = load_mask_png(record.mask_path);
            if (mask.height != frame.height || mask.width != frame.width)
                throw Error(ErrorCode::ShapeMismatch,
                            "image and mask shapes differ for " + record.image_path);
            samples.push_back(finalize_sample(std::move(frame), std::move(mask), record, config));
        }
    }
    return samples;
}

torch::Tensor frames_to_tensor(const std::vector<const FrameImage*>& frames) {
    if (frames.empty()) throw Error(ErrorCode::EmptyInput, "no frames to batch");
    const int h = frames.front()->height, w = frames.front()->width;
    auto batch = torch::empty({static_cast<int64_t>(frames.size()), 1, h, w});
    for (size_t i = 0; i < frames.size(); ++i) {
        if (frames[i]->height != h || frames[i]->width != w)
            throw Error(ErrorCode::ShapeMismatch, "batched frames must share one shape");
        std::memcpy(batch[i].data_ptr<float>(), frames[i]->pixels.data(),
                    frames[i]->pixels.size() * sizeof(float));
    }
    return batch;
}

torch::Tensor masks_to_tensor(const std::vector<const LabelMap*>& masks) {
    if (masks.empty()) throw Error(ErrorCode::EmptyInput, "no masks to batch");
    const int h = masks.front()->height, w = masks.front()->width;
    auto batch = torch::empty({static_cast<int64_t>(masks.size()), h, w}, torch::kInt64);
    for (size_t i = 0; i < masks.size(); ++i) {
        if (masks[i]->height != h || masks[i]->width != w)
            throw Error(ErrorCode::ShapeMismatch, "batched masks must share one shape");
        auto* dst = batch[i].data_ptr<int64_t>();
        for (size_t p = 0; p < masks[i]->labels.size(); ++p) dst[p] = masks[i]->labels[p];
    }
    return batch;
}

LabelMap labelmap_from_prediction(const torch::Tensor& logits) {
    if (logits.dim() != 3 || logits.size(0) != kNumClasses)
        throw Error(ErrorCode::ShapeMismatch, "expected (4, H, W) logits");
    const auto pred = logits.argmax(0).to(torch::kUInt8).contiguous();
    LabelMap map;
    map.height = static_cast<int>(pred.size(0));
    map.width = static_cast<int>(pred.size(1));
    map.labels.resize(static_cast<size_t>(map.height) * map.width);
    std::memcpy(map.labels.data(), pred.data_ptr<uint8_t>(), map.labels.size());
    return map;
}

} // namespace echoseg
