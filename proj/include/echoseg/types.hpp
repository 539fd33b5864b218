#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "echoseg/error.hpp"

namespace echoseg {

// Global class encoding shared by every module:
// 0 = background, 1 = LV endocardium, 2 = LV myocardium, 3 = left atrium.
inline constexpr int kNumClasses = 4;

enum class SourceFormat { NiftiFloat, Png16 };
enum class View { CH2, CH4, Unknown };
enum class Phase { ED, ES, Unlabeled };
enum class SampleSource { GroundTruth, Pseudo };
enum class Split { Train, Val, Test };
enum class ModelKind { UNet, AttUNet, TransUNetLite };
enum class LossKind { CE, CEDice, CEDiceFocal };
enum class DataRoute { NiftiDirect, Png16, Png16Strict };
enum class SliceStrategy { Middle, All };

std::string to_string(SampleSource s);
std::string to_string(Split s);
std::string to_string(ModelKind k);
std::string to_string(LossKind k);
std::string to_string(DataRoute r);
std::string to_string(SliceStrategy s);

SampleSource sample_source_from_string(const std::string& s);
Split split_from_string(const std::string& s);
ModelKind model_kind_from_string(const std::string& s);
LossKind loss_kind_from_string(const std::string& s);
DataRoute data_route_from_string(const std::string& s);
SliceStrategy slice_strategy_from_string(const std::string& s);

// One 2-D grayscale echo frame, row-major float intensities.
struct FrameImage {
    std::vector<float> pixels;
    int height = 0;
    int width = 0;
    SourceFormat source_format = SourceFormat::NiftiFloat;
    std::string patient_id;
    View view = View::Unknown;
    Phase phase = Phase::Unlabeled;
    int frame_index = 0;
    // Pixel spacing (mm) from the NIfTI header when available; used only for
    // boundary metrics in mm.
    std::optional<std::pair<double, double>> spacing_mm;

    float& at(int y, int x) { return pixels[static_cast<size_t>(y) * width + x]; }
    float at(int y, int x) const { return pixels[static_cast<size_t>(y) * width + x]; }
    size_t size() const { return pixels.size(); }
};

// Validates shape and finiteness invariants (height/width >= 16, no NaN/Inf).
void validate_frame(const FrameImage& frame);

// Integer class mask aligned to a frame. Values are restricted to {0..3}.
struct LabelMap {
    std::vector<uint8_t> labels;
    int height = 0;
    int width = 0;
    static constexpr int class_count = kNumClasses;

    uint8_t& at(int y, int x) { return labels[static_cast<size_t>(y) * width + x]; }
    uint8_t at(int y, int x) const { return labels[static_cast<size_t>(y) * width + x]; }
    size_t size() const { return labels.size(); }
};

// Checks every value lies in {0..3}; reports the first offending value and
// its coordinates otherwise.
LabelMap validate_labelmap(const LabelMap& labels);
LabelMap validate_labelmap(const std::vector<int>& labels, int height, int width);

// One image-mask pair in a manifest.
struct SampleRecord {
    std::string image_path;
    std::string mask_path;
    SampleSource source = SampleSource::GroundTruth;
    double weight = 1.0;
    std::string patient_id;
    Split split = Split::Train;
};

inline constexpr double kGroundTruthWeight = 1.0;
inline constexpr double kPseudoWeight = 0.5;

// Rejects records whose weight/source pairing or weight range is invalid.
void validate_record(const SampleRecord& record);

// One SAM-proposed region after decoding, before filtering.
struct SamMaskCandidate {
    std::vector<uint8_t> mask; // row-major, 0/1
    int height = 0;
    int width = 0;
    double predicted_iou = 0.0;
    int64_t area = 0;
    double stability_score = 0.0;
};

// Full experiment configuration. Defaults follow the benchmark protocol:
// Adam lr 1e-4, weight decay 1e-4, step decay 0.1 every 10 epochs,
// gradient clipping at max-norm 1.0.
struct RunConfig {
    ModelKind model = ModelKind::UNet;
    int resolution = 256; // 256 or 512
    LossKind loss = LossKind::CEDice;
    double lr = 1e-4;
    double weight_decay = 1e-4;
    int batch_size = 8; // 4..8
    int epochs = 40;
    int lr_step = 10;
    double lr_gamma = 0.1;
    double grad_clip_norm = 1.0;
    uint64_t seed = 0;
    DataRoute data_route = DataRoute::Png16;
    SliceStrategy slice_strategy = SliceStrategy::Middle;
    bool ssl_init = false;
    bool pseudo_enabled = false;
};

void validate_config(const RunConfig& config);

} // namespace echoseg
