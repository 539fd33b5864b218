#pragma once

#include <string>
#include <vector>

#include "echoseg/manifest.hpp"
#include "echoseg/types.hpp"

namespace echoseg {

// Retention rules for SAM candidates. The three rules combine as a union:
// keep if pred_iou >= iou_threshold, or area >= min_area, or among the top_k
// by score.
struct FilterPolicy {
    double iou_threshold = 0.7;
    int64_t min_area = 200;
    int top_k = 3;

    void validate() const;
};

// One JSON file per frame: a list of objects with predicted_iou, area,
// stability_score and a segmentation that is either column-major run-length
// counts ({"size":[h,w],"counts":[...]}, zeros first) or a base64 row-major
// bit string ({"size":[h,w],"bits":"..."}).
std::vector<SamMaskCandidate> parse_sam_record(const std::string& json_path);

// Writer counterpart (run-length form), used by fixtures and the CLI.
void write_sam_record(const std::string& json_path, const std::vector<SamMaskCandidate>& candidates);

std::vector<int64_t> encode_rle(const std::vector<uint8_t>& mask, int height, int width);
std::vector<uint8_t> decode_rle(const std::vector<int64_t>& counts, int height, int width);

std::vector<SamMaskCandidate> filter_masks(const std::vector<SamMaskCandidate>& candidates,
                                           const FilterPolicy& policy);

// Candidate ranked i by predicted_iou paints class i+1; overlaps keep the
// higher-ranked class; at most 3 candidates are used.
LabelMap merge_to_labelmap(const std::vector<SamMaskCandidate>& retained,
                           std::pair<int, int> shape);

// Class colors shared with the overlay renderer: 1=red, 2=green, 3=blue.
std::array<std::array<uint8_t, 3>, kNumClasses> class_palette();

void write_class_visualization(const LabelMap& mask, const std::string& out_path);

Manifest build_pseudo_manifest(const std::string& labelmap_dir, const std::string& image_dir,
                               const std::string& patient_prefix = "");

struct PseudoScore {
    std::array<double, kNumClasses> dice{};
    size_t frames = 0;
};

// Per-class Dice of pseudo masks against ground truth over the stem
// intersection of the two manifests (confusion counts pooled across frames).
PseudoScore score_pseudo_labels(const Manifest& pseudo, const Manifest& gt);

struct CurateResult {
    std::string labelmap_path;
    std::string visualization_path;
    size_t candidates_in = 0;
    size_t candidates_kept = 0;
};

// Full per-frame curation: parse -> filter -> merge -> write label map + RGB
// visualization next to out_dir.
CurateResult curate_sam_record(const std::string& json_path, std::pair<int, int> shape,
                               const FilterPolicy& policy, const std::string& out_dir);

} // namespace echoseg
