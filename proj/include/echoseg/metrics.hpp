#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "echoseg/types.hpp"

namespace echoseg {

// rows = ground-truth class, cols = predicted class
struct ConfusionMatrix {
    std::array<std::array<int64_t, kNumClasses>, kNumClasses> counts{};

    int64_t total() const {
        int64_t t = 0;
        for (const auto& row : counts)
            for (int64_t c : row) t += c;
        return t;
    }
    void accumulate(const ConfusionMatrix& other) {
        for (int g = 0; g < kNumClasses; ++g)
            for (int p = 0; p < kNumClasses; ++p) counts[g][p] += other.counts[g][p];
    }
};

struct MetricReport {
    std::array<double, kNumClasses> per_class_dice{};
    double mean_dice = 0.0;            // arithmetic mean of all 4 classes
    double mean_dice_foreground = 0.0; // classes 1..3 only, reported alongside
    std::array<double, kNumClasses> per_class_iou{};
    // NaN marks classes where the metric is undefined (class empty on a side).
    std::optional<std::array<double, kNumClasses>> hd;
    std::optional<std::array<double, kNumClasses>> asd;
    std::string patient_id; // used by per-patient aggregation
};

enum class AggregationMode { PerFrameMean, PerPatientMean };

ConfusionMatrix confusion_matrix(const LabelMap& pred, const LabelMap& gt);

// Dice = 2TP/(2TP+FP+FN) per class; a class empty in both maps scores 1.
std::array<double, kNumClasses> dice_per_class(const ConfusionMatrix& cm);

// IoU = TP/(TP+FP+FN) per class; both-empty convention as for Dice.
std::array<double, kNumClasses> iou_per_class(const ConfusionMatrix& cm);

// Maximum of the two directed max-min distances between boundary pixels of
// class cls. A boundary pixel belongs to the class and has a 4-neighbor
// outside it (image border counts as outside). spacing, when given, converts
// the distance to mm.
double hausdorff_distance(const LabelMap& pred, const LabelMap& gt, int cls,
                          std::optional<std::pair<double, double>> spacing_mm = std::nullopt);

// Symmetric mean of nearest-boundary distances.
double average_surface_distance(const LabelMap& pred, const LabelMap& gt, int cls,
                                std::optional<std::pair<double, double>> spacing_mm = std::nullopt);

MetricReport report_from_confusion(const ConfusionMatrix& cm);

MetricReport aggregate_reports(const std::vector<MetricReport>& frame_reports,
                               AggregationMode mode);

// Boundary pixels of one class as (y, x) pairs, exposed for reuse and tests.
std::vector<std::pair<int, int>> boundary_pixels(const LabelMap& map, int cls);

} // namespace echoseg
