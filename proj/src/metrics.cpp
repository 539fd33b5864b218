#include "echoseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace echoseg {

namespace {

void check_shapes(const LabelMap& pred, const LabelMap& gt) {
    if (pred.height != gt.height || pred.width != gt.width)
        throw Error(ErrorCode::ShapeMismatch, "prediction and ground truth shapes differ");
}

double mean_of(const std::array<double, kNumClasses>& values) {
    double sum = 0.0;
    for (double v : values) sum += v;
    return sum / kNumClasses;
}

// Directed distances between two point sets; scaled anisotropically when
// spacing is present.
struct DirectedStats {
    double max_min = 0.0;
    double sum_min = 0.0;
    size_t count = 0;
};

DirectedStats directed(const std::vector<std::pair<int, int>>& from,
                       const std::vector<std::pair<int, int>>& to, double sy, double sx) {
    DirectedStats stats;
    stats.count = from.size();
    for (const auto& [fy, fx] : from) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& [ty, tx] : to) {
            const double dy = (fy - ty) * sy;
            const double dx = (fx - tx) * sx;
            const double d2 = dy * dy + dx * dx;
            if (d2 < best) best = d2;
        }
        best = std::sqrt(best);
        stats.max_min = std::max(stats.max_min, best);
        stats.sum_min += best;
    }
    return stats;
}

std::pair<std::vector<std::pair<int, int>>, std::vector<std::pair<int, int>>> boundaries_for(
    const LabelMap& pred, const LabelMap& gt, int cls) {
    check_shapes(pred, gt);
    if (cls < 0 || cls >= kNumClasses)
        throw Error(ErrorCode::InvalidConfig, "class index outside {0..3}");
    auto bp = boundary_pixels(pred, cls);
    auto bg = boundary_pixels(gt, cls);
    if (bp.empty() || bg.empty())
        throw Error(ErrorCode::EmptyClass,
                    "class " + std::to_string(cls) + " empty in prediction or ground truth");
    return {std::move(bp), std::move(bg)};
}

} // namespace

std::vector<std::pair<int, int>> boundary_pixels(const LabelMap& map, int cls) {
    std::vector<std::pair<int, int>> out;
    const auto is_cls = [&](int y, int x) {
        if (y < 0 || y >= map.height || x < 0 || x >= map.width) return false;
        return map.at(y, x) == cls;
    };
    for (int y = 0; y < map.height; ++y) {
        for (int x = 0; x < map.width; ++x) {
            if (map.at(y, x) != cls) continue;
            if (!is_cls(y - 1, x) || !is_cls(y + 1, x) || !is_cls(y, x - 1) || !is_cls(y, x + 1))
                out.emplace_back(y, x);
        }
    }
    return out;
}

ConfusionMatrix confusion_matrix(const LabelMap& pred, const LabelMap& gt) {
    check_shapes(pred, gt);
    validate_labelmap(pred);
    validate_labelmap(gt);
    ConfusionMatrix cm;
    for (size_t i = 0; i < gt.labels.size(); ++i) cm.counts[gt.labels[i]][pred.labels[i]]++;
    return cm;
}

std::array<double, kNumClasses> dice_per_class(const ConfusionMatrix& cm) {
    std::array<double, kNumClasses> dice{};
    for (int c = 0; c < kNumClasses; ++c) {
        const int64_t tp = cm.counts[c][c];
        int64_t row = 0, col = 0;
        for (int k = 0; k < kNumClasses; ++k) {
            row += cm.counts[c][k];
            col += cm.counts[k][c];
        }
        const int64_t fn = row - tp;
        const int64_t fp = col - tp;
        const int64_t denom = 2 * tp + fp + fn;
        dice[c] = denom == 0 ? 1.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
    }
    return dice;
}

std::array<double, kNumClasses> iou_per_class(const ConfusionMatrix& cm) {
    std::array<double, kNumClasses> iou{};
    for (int c = 0; c < kNumClasses; ++c) {
        const int64_t tp = cm.counts[c][c];
        int64_t row = 0, col = 0;
        for (int k = 0; k < kNumClasses; ++k) {
            row += cm.counts[c][k];
            col += cm.counts[k][c];
        }
        const int64_t denom = row + col - tp; // TP + FP + FN
        iou[c] = denom == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(denom);
    }
    return iou;
}

double hausdorff_distance(const LabelMap& pred, const LabelMap& gt, int cls,
                          std::optional<std::pair<double, double>> spacing_mm) {
    const auto [bp, bg] = boundaries_for(pred, gt, cls);
    const double sx = spacing_mm ? spacing_mm->first : 1.0;
    const double sy = spacing_mm ? spacing_mm->second : 1.0;
    const DirectedStats fwd = directed(bp, bg, sy, sx);
    const DirectedStats bwd = directed(bg, bp, sy, sx);
    return std::max(fwd.max_min, bwd.max_min);
}

double average_surface_distance(const LabelMap& pred, const LabelMap& gt, int cls,
                                std::optional<std::pair<double, double>> spacing_mm) {
    const auto [bp, bg] = boundaries_for(pred, gt, cls);
    const double sx = spacing_mm ? spacing_mm->first : 1.0;
    const double sy = spacing_mm ? spacing_mm->second : 1.0;
    const DirectedStats fwd = directed(bp, bg, sy, sx);
    const DirectedStats bwd = directed(bg, bp, sy, sx);
    return (fwd.sum_min + bwd.sum_min) / static_cast<double>(fwd.count + bwd.count);
}

MetricReport report_from_confusion(const ConfusionMatrix& cm) {
    MetricReport report;
    report.per_class_dice = dice_per_class(cm);
    report.per_class_iou = iou_per_class(cm);
    report.mean_dice = mean_of(report.per_class_dice);
    report.mean_dice_foreground =
        (report.per_class_dice[1] + report.per_class_dice[2] + report.per_class_dice[3]) / 3.0;
    return report;
}

namespace {

MetricReport mean_of_reports(const std::vector<const MetricReport*>& reports) {
    MetricReport out;
    std::array<double, kNumClasses> hd_sum{}, asd_sum{};
    std::array<int, kNumClasses> hd_n{}, asd_n{};
    bool any_hd = false, any_asd = false;
    for (const MetricReport* r : reports) {
        for (int c = 0; c < kNumClasses; ++c) {
            out.per_class_dice[c] += r->per_class_dice[c];
            out.per_class_iou[c] += r->per_class_iou[c];
            if (r->hd && std::isfinite((*r->hd)[c])) {
                hd_sum[c] += (*r->hd)[c];
                hd_n[c]++;
                any_hd = true;
            }
            if (r->asd && std::isfinite((*r->asd)[c])) {
                asd_sum[c] += (*r->asd)[c];
                asd_n[c]++;
                any_asd = true;
            }
        }
    }
    const double n = static_cast<double>(reports.size());
    for (int c = 0; c < kNumClasses; ++c) {
        out.per_class_dice[c] /= n;
        out.per_class_iou[c] /= n;
    }
    out.mean_dice = mean_of(out.per_class_dice);
    out.mean_dice_foreground =
        (out.per_class_dice[1] + out.per_class_dice[2] + out.per_class_dice[3]) / 3.0;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    if (any_hd) {
        std::array<double, kNumClasses> hd{};
        for (int c = 0; c < kNumClasses; ++c) hd[c] = hd_n[c] ? hd_sum[c] / hd_n[c] : nan;
        out.hd = hd;
    }
    if (any_asd) {
        std::array<double, kNumClasses> asd{};
        for (int c = 0; c < kNumClasses; ++c) asd[c] = asd_n[c] ? asd_sum[c] / asd_n[c] : nan;
        out.asd = asd;
    }
    return out;
}

} // namespace

MetricReport aggregate_reports(const std::vector<MetricReport>& frame_reports,
                               AggregationMode mode) {
    if (frame_reports.empty()) throw Error(ErrorCode::EmptyInput, "no reports to aggregate");

    if (mode == AggregationMode::PerFrameMean) {
        std::vector<const MetricReport*> all;
        all.reserve(frame_reports.size());
        for (const auto& r : frame_reports) all.push_back(&r);
        return mean_of_reports(all);
    }

    std::map<std::string, std::vector<const MetricReport*>> by_patient;
    for (const auto& r : frame_reports) by_patient[r.patient_id].push_back(&r);

    std::vector<MetricReport> patient_means;
    patient_means.reserve(by_patient.size());
    for (const auto& [patient, reports] : by_patient) {
        MetricReport mean = mean_of_reports(reports);
        mean.patient_id = patient;
        patient_means.push_back(std::move(mean));
    }
    return aggregate_reports(patient_means, AggregationMode::PerFrameMean);
}

} // namespace echoseg
