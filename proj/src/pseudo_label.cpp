#include "echoseg/pseudo_label.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

#include <nlohmann/json.hpp>

#include "echoseg/metrics.hpp"
#include "echoseg/png_io.hpp"
#include "echoseg/preprocessing.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace echoseg {

void FilterPolicy::validate() const {
    if (iou_threshold < 0.0 || iou_threshold > 1.0)
        throw Error(ErrorCode::InvalidConfig, "iou_threshold must lie in [0, 1]");
    if (min_area < 0) throw Error(ErrorCode::InvalidConfig, "min_area must be >= 0");
    if (top_k < 1) throw Error(ErrorCode::InvalidConfig, "top_k must be >= 1");
}

namespace {

const char kBase64Chars[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string base64_encode(const std::vector<uint8_t>& bytes) {
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    for (size_t i = 0; i < bytes.size(); i += 3) {
        uint32_t block = bytes[i] << 16;
        if (i + 1 < bytes.size()) block |= bytes[i + 1] << 8;
        if (i + 2 < bytes.size()) block |= bytes[i + 2];
        out.push_back(kBase64Chars[(block >> 18) & 63]);
        out.push_back(kBase64Chars[(block >> 12) & 63]);
        out.push_back(i + 1 < bytes.size() ? kBase64Chars[(block >> 6) & 63] : '=');
        out.push_back(i + 2 < bytes.size() ? kBase64Chars[block & 63] : '=');
    }
    return out;
}

std::vector<uint8_t> base64_decode(const std::string& text) {
    std::array<int8_t, 256> lut;
    lut.fill(-1);
    for (int i = 0; i < 64; ++i) lut[static_cast<unsigned char>(kBase64Chars[i])] = static_cast<int8_t>(i);

    std::vector<uint8_t> out;
    uint32_t block = 0;
    int bits = 0;
    for (char c : text) {
        if (c == '=' || c == '\n' || c == '\r') continue;
        const int8_t v = lut[static_cast<unsigned char>(c)];
        if (v < 0) throw Error(ErrorCode::MalformedRecord, "invalid base64 character");
        block = (block << 6) | static_cast<uint32_t>(v);
        bits += 6;
        if (bits >= 8) {
            bits -= 8;
            out.push_back(static_cast<uint8_t>((block >> bits) & 0xff));
        }
    }
    return out;
}

// Row-major bit packing, MSB first within each byte.
std::vector<uint8_t> unpack_bits(const std::vector<uint8_t>& bytes, size_t count) {
    if (bytes.size() * 8 < count)
        throw Error(ErrorCode::MalformedRecord, "bit string shorter than mask size");
    std::vector<uint8_t> out(count);
    for (size_t i = 0; i < count; ++i) out[i] = (bytes[i / 8] >> (7 - i % 8)) & 1;
    return out;
}

struct RankedCandidate {
    const SamMaskCandidate* candidate;
    size_t input_order;
};

// Descending score order: predicted_iou, then stability_score, then the
// original file order.
bool score_before(const RankedCandidate& a, const RankedCandidate& b) {
    if (a.candidate->predicted_iou != b.candidate->predicted_iou)
        return a.candidate->predicted_iou > b.candidate->predicted_iou;
    if (a.candidate->stability_score != b.candidate->stability_score)
        return a.candidate->stability_score > b.candidate->stability_score;
    return a.input_order < b.input_order;
}

} // namespace

std::vector<int64_t> encode_rle(const std::vector<uint8_t>& mask, int height, int width) {
    if (mask.size() != static_cast<size_t>(height) * width)
        throw Error(ErrorCode::ShapeMismatch, "mask buffer does not match shape");
    // Column-major traversal, alternating runs starting with zeros.
    std::vector<int64_t> counts;
    int64_t run = 0;
    uint8_t current = 0;
    for (int x = 0; x < width; ++x) {
        for (int y = 0; y < height; ++y) {
            const uint8_t v = mask[static_cast<size_t>(y) * width + x] ? 1 : 0;
            if (v == current) {
                ++run;
            } else {
                counts.push_back(run);
                current = v;
                run = 1;
            }
        }
    }
    counts.push_back(run);
    return counts;
}

std::vector<uint8_t> decode_rle(const std::vector<int64_t>& counts, int height, int width) {
    const size_t total = static_cast<size_t>(height) * width;
    std::vector<uint8_t> mask(total, 0);
    size_t pos = 0;
    uint8_t current = 0;
    for (int64_t count : counts) {
        if (count < 0) throw Error(ErrorCode::MalformedRecord, "negative run length");
        for (int64_t i = 0; i < count; ++i) {
            if (pos >= total) throw Error(ErrorCode::MalformedRecord, "run lengths exceed mask size");
            const size_t x = pos / height;
            const size_t y = pos % height;
            mask[y * width + x] = current;
            ++pos;
        }
        current = current ? 0 : 1;
    }
    if (pos != total)
        throw Error(ErrorCode::MalformedRecord, "run lengths do not cover the mask");
    return mask;
}

std::vector<SamMaskCandidate> parse_sam_record(const std::string& json_path) {
    std::ifstream file(json_path);
    if (!file) throw Error(ErrorCode::IoReadFailure, "cannot read " + json_path);
    json root = json::parse(file, nullptr, false);
    if (root.is_discarded() || !root.is_array())
        throw Error(ErrorCode::MalformedRecord, json_path + " is not a JSON list of masks");

    std::vector<SamMaskCandidate> out;
    out.reserve(root.size());
    size_t entry_no = 0;
    for (const auto& entry : root) {
        ++entry_no;
        const std::string where = json_path + " entry " + std::to_string(entry_no);
        for (const char* key : {"predicted_iou", "area", "stability_score", "segmentation"}) {
            if (!entry.contains(key))
                throw Error(ErrorCode::MalformedRecord, where + " missing field " + key);
        }
        SamMaskCandidate candidate;
        candidate.predicted_iou = entry["predicted_iou"].get<double>();
        candidate.stability_score = entry["stability_score"].get<double>();
        candidate.area = entry["area"].get<int64_t>();
        if (candidate.predicted_iou < 0.0 || candidate.predicted_iou > 1.0)
            throw Error(ErrorCode::MalformedRecord, where + " predicted_iou outside [0, 1]");
        if (candidate.stability_score < 0.0 || candidate.stability_score > 1.0)
            throw Error(ErrorCode::MalformedRecord, where + " stability_score outside [0, 1]");

        const auto& seg = entry["segmentation"];
        if (!seg.contains("size") || !seg["size"].is_array() || seg["size"].size() != 2)
            throw Error(ErrorCode::MalformedRecord, where + " segmentation missing size");
        candidate.height = seg["size"][0].get<int>();
        candidate.width = seg["size"][1].get<int>();
        if (candidate.height <= 0 || candidate.width <= 0)
            throw Error(ErrorCode::MalformedRecord, where + " degenerate segmentation size");

        if (seg.contains("counts")) {
            candidate.mask = decode_rle(seg["counts"].get<std::vector<int64_t>>(),
                                        candidate.height, candidate.width);
        } else if (seg.contains("bits")) {
            candidate.mask = unpack_bits(base64_decode(seg["bits"].get<std::string>()),
                                         static_cast<size_t>(candidate.height) * candidate.width);
        } else {
            throw Error(ErrorCode::MalformedRecord, where + " segmentation has neither counts nor bits");
        }

        const int64_t decoded_area =
            std::accumulate(candidate.mask.begin(), candidate.mask.end(), int64_t{0});
        if (decoded_area != candidate.area)
            throw Error(ErrorCode::AreaMismatch, where + " stored area " +
                                                     std::to_string(candidate.area) +
                                                     " != decoded " + std::to_string(decoded_area));
        out.push_back(std::move(candidate));
    }
    return out;
}

void write_sam_record(const std::string& json_path,
                      const std::vector<SamMaskCandidate>& candidates) {
    json root = json::array();
    for (const auto& c : candidates) {
        root.push_back({{"predicted_iou", c.predicted_iou},
                        {"area", c.area},
                        {"stability_score", c.stability_score},
                        {"segmentation",
                         {{"size", {c.height, c.width}},
                          {"counts", encode_rle(c.mask, c.height, c.width)}}}});
    }
    std::ofstream file(json_path);
    if (!file) throw Error(ErrorCode::IoWriteFailure, "cannot write " + json_path);
    file << root.dump() << "\n";
}

std::vector<SamMaskCandidate> filter_masks(const std::vector<SamMaskCandidate>& candidates,
                                           const FilterPolicy& policy) {
    policy.validate();
    std::vector<RankedCandidate> ranked;
    ranked.reserve(candidates.size());
    for (size_t i = 0; i < candidates.size(); ++i) ranked.push_back({&candidates[i], i});
    std::sort(ranked.begin(), ranked.end(), score_before);

    std::vector<bool> keep(candidates.size(), false);
    for (size_t rank = 0; rank < ranked.size(); ++rank) {
        const auto& c = *ranked[rank].candidate;
        if (c.predicted_iou >= policy.iou_threshold || c.area >= policy.min_area ||
            rank < static_cast<size_t>(policy.top_k))
            keep[ranked[rank].input_order] = true;
    }

    std::vector<SamMaskCandidate> out;
    for (const auto& rc : ranked) {
        if (keep[rc.input_order]) out.push_back(*rc.candidate);
    }
    return out;
}

LabelMap merge_to_labelmap(const std::vector<SamMaskCandidate>& retained,
                           std::pair<int, int> shape) {
    const auto [height, width] = shape;
    LabelMap map;
    map.height = height;
    map.width = width;
    map.labels.assign(static_cast<size_t>(height) * width, 0);

    std::vector<RankedCandidate> ranked;
    ranked.reserve(retained.size());
    for (size_t i = 0; i < retained.size(); ++i) ranked.push_back({&retained[i], i});
    std::sort(ranked.begin(), ranked.end(), score_before);
    // Classes beyond 3 cannot be encoded: keep only the best three.
    if (ranked.size() > 3) ranked.resize(3);

    // Paint lowest rank last so higher-ranked candidates win overlaps.
    for (size_t i = ranked.size(); i-- > 0;) {
        const auto& c = *ranked[i].candidate;
        if (c.height != height || c.width != width)
            throw Error(ErrorCode::ShapeMismatch, "candidate mask shape differs from frame shape");
        const uint8_t cls = static_cast<uint8_t>(i + 1);
        for (size_t p = 0; p < c.mask.size(); ++p) {
            if (c.mask[p]) map.labels[p] = cls;
        }
    }
    return map;
}

std::array<std::array<uint8_t, 3>, kNumClasses> class_palette() {
    return {{{0, 0, 0}, {220, 40, 40}, {40, 200, 60}, {50, 90, 230}}};
}

void write_class_visualization(const LabelMap& mask, const std::string& out_path) {
    const auto palette = class_palette();
    std::vector<uint8_t> rgb(static_cast<size_t>(mask.height) * mask.width * 3);
    for (size_t i = 0; i < mask.labels.size(); ++i) {
        const auto& color = palette[mask.labels[i]];
        rgb[i * 3 + 0] = color[0];
        rgb[i * 3 + 1] = color[1];
        rgb[i * 3 + 2] = color[2];
    }
    write_png_rgb(out_path, rgb.data(), mask.height, mask.width);
}

Manifest build_pseudo_manifest(const std::string& labelmap_dir, const std::string& image_dir,
                               const std::string& patient_prefix) {
    return build_manifest(image_dir, labelmap_dir, SampleSource::Pseudo, patient_prefix);
}

PseudoScore score_pseudo_labels(const Manifest& pseudo, const Manifest& gt) {
    std::map<std::string, const SampleRecord*> gt_by_stem;
    for (const auto& r : gt.records) gt_by_stem[normalize_stem(r.image_path)] = &r;

    ConfusionMatrix pooled;
    size_t frames = 0;
    for (const auto& r : pseudo.records) {
        const auto it = gt_by_stem.find(normalize_stem(r.image_path));
        if (it == gt_by_stem.end()) continue;
        const LabelMap pred = load_mask_png(r.mask_path);
        const LabelMap truth = load_mask_png(it->second->mask_path);
        pooled.accumulate(confusion_matrix(pred, truth));
        ++frames;
    }
    if (frames == 0)
        throw Error(ErrorCode::NoOverlap, "pseudo and ground-truth manifests share no frames");

    PseudoScore score;
    score.dice = dice_per_class(pooled);
    score.frames = frames;
    return score;
}

CurateResult curate_sam_record(const std::string& json_path, std::pair<int, int> shape,
                               const FilterPolicy& policy, const std::string& out_dir) {
    const auto candidates = parse_sam_record(json_path);
    const auto retained = filter_masks(candidates, policy);
    const LabelMap map = merge_to_labelmap(retained, shape);

    fs::create_directories(out_dir);
    const std::string stem = normalize_stem(json_path);
    CurateResult result;
    result.candidates_in = candidates.size();
    result.candidates_kept = retained.size();
    result.labelmap_path = (fs::path(out_dir) / (stem + "_mask.png")).string();
    result.visualization_path = (fs::path(out_dir) / (stem + "_vis.png")).string();
    export_mask_png(map, result.labelmap_path);
    write_class_visualization(map, result.visualization_path);
    return result;
}

} // namespace echoseg
