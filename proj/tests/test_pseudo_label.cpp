#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "echoseg/png_io.hpp"
#include "echoseg/preprocessing.hpp"
#include "echoseg/pseudo_label.hpp"

using namespace echoseg;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("echoseg_sam_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

SamMaskCandidate make_candidate(int h, int w, double iou, double stability,
                                const std::vector<std::pair<int, int>>& pixels) {
    SamMaskCandidate c;
    c.height = h;
    c.width = w;
    c.mask.assign(static_cast<size_t>(h) * w, 0);
    for (const auto& [y, x] : pixels) c.mask[static_cast<size_t>(y) * w + x] = 1;
    c.area = static_cast<int64_t>(pixels.size());
    c.predicted_iou = iou;
    c.stability_score = stability;
    return c;
}

SamMaskCandidate block_candidate(int h, int w, double iou, double stability, int y0, int x0,
                                 int size) {
    std::vector<std::pair<int, int>> pixels;
    for (int y = y0; y < y0 + size; ++y)
        for (int x = x0; x < x0 + size; ++x) pixels.emplace_back(y, x);
    return make_candidate(h, w, iou, stability, pixels);
}

// Independent union-of-rules oracle.
std::set<size_t> oracle_retained(const std::vector<SamMaskCandidate>& candidates,
                                 const FilterPolicy& policy) {
    std::set<size_t> keep;
    for (size_t i = 0; i < candidates.size(); ++i) {
        if (candidates[i].predicted_iou >= policy.iou_threshold) keep.insert(i);
        if (candidates[i].area >= policy.min_area) keep.insert(i);
    }
    std::vector<size_t> order(candidates.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        if (candidates[a].predicted_iou != candidates[b].predicted_iou)
            return candidates[a].predicted_iou > candidates[b].predicted_iou;
        return candidates[a].stability_score > candidates[b].stability_score;
    });
    for (size_t r = 0; r < order.size() && r < static_cast<size_t>(policy.top_k); ++r)
        keep.insert(order[r]);
    return keep;
}

} // namespace

TEST_CASE("rle encodes column-major alternating runs starting with zeros") {
    // 2x3 mask: set (0,0) and (1,2). Column-major scan: 1,0,0,0,0,1
    std::vector<uint8_t> mask = {1, 0, 0, 0, 0, 1};
    const auto counts = encode_rle(mask, 2, 3);
    CHECK(counts == std::vector<int64_t>{0, 1, 4, 1});
    CHECK(decode_rle(counts, 2, 3) == mask);
}

TEST_CASE("rle round trip on random masks") {
    std::mt19937 rng(3);
    for (int t = 0; t < 25; ++t) {
        const int h = 5 + static_cast<int>(rng() % 20);
        const int w = 5 + static_cast<int>(rng() % 20);
        std::vector<uint8_t> mask(static_cast<size_t>(h) * w);
        for (auto& v : mask) v = rng() % 3 == 0;
        CHECK(decode_rle(encode_rle(mask, h, w), h, w) == mask);
    }
}

TEST_CASE("rle rejects inconsistent run totals") {
    CHECK_THROWS_AS(decode_rle({0, 5}, 2, 2), Error);
    CHECK_THROWS_AS(decode_rle({1, 1}, 2, 2), Error);
}

TEST_CASE("parse_sam_record round trip and file order") {
    const fs::path dir = temp_dir("parse");
    std::vector<SamMaskCandidate> candidates;
    for (int i = 0; i < 5; ++i)
        candidates.push_back(block_candidate(12, 12, 0.1 * i, 0.9, i, i, 2 + i % 2));
    const std::string path = (dir / "frame0.json").string();
    write_sam_record(path, candidates);

    const auto parsed = parse_sam_record(path);
    REQUIRE(parsed.size() == 5);
    for (int i = 0; i < 5; ++i) {
        CHECK(parsed[i].predicted_iou == doctest::Approx(0.1 * i));
        CHECK(parsed[i].mask == candidates[i].mask);
        CHECK(parsed[i].area == candidates[i].area);
    }
}

TEST_CASE("empty JSON list parses to no candidates") {
    const fs::path dir = temp_dir("empty");
    std::ofstream((dir / "empty.json").string()) << "[]";
    CHECK(parse_sam_record((dir / "empty.json").string()).empty());
}

TEST_CASE("base64 bit-string masks decode") {
    const fs::path dir = temp_dir("bits");
    // 2x3 mask 101,010 row-major -> bits 101010 padded to 10101000 = 0xA8
    std::ofstream((dir / "bits.json").string())
        << R"([{"predicted_iou":0.8,"area":3,"stability_score":0.9,)"
        << R"("segmentation":{"size":[2,3],"bits":"qA=="}}])";
    const auto parsed = parse_sam_record((dir / "bits.json").string());
    REQUIRE(parsed.size() == 1);
    CHECK(parsed[0].mask == std::vector<uint8_t>{1, 0, 1, 0, 1, 0});
}

TEST_CASE("missing fields raise MALFORMED_RECORD") {
    const fs::path dir = temp_dir("missing");
    std::ofstream((dir / "bad.json").string())
        << R"([{"predicted_iou":0.8,"area":4,)"
        << R"("segmentation":{"size":[2,2],"counts":[0,4]}}])";
    try {
        parse_sam_record((dir / "bad.json").string());
        FAIL("expected MALFORMED_RECORD");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::MalformedRecord);
        CHECK(std::string(e.what()).find("stability_score") != std::string::npos);
    }
}

TEST_CASE("scores outside [0,1] are rejected") {
    const fs::path dir = temp_dir("range");
    std::ofstream((dir / "bad.json").string())
        << R"([{"predicted_iou":1.4,"area":4,"stability_score":0.9,)"
        << R"("segmentation":{"size":[2,2],"counts":[0,4]}}])";
    CHECK_THROWS_AS(parse_sam_record((dir / "bad.json").string()), Error);
}

TEST_CASE("stored area must match the decoded mask") {
    const fs::path dir = temp_dir("area");
    std::ofstream((dir / "bad.json").string())
        << R"([{"predicted_iou":0.8,"area":200,"stability_score":0.9,)"
        << R"("segmentation":{"size":[20,20],"counts":[0,150,250]}}])";
    try {
        parse_sam_record((dir / "bad.json").string());
        FAIL("expected AREA_MISMATCH");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::AreaMismatch);
    }
}

TEST_CASE("filter retention rules") {
    const FilterPolicy policy; // 0.7 / 200 / top-3

    SUBCASE("high-iou small region retained via the IoU rule") {
        std::vector<SamMaskCandidate> in;
        in.push_back(block_candidate(32, 32, 0.85, 0.9, 0, 0, 7));   // area 49
        in.push_back(block_candidate(32, 32, 0.1, 0.1, 10, 10, 3));  // dropped only if beyond top-3
        const auto out = filter_masks(in, policy);
        CHECK(out.size() == 2); // second kept by top-3
        CHECK(out[0].predicted_iou == doctest::Approx(0.85));
    }

    SUBCASE("low-iou large region retained via the area rule") {
        std::vector<SamMaskCandidate> in;
        for (int i = 0; i < 4; ++i) in.push_back(block_candidate(64, 64, 0.45, 0.5, 0, 0, 5));
        in.push_back(block_candidate(64, 64, 0.40, 0.5, 0, 0, 30)); // area 900
        const auto out = filter_masks(in, policy);
        // top-3 of the 0.45s plus the big 0.40 one
        CHECK(out.size() == 4);
        CHECK(out.back().area == 900);
    }

    SUBCASE("five identical low candidates keep exactly the top 3") {
        std::vector<SamMaskCandidate> in;
        for (int i = 0; i < 5; ++i) in.push_back(block_candidate(32, 32, 0.5, 0.5, i, i, 5));
        const auto out = filter_masks(in, policy);
        CHECK(out.size() == 3);
    }

    SUBCASE("zero thresholds pass everything") {
        std::vector<SamMaskCandidate> in;
        for (int i = 0; i < 7; ++i) in.push_back(block_candidate(32, 32, 0.01 * i, 0.5, i, i, 2));
        FilterPolicy all;
        all.iou_threshold = 0.0;
        all.min_area = 0;
        CHECK(filter_masks(in, all).size() == 7);
    }

    SUBCASE("empty input gives empty output") { CHECK(filter_masks({}, policy).empty()); }
}

TEST_CASE("filter matches the union oracle on randomized candidate sets") {
    std::mt19937 rng(29);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<SamMaskCandidate> candidates;
        const int n = 1 + static_cast<int>(rng() % 10);
        for (int i = 0; i < n; ++i) {
            const int size = 1 + static_cast<int>(rng() % 20);
            candidates.push_back(
                block_candidate(64, 64, u01(rng), u01(rng), rng() % 40, rng() % 40, size));
        }
        const FilterPolicy policy{u01(rng), static_cast<int64_t>(rng() % 300), 3};
        const auto expected = oracle_retained(candidates, policy);
        const auto out = filter_masks(candidates, policy);
        CHECK(out.size() == expected.size());

        // superset of top-k, subset of input, ordered by descending iou
        for (size_t i = 1; i < out.size(); ++i)
            CHECK(out[i - 1].predicted_iou >= out[i].predicted_iou);
        std::multiset<double> expect_ious, got_ious;
        for (size_t idx : expected) expect_ious.insert(candidates[idx].predicted_iou);
        for (const auto& c : out) got_ious.insert(c.predicted_iou);
        CHECK(expect_ious == got_ious);
    }
}

TEST_CASE("merge assigns classes by score rank") {
    SUBCASE("no retained masks give all background") {
        const LabelMap m = merge_to_labelmap({}, {16, 16});
        for (uint8_t v : m.labels) CHECK(v == 0);
    }

    SUBCASE("two disjoint masks paint classes 1 and 2") {
        std::vector<SamMaskCandidate> retained;
        retained.push_back(block_candidate(16, 16, 0.8, 0.9, 8, 8, 4)); // class 2 (rank 1)
        retained.push_back(block_candidate(16, 16, 0.9, 0.9, 0, 0, 4)); // class 1 (rank 0)
        const LabelMap m = merge_to_labelmap(retained, {16, 16});
        CHECK(m.at(0, 0) == 1);
        CHECK(m.at(8, 8) == 2);
        CHECK(m.at(15, 15) == 0);
    }

    SUBCASE("overlap goes to the higher-ranked candidate") {
        std::vector<SamMaskCandidate> retained;
        retained.push_back(block_candidate(16, 16, 0.9, 0.9, 0, 0, 6)); // class 1
        retained.push_back(block_candidate(16, 16, 0.8, 0.9, 2, 2, 6)); // class 2, overlaps
        const LabelMap m = merge_to_labelmap(retained, {16, 16});
        CHECK(m.at(3, 3) == 1);  // overlap pixel
        CHECK(m.at(7, 7) == 2);  // class-2 only
        // pixelwise oracle
        for (int y = 0; y < 16; ++y) {
            for (int x = 0; x < 16; ++x) {
                const bool in0 = retained[0].mask[y * 16 + x];
                const bool in1 = retained[1].mask[y * 16 + x];
                const int expected = in0 ? 1 : (in1 ? 2 : 0);
                CHECK(m.at(y, x) == expected);
            }
        }
    }

    SUBCASE("only the best three candidates are encoded") {
        std::vector<SamMaskCandidate> retained;
        for (int i = 0; i < 5; ++i)
            retained.push_back(block_candidate(16, 16, 0.9 - 0.1 * i, 0.9, 3 * i, 0, 2));
        const LabelMap m = merge_to_labelmap(retained, {16, 16});
        std::set<uint8_t> classes(m.labels.begin(), m.labels.end());
        for (uint8_t c : classes) CHECK(c <= 3);
        CHECK(m.at(0, 0) == 1);
        CHECK(m.at(3, 0) == 2);
        CHECK(m.at(6, 0) == 3);
        CHECK(m.at(9, 0) == 0);  // rank 4 dropped
        CHECK(m.at(12, 0) == 0); // rank 5 dropped
    }

    SUBCASE("shape mismatch is fatal") {
        std::vector<SamMaskCandidate> retained = {block_candidate(8, 8, 0.9, 0.9, 0, 0, 2)};
        try {
            merge_to_labelmap(retained, {16, 16});
            FAIL("expected SHAPE_MISMATCH");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::ShapeMismatch);
        }
    }
}

TEST_CASE("curation writes a label map and visualization with the shared palette") {
    const fs::path dir = temp_dir("curate");
    std::vector<SamMaskCandidate> candidates;
    candidates.push_back(block_candidate(24, 24, 0.95, 0.9, 2, 2, 6));
    candidates.push_back(block_candidate(24, 24, 0.85, 0.9, 12, 12, 8));
    write_sam_record((dir / "frame7.json").string(), candidates);

    const auto result = curate_sam_record((dir / "frame7.json").string(), {24, 24}, {},
                                          (dir / "out").string());
    CHECK(result.candidates_in == 2);
    CHECK(result.candidates_kept == 2);
    const LabelMap map = load_mask_png(result.labelmap_path);
    CHECK(map.at(3, 3) == 1);
    CHECK(map.at(13, 13) == 2);

    CHECK(fs::exists(result.visualization_path));
    CHECK(class_palette()[1][0] > class_palette()[1][1]); // class 1 is red-dominant
    CHECK(class_palette()[2][1] > class_palette()[2][0]); // class 2 green-dominant
    CHECK(class_palette()[3][2] > class_palette()[3][0]); // class 3 blue-dominant
}

TEST_CASE("pseudo manifests carry weight 0.5 and mix with ground truth") {
    const fs::path images = temp_dir("pm_images");
    const fs::path labels = temp_dir("pm_labels");
    LabelMap m;
    m.height = 16;
    m.width = 16;
    m.labels.assign(256, 0);
    for (int i = 0; i < 10; ++i) {
        const std::string stem = "patient" + std::to_string(1000 + i) + "_2CH";
        FrameImage f;
        f.height = 16;
        f.width = 16;
        f.pixels.assign(256, static_cast<float>(i));
        f.pixels[0] = 0.0f;
        f.pixels[1] = 100.0f;
        export_png16(f, (images / (stem + ".png")).string());
        export_mask_png(m, (labels / (stem + "_mask.png")).string());
    }

    const Manifest pseudo = build_pseudo_manifest(labels.string(), images.string());
    REQUIRE(pseudo.records.size() == 10);
    for (const auto& r : pseudo.records) {
        CHECK(r.source == SampleSource::Pseudo);
        CHECK(r.weight == kPseudoWeight);
    }

    SUBCASE("empty dirs give an empty manifest") {
        const fs::path none1 = temp_dir("pm_none1"), none2 = temp_dir("pm_none2");
        CHECK(build_pseudo_manifest(none1.string(), none2.string()).records.empty());
    }

    SUBCASE("mixing keeps only weights {1.0, 0.5}") {
        Manifest mixed = pseudo;
        SampleRecord gt;
        gt.image_path = "x.png";
        gt.mask_path = "x_mask.png";
        gt.patient_id = "x";
        mixed.records.push_back(gt);
        std::set<double> weights;
        for (const auto& r : mixed.records) weights.insert(r.weight);
        CHECK(weights == std::set<double>{0.5, 1.0});
    }
}

TEST_CASE("pseudo scoring against ground truth") {
    const fs::path dir = temp_dir("score");
    const fs::path gt_masks = dir / "gt";
    const fs::path pseudo_masks = dir / "pseudo";
    const fs::path images = dir / "images";
    fs::create_directories(gt_masks);
    fs::create_directories(pseudo_masks);
    fs::create_directories(images);

    LabelMap gt_map;
    gt_map.height = 16;
    gt_map.width = 16;
    gt_map.labels.assign(256, 0);
    for (int i = 0; i < 40; ++i) gt_map.labels[i] = 1;

    for (int i = 0; i < 3; ++i) {
        const std::string stem = "patient000" + std::to_string(i);
        FrameImage f;
        f.height = 16;
        f.width = 16;
        f.pixels.assign(256, 1.0f);
        f.pixels[0] = 0.0f;
        f.pixels[1] = 10.0f;
        export_png16(f, (images / (stem + ".png")).string());
        export_mask_png(gt_map, (gt_masks / (stem + "_gt.png")).string());
        export_mask_png(gt_map, (pseudo_masks / (stem + "_mask.png")).string());
    }

    const Manifest gt = build_manifest(images.string(), gt_masks.string());
    const Manifest pseudo = build_pseudo_manifest(pseudo_masks.string(), images.string());

    SUBCASE("identical masks score dice 1 for present classes") {
        const PseudoScore score = score_pseudo_labels(pseudo, gt);
        CHECK(score.frames == 3);
        CHECK(score.dice[0] == doctest::Approx(1.0));
        CHECK(score.dice[1] == doctest::Approx(1.0));
        CHECK(score.dice[2] == doctest::Approx(1.0)); // both empty
    }

    SUBCASE("all-background pseudo scores 0 for class 1") {
        LabelMap zeros = gt_map;
        std::fill(zeros.labels.begin(), zeros.labels.end(), 0);
        for (int i = 0; i < 3; ++i) {
            const std::string stem = "patient000" + std::to_string(i);
            export_mask_png(zeros, (pseudo_masks / (stem + "_mask.png")).string());
        }
        const PseudoScore score = score_pseudo_labels(pseudo, gt);
        CHECK(score.dice[1] == doctest::Approx(0.0));
    }

    SUBCASE("disjoint manifests raise NO_OVERLAP") {
        Manifest other = pseudo;
        for (auto& r : other.records) {
            const fs::path p(r.image_path);
            r.image_path = (p.parent_path() / ("nomatch_" + p.filename().string())).string();
        }
        try {
            score_pseudo_labels(other, gt);
            FAIL("expected NO_OVERLAP");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::NoOverlap);
        }
    }
}
