#include "echoseg/manifest.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace fs = std::filesystem;

namespace echoseg {

uint64_t fnv1a64(const std::string& data, uint64_t seed) {
    uint64_t hash = seed;
    for (unsigned char c : data) {
        hash ^= c;
        hash *= 1099511628211ull;
    }
    return hash;
}

std::string normalize_stem(const std::string& filename) {
    if (filename.empty()) throw Error(ErrorCode::EmptyInput, "empty filename");
    std::string stem = fs::path(filename).filename().string();
    // drop the extension chain (handles .nii.gz as well as .png)
    while (true) {
        const fs::path p(stem);
        const std::string ext = p.extension().string();
        if (ext.empty() || ext == stem) break;
        stem = p.stem().string();
    }
    for (const char* suffix : {"_mask", "_gt", "_seg"}) {
        const size_t len = std::strlen(suffix);
        if (stem.size() > len && stem.compare(stem.size() - len, len, suffix) == 0) {
            stem.resize(stem.size() - len);
            break; // exactly one suffix stripped
        }
    }
    return stem;
}

std::string parse_patient_id(const std::string& filename, const std::string& prefix_override) {
    const std::string stem = normalize_stem(filename);
    const std::string prefix = prefix_override.empty() ? "patient" : prefix_override;
    if (stem.rfind(prefix, 0) == 0) {
        size_t end = prefix.size();
        while (end < stem.size() && std::isdigit(static_cast<unsigned char>(stem[end]))) ++end;
        if (end > prefix.size()) return stem.substr(0, end);
    }
    const size_t underscore = stem.find('_');
    return underscore == std::string::npos ? stem : stem.substr(0, underscore);
}

namespace {

bool pairable_file(const fs::path& p) {
    const std::string name = p.filename().string();
    return name.ends_with(".png") || name.ends_with(".nii") || name.ends_with(".nii.gz");
}

std::vector<std::string> list_files(const std::string& dir) {
    if (!fs::is_directory(dir))
        throw Error(ErrorCode::IoReadFailure, dir + " is not a readable directory");
    std::vector<std::string> out;
    for (const auto& entry : fs::directory_iterator(dir)) {
        // sidecar metadata and other strays are not pairing candidates
        if (entry.is_regular_file() && pairable_file(entry.path()))
            out.push_back(entry.path().string());
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::map<std::string, std::string> stem_index(const std::vector<std::string>& files,
                                              const char* what) {
    std::map<std::string, std::string> index;
    for (const auto& file : files) {
        const std::string stem = normalize_stem(file);
        auto [it, inserted] = index.emplace(stem, file);
        if (!inserted)
            throw Error(ErrorCode::DuplicateStem, std::string(what) + " '" + it->second + "' and '" +
                                                      file + "' both normalize to '" + stem + "'");
    }
    return index;
}

} // namespace

Manifest build_manifest(const std::string& image_dir, const std::string& mask_dir,
                        SampleSource source, const std::string& patient_prefix) {
    const auto images = stem_index(list_files(image_dir), "images");
    const auto masks = stem_index(list_files(mask_dir), "masks");

    Manifest manifest;
    for (const auto& [stem, image_path] : images) {
        const auto mask_it = masks.find(stem);
        if (mask_it == masks.end()) {
            manifest.orphans.push_back(image_path);
            continue;
        }
        SampleRecord record;
        record.image_path = image_path;
        record.mask_path = mask_it->second;
        record.source = source;
        record.weight = source == SampleSource::GroundTruth ? kGroundTruthWeight : kPseudoWeight;
        record.patient_id = parse_patient_id(image_path, patient_prefix);
        manifest.records.push_back(std::move(record));
    }
    for (const auto& [stem, mask_path] : masks) {
        if (images.find(stem) == images.end()) manifest.orphans.push_back(mask_path);
    }
    std::sort(manifest.records.begin(), manifest.records.end(),
              [](const SampleRecord& a, const SampleRecord& b) { return a.image_path < b.image_path; });
    std::sort(manifest.orphans.begin(), manifest.orphans.end());
    return manifest;
}

Manifest split_by_patient(const Manifest& manifest, const SplitRatios& ratios, uint64_t seed) {
    if (manifest.records.empty()) throw Error(ErrorCode::EmptyManifest, "no records to split");
    const double sum = ratios.train + ratios.val + ratios.test;
    if (!(ratios.train > 0 && ratios.val > 0 && ratios.test > 0) || std::abs(sum - 1.0) > 1e-9)
        throw Error(ErrorCode::InvalidConfig, "split ratios must be positive and sum to 1");

    std::set<std::string> patient_set;
    for (const auto& r : manifest.records) patient_set.insert(r.patient_id);
    std::vector<std::string> patients(patient_set.begin(), patient_set.end());

    // Rank patients by hash so the assignment is a deterministic function of
    // (patient_id, seed) and quota cuts stay exact.
    std::sort(patients.begin(), patients.end(), [seed](const std::string& a, const std::string& b) {
        const uint64_t ha = fnv1a64(a + "#" + std::to_string(seed));
        const uint64_t hb = fnv1a64(b + "#" + std::to_string(seed));
        return ha != hb ? ha < hb : a < b;
    });

    const size_t n = patients.size();
    // Largest-remainder quotas keep each bucket within one patient of its
    // requested fraction.
    const std::array<double, 3> want = {ratios.train * n, ratios.val * n, ratios.test * n};
    std::array<size_t, 3> counts = {static_cast<size_t>(std::floor(want[0])),
                                    static_cast<size_t>(std::floor(want[1])),
                                    static_cast<size_t>(std::floor(want[2]))};
    size_t assigned = counts[0] + counts[1] + counts[2];
    std::array<int, 3> order = {0, 1, 2};
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        return want[a] - std::floor(want[a]) > want[b] - std::floor(want[b]);
    });
    for (int i = 0; assigned < n; ++i, ++assigned) counts[order[i % 3]]++;

    std::map<std::string, Split> assignment;
    size_t cursor = 0;
    const std::array<Split, 3> split_of = {Split::Train, Split::Val, Split::Test};
    for (int bucket = 0; bucket < 3; ++bucket) {
        for (size_t i = 0; i < counts[bucket]; ++i, ++cursor)
            assignment[patients[cursor]] = split_of[bucket];
    }

    Manifest out = manifest;
    for (auto& record : out.records) record.split = assignment.at(record.patient_id);
    return out;
}

void write_manifest_csv(const Manifest& manifest, const std::string& path) {
    std::ofstream file(path);
    if (!file) throw Error(ErrorCode::IoWriteFailure, "cannot write " + path);
    const fs::path base = fs::absolute(fs::path(path)).parent_path();
    file << "image_path,mask_path,source,weight,patient_id,split\n";
    for (const auto& r : manifest.records) {
        const auto rel = [&base](const std::string& p) {
            std::error_code ec;
            const fs::path relative = fs::relative(fs::absolute(p), base, ec);
            return ec || relative.empty() ? p : relative.string();
        };
        file << rel(r.image_path) << ',' << rel(r.mask_path) << ',' << to_string(r.source) << ','
             << r.weight << ',' << r.patient_id << ',' << to_string(r.split) << '\n';
    }
    if (!file) throw Error(ErrorCode::IoWriteFailure, "short write to " + path);
}

Manifest read_manifest_csv(const std::string& path) {
    std::ifstream file(path);
    if (!file) throw Error(ErrorCode::IoReadFailure, "cannot read " + path);
    const fs::path base = fs::absolute(fs::path(path)).parent_path();

    std::string line;
    if (!std::getline(file, line))
        throw Error(ErrorCode::EmptyManifest, path + " is empty");
    if (line != "image_path,mask_path,source,weight,patient_id,split")
        throw Error(ErrorCode::MalformedRecord, "unexpected manifest header in " + path);

    Manifest manifest;
    size_t line_no = 1;
    while (std::getline(file, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (fields.size() != 6)
            throw Error(ErrorCode::MalformedRecord,
                        path + ":" + std::to_string(line_no) + " has " +
                            std::to_string(fields.size()) + " fields, expected 6");
        SampleRecord record;
        const auto resolve = [&base](const std::string& p) {
            return fs::path(p).is_absolute() ? p : (base / p).lexically_normal().string();
        };
        record.image_path = resolve(fields[0]);
        record.mask_path = resolve(fields[1]);
        record.source = sample_source_from_string(fields[2]);
        record.weight = std::stod(fields[3]);
        record.patient_id = fields[4];
        record.split = split_from_string(fields[5]);
        validate_record(record);
        manifest.records.push_back(std::move(record));
    }
    return manifest;
}

std::string manifest_fingerprint(const Manifest& manifest) {
    std::ostringstream oss;
    for (const auto& r : manifest.records) {
        oss << fs::path(r.image_path).filename().string() << '|'
            << fs::path(r.mask_path).filename().string() << '|' << to_string(r.source) << '|'
            << r.weight << '|' << r.patient_id << '|' << to_string(r.split) << '\n';
    }
    std::ostringstream hex;
    hex << std::hex << fnv1a64(oss.str());
    return hex.str();
}

} // namespace echoseg
