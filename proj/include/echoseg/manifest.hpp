#pragma once

#include <array>
#include <string>
#include <vector>

#include "echoseg/types.hpp"

namespace echoseg {

struct Manifest {
    std::vector<SampleRecord> records;
    std::vector<std::string> orphans;
};

struct SplitRatios {
    double train = 0.8;
    double val = 0.1;
    double test = 0.1;
};

// Base name with the extension removed and exactly one trailing suffix from
// {_mask, _gt, _seg} stripped (case-sensitive, innermost preserved).
std::string normalize_stem(const std::string& filename);

// Leading "patientNNNN" token when present, otherwise the part before the
// first underscore. prefix_override, when non-empty, is used as a literal
// prefix whose following digit run completes the id.
std::string parse_patient_id(const std::string& filename, const std::string& prefix_override = "");

// Pairs image and mask files by normalized stem. Unmatched files become
// orphans; two images (or two masks) sharing a stem raise DUPLICATE_STEM.
// Records are sorted lexicographically by image_path.
Manifest build_manifest(const std::string& image_dir, const std::string& mask_dir,
                        SampleSource source = SampleSource::GroundTruth,
                        const std::string& patient_prefix = "");

// Deterministic patient-level split: patients are ranked by a hash of
// (patient_id, seed) and cut at largest-remainder quotas, so achieved counts
// stay within one patient of each requested fraction.
Manifest split_by_patient(const Manifest& manifest, const SplitRatios& ratios, uint64_t seed);

void write_manifest_csv(const Manifest& manifest, const std::string& path);
Manifest read_manifest_csv(const std::string& path);

// Stable content hash of the manifest records (64-bit FNV-1a, hex).
std::string manifest_fingerprint(const Manifest& manifest);

uint64_t fnv1a64(const std::string& data, uint64_t seed = 1469598103934665603ull);

} // namespace echoseg
