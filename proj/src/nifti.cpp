#include "echoseg/nifti.hpp"

#include <zlib.h>

#include <cmath>
#include <cstring>
#include <limits>

#include "echoseg/error.hpp"

namespace echoseg {

namespace {

// NIfTI-1 data type codes.
constexpr int16_t kDtUint8 = 2;
constexpr int16_t kDtInt16 = 4;
constexpr int16_t kDtInt32 = 8;
constexpr int16_t kDtFloat32 = 16;
constexpr int16_t kDtFloat64 = 64;
constexpr int16_t kDtUint16 = 512;

#pragma pack(push, 1)
struct NiftiHeader {
    int32_t sizeof_hdr;
    char data_type[10];
    char db_name[18];
    int32_t extents;
    int16_t session_error;
    char regular;
    char dim_info;
    int16_t dim[8];
    float intent_p1;
    float intent_p2;
    float intent_p3;
    int16_t intent_code;
    int16_t datatype;
    int16_t bitpix;
    int16_t slice_start;
    float pixdim[8];
    float vox_offset;
    float scl_slope;
    float scl_inter;
    int16_t slice_end;
    char slice_code;
    char xyzt_units;
    float cal_max;
    float cal_min;
    float slice_duration;
    float toffset;
    int32_t glmax;
    int32_t glmin;
    char descrip[80];
    char aux_file[24];
    int16_t qform_code;
    int16_t sform_code;
    float quatern_b;
    float quatern_c;
    float quatern_d;
    float qoffset_x;
    float qoffset_y;
    float qoffset_z;
    float srow_x[4];
    float srow_y[4];
    float srow_z[4];
    char intent_name[16];
    char magic[4];
};
#pragma pack(pop)

static_assert(sizeof(NiftiHeader) == 348, "NIfTI-1 header must be 348 bytes");

template <typename T>
void swap_bytes(T& value) {
    auto* bytes = reinterpret_cast<unsigned char*>(&value);
    for (size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
}

void swap_header(NiftiHeader& h) {
    swap_bytes(h.sizeof_hdr);
    for (auto& d : h.dim) swap_bytes(d);
    swap_bytes(h.datatype);
    swap_bytes(h.bitpix);
    for (auto& p : h.pixdim) swap_bytes(p);
    swap_bytes(h.vox_offset);
    swap_bytes(h.scl_slope);
    swap_bytes(h.scl_inter);
}

class GzFile {
public:
    GzFile(const std::string& path, const char* mode) : file_(gzopen(path.c_str(), mode)) {}
    ~GzFile() {
        if (file_) gzclose(file_);
    }
    GzFile(const GzFile&) = delete;
    GzFile& operator=(const GzFile&) = delete;

    bool ok() const { return file_ != nullptr; }

    bool read_exact(void* dst, size_t bytes) {
        size_t done = 0;
        auto* out = static_cast<unsigned char*>(dst);
        while (done < bytes) {
            const unsigned chunk =
                static_cast<unsigned>(std::min<size_t>(bytes - done, 1u << 28));
            const int got = gzread(file_, out + done, chunk);
            if (got <= 0) return false;
            done += static_cast<size_t>(got);
        }
        return true;
    }

    bool write_exact(const void* src, size_t bytes) {
        const int wrote = gzwrite(file_, src, static_cast<unsigned>(bytes));
        return wrote == static_cast<int>(bytes);
    }

    bool skip(size_t bytes) {
        std::vector<char> scratch(std::min<size_t>(bytes, 65536));
        size_t left = bytes;
        while (left > 0) {
            const size_t chunk = std::min(left, scratch.size());
            if (!read_exact(scratch.data(), chunk)) return false;
            left -= chunk;
        }
        return true;
    }

private:
    gzFile file_;
};

template <typename T>
void convert_to_float(const std::vector<char>& raw, size_t count, bool swapped,
                      float slope, float inter, std::vector<float>& out) {
    const T* src = reinterpret_cast<const T*>(raw.data());
    out.resize(count);
    for (size_t i = 0; i < count; ++i) {
        T v = src[i];
        if (swapped && sizeof(T) > 1) swap_bytes(v);
        double x = static_cast<double>(v);
        if (slope != 0.0f) x = x * slope + inter;
        out[i] = static_cast<float>(x);
    }
}

} // namespace

NiftiVolume read_nifti(const std::string& path) {
    GzFile file(path, "rb");
    if (!file.ok()) throw Error(ErrorCode::UnreadableVolume, "cannot open " + path);

    NiftiHeader header{};
    if (!file.read_exact(&header, sizeof(header)))
        throw Error(ErrorCode::UnreadableVolume, "truncated header in " + path);

    bool swapped = false;
    if (header.sizeof_hdr != 348) {
        swap_header(header);
        swapped = true;
        if (header.sizeof_hdr != 348)
            throw Error(ErrorCode::UnreadableVolume, "not a NIfTI-1 file: " + path);
    }
    if (std::strncmp(header.magic, "n+1", 3) != 0 && std::strncmp(header.magic, "ni1", 3) != 0)
        throw Error(ErrorCode::UnreadableVolume, "bad NIfTI magic in " + path);

    const int ndim = header.dim[0];
    if (ndim < 2 || ndim > 7)
        throw Error(ErrorCode::UnreadableVolume,
                    "unsupported dimensionality " + std::to_string(ndim) + " in " + path);

    const int nx = header.dim[1];
    const int ny = header.dim[2];
    int nz = ndim >= 3 ? header.dim[3] : 1;
    int nt = ndim >= 4 ? header.dim[4] : 1;
    for (int d = ndim >= 5 ? 5 : 8; d <= ndim; ++d) {
        if (header.dim[d] > 1)
            throw Error(ErrorCode::UnreadableVolume, "trailing dimensions not supported: " + path);
    }
    if (nx <= 0 || ny <= 0)
        throw Error(ErrorCode::UnreadableVolume, "degenerate in-plane shape in " + path);
    if (nz < 0 || nt < 0) throw Error(ErrorCode::UnreadableVolume, "negative axis in " + path);

    // The pipeline is strictly 2-D frame based: one of nz/nt may act as the
    // frame axis, a genuinely volumetric file (both > 1) is rejected.
    if (nz > 1 && nt > 1)
        throw Error(ErrorCode::UnreadableVolume, "3-D + time volumes not supported: " + path);
    const int frames = nz > 1 ? nz : nt;
    if (frames == 0 || nz == 0 || nt == 0) throw Error(ErrorCode::EmptyVolume, "no frames in " + path);

    size_t element_size = 0;
    switch (header.datatype) {
        case kDtUint8: element_size = 1; break;
        case kDtInt16:
        case kDtUint16: element_size = 2; break;
        case kDtInt32:
        case kDtFloat32: element_size = 4; break;
        case kDtFloat64: element_size = 8; break;
        default:
            throw Error(ErrorCode::UnreadableVolume,
                        "unsupported datatype " + std::to_string(header.datatype) + " in " + path);
    }

    const size_t offset = static_cast<size_t>(header.vox_offset > 0 ? header.vox_offset : 352.0f);
    if (offset > sizeof(NiftiHeader)) {
        if (!file.skip(offset - sizeof(NiftiHeader)))
            throw Error(ErrorCode::UnreadableVolume, "truncated extension block in " + path);
    }

    const size_t count = static_cast<size_t>(nx) * ny * frames;
    std::vector<char> raw(count * element_size);
    if (!file.read_exact(raw.data(), raw.size()))
        throw Error(ErrorCode::UnreadableVolume, "truncated voxel data in " + path);

    NiftiVolume volume;
    volume.width = nx;
    volume.height = ny;
    volume.frames = frames;
    volume.spacing_x = header.pixdim[1];
    volume.spacing_y = header.pixdim[2];
    volume.has_spacing = std::isfinite(header.pixdim[1]) && header.pixdim[1] > 0 &&
                         std::isfinite(header.pixdim[2]) && header.pixdim[2] > 0;

    const float slope = header.scl_slope;
    const float inter = header.scl_inter;
    switch (header.datatype) {
        case kDtUint8: convert_to_float<uint8_t>(raw, count, swapped, slope, inter, volume.data); break;
        case kDtInt16: convert_to_float<int16_t>(raw, count, swapped, slope, inter, volume.data); break;
        case kDtUint16: convert_to_float<uint16_t>(raw, count, swapped, slope, inter, volume.data); break;
        case kDtInt32: convert_to_float<int32_t>(raw, count, swapped, slope, inter, volume.data); break;
        case kDtFloat32: convert_to_float<float>(raw, count, swapped, slope, inter, volume.data); break;
        case kDtFloat64: convert_to_float<double>(raw, count, swapped, slope, inter, volume.data); break;
        default: break;
    }
    return volume;
}

void write_nifti(const std::string& path, const NiftiVolume& volume, bool as_uint8) {
    NiftiHeader header{};
    header.sizeof_hdr = 348;
    header.dim[0] = volume.frames == 1 ? 2 : 4;
    header.dim[1] = static_cast<int16_t>(volume.width);
    header.dim[2] = static_cast<int16_t>(volume.height);
    header.dim[3] = 1;
    header.dim[4] = volume.frames == 1 ? 1 : static_cast<int16_t>(volume.frames);
    for (int d = 5; d < 8; ++d) header.dim[d] = 1;
    header.datatype = as_uint8 ? kDtUint8 : kDtFloat32;
    header.bitpix = as_uint8 ? 8 : 32;
    header.pixdim[0] = 1.0f;
    header.pixdim[1] = static_cast<float>(volume.spacing_x);
    header.pixdim[2] = static_cast<float>(volume.spacing_y);
    header.pixdim[3] = 1.0f;
    header.pixdim[4] = 1.0f;
    header.vox_offset = 352.0f;
    header.scl_slope = 1.0f;
    header.scl_inter = 0.0f;
    header.xyzt_units = 2; // mm
    std::memcpy(header.magic, "n+1", 4);

    GzFile file(path, "wb");
    if (!file.ok()) throw Error(ErrorCode::IoWriteFailure, "cannot open " + path + " for writing");
    if (!file.write_exact(&header, sizeof(header)))
        throw Error(ErrorCode::IoWriteFailure, "failed writing header to " + path);
    const char pad[4] = {0, 0, 0, 0};
    if (!file.write_exact(pad, 4)) throw Error(ErrorCode::IoWriteFailure, "failed writing " + path);

    if (as_uint8) {
        std::vector<uint8_t> bytes(volume.data.size());
        for (size_t i = 0; i < bytes.size(); ++i) {
            const float v = std::round(volume.data[i]);
            bytes[i] = static_cast<uint8_t>(std::min(255.0f, std::max(0.0f, v)));
        }
        if (!file.write_exact(bytes.data(), bytes.size()))
            throw Error(ErrorCode::IoWriteFailure, "failed writing voxels to " + path);
    } else if (!volume.data.empty()) {
        if (!file.write_exact(volume.data.data(), volume.data.size() * sizeof(float)))
            throw Error(ErrorCode::IoWriteFailure, "failed writing voxels to " + path);
    }
}

} // namespace echoseg
