#pragma once

#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include <zlib.h>

#include "magspike/errors.hpp"
#include "magspike/snn.hpp"

// IDX (MNIST container) ingestion and pixel-to-drive normalization. Files may
// be raw or gzip-compressed; zlib reads both transparently.
namespace magspike {

struct Dataset {
    std::size_t n = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::uint8_t> images; // [n x rows*cols]
    std::vector<std::uint8_t> labels; // values 0..9
    std::string split;

    std::size_t dim() const { return rows * cols; }
};

namespace idx {

inline constexpr std::uint32_t images_magic = 0x00000803;
inline constexpr std::uint32_t labels_magic = 0x00000801;

inline std::string hex_u32(std::uint32_t v) {
    char buf[11];
    std::snprintf(buf, sizeof buf, "0x%08x", v);
    return buf;
}

class GzReader {
  public:
    explicit GzReader(const std::string& path) : path_(path), file_(gzopen(path.c_str(), "rb")) {
        if (file_ == nullptr) throw FormatError("cannot open " + path);
    }
    ~GzReader() {
        if (file_ != nullptr) gzclose(file_);
    }
    GzReader(const GzReader&) = delete;
    GzReader& operator=(const GzReader&) = delete;

    void read_exact(void* dst, std::size_t n) {
        const int got = gzread(file_, dst, static_cast<unsigned>(n));
        if (got < 0 || static_cast<std::size_t>(got) != n)
            throw FormatError(path_ + ": truncated at offset " + std::to_string(offset_) +
                              " (wanted " + std::to_string(n) + " bytes, got " +
                              std::to_string(got < 0 ? 0 : got) + ")");
        offset_ += n;
    }

    std::uint32_t read_u32_be() {
        unsigned char b[4];
        read_exact(b, 4);
        return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
               (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
    }

    bool at_eof() {
        unsigned char probe;
        const int got = gzread(file_, &probe, 1);
        return got == 0;
    }

    std::size_t offset() const { return offset_; }

  private:
    std::string path_;
    gzFile file_;
    std::size_t offset_ = 0;
};

} // namespace idx

// Parses the big-endian IDX pair and cross-validates the counts.
inline Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                        const std::string& split = "") {
    Dataset ds;
    ds.split = split;
    {
        idx::GzReader in(images_path);
        const auto magic = in.read_u32_be();
        if (magic != idx::images_magic)
            throw FormatError(images_path + ": bad magic " + idx::hex_u32(magic) +
                              " at offset 0 (expected 0x00000803)");
        ds.n = in.read_u32_be();
        ds.rows = in.read_u32_be();
        ds.cols = in.read_u32_be();
        if (ds.rows == 0 || ds.cols == 0 || ds.n == 0)
            throw FormatError(images_path + ": zero dimension in header");
        ds.images.resize(ds.n * ds.rows * ds.cols);
        in.read_exact(ds.images.data(), ds.images.size());
        if (!in.at_eof())
            throw FormatError(images_path + ": trailing bytes after offset " +
                              std::to_string(in.offset()));
    }
    {
        idx::GzReader in(labels_path);
        const auto magic = in.read_u32_be();
        if (magic != idx::labels_magic)
            throw FormatError(labels_path + ": bad magic " + idx::hex_u32(magic) +
                              " at offset 0 (expected 0x00000801)");
        const auto n_labels = in.read_u32_be();
        if (n_labels != ds.n)
            throw FormatError(labels_path + ": label count " + std::to_string(n_labels) +
                              " != image count " + std::to_string(ds.n));
        ds.labels.resize(n_labels);
        in.read_exact(ds.labels.data(), ds.labels.size());
        if (!in.at_eof())
            throw FormatError(labels_path + ": trailing bytes after offset " +
                              std::to_string(in.offset()));
    }
    for (std::size_t i = 0; i < ds.labels.size(); ++i)
        if (ds.labels[i] > 9)
            throw FormatError(labels_path + ": label " + std::to_string(ds.labels[i]) +
                              " out of range at index " + std::to_string(i));
    return ds;
}

// Raw (uncompressed) IDX writers, for fixtures and generated datasets.
inline void write_idx_images(const std::string& path, const Dataset& ds) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (f == nullptr) throw FormatError("cannot open " + path + " for writing");
    auto put_u32 = [f](std::uint32_t v) {
        unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v)};
        std::fwrite(b, 1, 4, f);
    };
    put_u32(idx::images_magic);
    put_u32(static_cast<std::uint32_t>(ds.n));
    put_u32(static_cast<std::uint32_t>(ds.rows));
    put_u32(static_cast<std::uint32_t>(ds.cols));
    std::fwrite(ds.images.data(), 1, ds.images.size(), f);
    std::fclose(f);
}

inline void write_idx_labels(const std::string& path, const Dataset& ds) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (f == nullptr) throw FormatError("cannot open " + path + " for writing");
    auto put_u32 = [f](std::uint32_t v) {
        unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v)};
        std::fwrite(b, 1, 4, f);
    };
    put_u32(idx::labels_magic);
    put_u32(static_cast<std::uint32_t>(ds.n));
    std::fwrite(ds.labels.data(), 1, ds.labels.size(), f);
    std::fclose(f);
}

// Affine pixel-to-voltage map: 0 -> v_lo, 255 -> v_hi.
struct PixelScale {
    double v_lo = 0.0;
    double v_hi = 0.0;

    void validate() const {
        if (!(v_lo < v_hi)) throw InvalidInput("PixelScale: need v_lo < v_hi");
    }
    double to_drive(std::uint8_t px) const {
        return v_lo + (v_hi - v_lo) * static_cast<double>(px) / 255.0;
    }
    double to_pixel(double drive) const { return (drive - v_lo) / (v_hi - v_lo) * 255.0; }
};

// Materializes drive vectors for the whole dataset.
inline DriveDataset normalize(const Dataset& ds, double v_lo, double v_hi) {
    const PixelScale scale{v_lo, v_hi};
    scale.validate();
    DriveDataset out;
    out.dim = ds.dim();
    out.labels = ds.labels;
    out.drives.resize(ds.n * ds.dim());
    for (std::size_t i = 0; i < out.drives.size(); ++i)
        out.drives[i] = scale.to_drive(ds.images[i]);
    return out;
}

} // namespace magspike
