#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "anomaly/network.hpp"
#include "anomaly/tensor.hpp"

// Dataset ingestion. Two on-disk formats:
//  - IDX (MNIST family): big-endian, image magic 0x00000803, label magic
//    0x00000801, pixel bytes 0..255 scaled to [0,1].
//  - RTDS raw tensors: 16-byte header (magic "RTDS", u8 version=1, u8 rank,
//    u16 reserved, u32 count, u32 per-tensor element count), then the shared
//    dims (rank x u32), then count * elems little-endian float32. An optional
//    label section follows: magic "LBLS", u32 count, count x u8.

namespace anomaly {

struct Dataset {
    std::vector<Tensor> images;
    std::optional<std::vector<std::size_t>> labels;
    std::string source;

    std::size_t size() const { return images.size(); }

    void validate_labels(std::size_t class_count) const {
        if (!labels) return;
        if (labels->size() != images.size())
            throw ValidationError("dataset " + source + ": label/image count mismatch");
        for (std::size_t l : *labels)
            if (l >= class_count)
                throw ValidationError("dataset " + source + ": label out of range");
    }
};

namespace detail {

inline std::uint32_t read_u32_be(std::istream& f, const std::string& what) {
    unsigned char b[4];
    if (!f.read(reinterpret_cast<char*>(b), 4))
        throw ValidationError(what + ": truncated file");
    return (static_cast<std::uint32_t>(b[0]) << 24) | (static_cast<std::uint32_t>(b[1]) << 16) |
           (static_cast<std::uint32_t>(b[2]) << 8) | static_cast<std::uint32_t>(b[3]);
}

inline std::uint32_t read_u32_le(std::istream& f, const std::string& what) {
    unsigned char b[4];
    if (!f.read(reinterpret_cast<char*>(b), 4))
        throw ValidationError(what + ": truncated file");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void write_u32_le(std::ostream& f, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    f.write(reinterpret_cast<const char*>(b), 4);
}

} // namespace detail

constexpr std::uint32_t kIdxImageMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

// IDX image file (+ optional label file). Pixels come out as 1xHxW tensors
// scaled to [0,1] by division by 255.
inline Dataset ingest_idx(const std::string& images_path,
                          const std::optional<std::string>& labels_path = std::nullopt) {
    std::ifstream f(images_path, std::ios::binary);
    if (!f) throw ValidationError("cannot open IDX file: " + images_path);
    const std::uint32_t magic = detail::read_u32_be(f, images_path);
    if (magic != kIdxImageMagic) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "expected 0x%08x, got 0x%08x", kIdxImageMagic, magic);
        throw ValidationError("IDX image magic mismatch in " + images_path + ": " + buf);
    }
    const std::uint32_t count = detail::read_u32_be(f, images_path);
    const std::uint32_t rows = detail::read_u32_be(f, images_path);
    const std::uint32_t cols = detail::read_u32_be(f, images_path);

    Dataset ds;
    ds.source = images_path;
    ds.images.reserve(count);
    std::vector<unsigned char> pix(static_cast<std::size_t>(rows) * cols);
    for (std::uint32_t i = 0; i < count; ++i) {
        if (!f.read(reinterpret_cast<char*>(pix.data()), static_cast<std::streamsize>(pix.size())))
            throw ValidationError(images_path + ": truncated payload at image " + std::to_string(i));
        Tensor t({1, rows, cols});
        for (std::size_t k = 0; k < pix.size(); ++k)
            t.data[k] = static_cast<double>(pix[k]) / 255.0;
        ds.images.push_back(std::move(t));
    }

    if (labels_path) {
        std::ifstream lf(*labels_path, std::ios::binary);
        if (!lf) throw ValidationError("cannot open IDX label file: " + *labels_path);
        const std::uint32_t lmagic = detail::read_u32_be(lf, *labels_path);
        if (lmagic != kIdxLabelMagic) {
            char buf[64];
            std::snprintf(buf, sizeof buf, "expected 0x%08x, got 0x%08x", kIdxLabelMagic, lmagic);
            throw ValidationError("IDX label magic mismatch in " + *labels_path + ": " + buf);
        }
        const std::uint32_t lcount = detail::read_u32_be(lf, *labels_path);
        if (lcount != count)
            throw ValidationError("IDX label/image count mismatch: " + std::to_string(lcount) +
                                  " labels vs " + std::to_string(count) + " images");
        std::vector<std::size_t> labels(lcount);
        for (std::uint32_t i = 0; i < lcount; ++i) {
            unsigned char b;
            if (!lf.read(reinterpret_cast<char*>(&b), 1))
                throw ValidationError(*labels_path + ": truncated labels");
            labels[i] = b;
        }
        ds.labels = std::move(labels);
    }
    return ds;
}

constexpr char kRtdsMagic[4] = {'R', 'T', 'D', 'S'};
constexpr char kLabelMagic[4] = {'L', 'B', 'L', 'S'};

inline void write_raw(const Dataset& ds, const std::string& path) {
    Shape shape;
    if (!ds.images.empty()) {
        shape = ds.images[0].shape;
        for (const Tensor& t : ds.images)
            if (t.shape != shape)
                throw ValidationError("write_raw: non-uniform tensor shapes");
    }
    const std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ValidationError("cannot write: " + path);

    const std::size_t elems = ds.images.empty() ? 0 : shape_numel(shape);
    f.write(kRtdsMagic, 4);
    const unsigned char ver = 1, rank = static_cast<unsigned char>(shape.size());
    f.put(static_cast<char>(ver));
    f.put(static_cast<char>(rank));
    f.put(0); f.put(0); // reserved
    detail::write_u32_le(f, static_cast<std::uint32_t>(ds.images.size()));
    detail::write_u32_le(f, static_cast<std::uint32_t>(elems));
    for (std::size_t d : shape) detail::write_u32_le(f, static_cast<std::uint32_t>(d));

    std::vector<unsigned char> buf(elems * 4);
    for (const Tensor& t : ds.images) {
        for (std::size_t k = 0; k < elems; ++k)
            detail::store_f32_le(static_cast<float>(t.data[k]), buf.data() + 4 * k);
        f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    }
    if (ds.labels) {
        if (ds.labels->size() != ds.images.size())
            throw ValidationError("write_raw: label/image count mismatch");
        f.write(kLabelMagic, 4);
        detail::write_u32_le(f, static_cast<std::uint32_t>(ds.labels->size()));
        for (std::size_t l : *ds.labels) {
            if (l > 255) throw ValidationError("write_raw: label does not fit in a byte");
            f.put(static_cast<char>(static_cast<unsigned char>(l)));
        }
    }
    if (!f) throw ValidationError("write failed: " + path);
}

inline Dataset ingest_raw(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ValidationError("cannot open: " + path);
    char magic[4];
    if (!f.read(magic, 4) || std::memcmp(magic, kRtdsMagic, 4) != 0)
        throw ValidationError(path + ": bad RTDS magic");
    const int ver = f.get();
    const int rank = f.get();
    f.get(); f.get(); // reserved
    if (ver != 1) throw ValidationError(path + ": unsupported RTDS version " + std::to_string(ver));
    if (rank < 0) throw ValidationError(path + ": truncated header");
    const std::uint32_t count = detail::read_u32_le(f, path);
    const std::uint32_t elems = detail::read_u32_le(f, path);

    Shape shape;
    for (int i = 0; i < rank; ++i) shape.push_back(detail::read_u32_le(f, path));
    if (count > 0 && shape_numel(shape) != elems)
        throw ValidationError(path + ": dims do not match element count");

    Dataset ds;
    ds.source = path;
    ds.images.reserve(count);
    std::vector<unsigned char> buf(static_cast<std::size_t>(elems) * 4);
    for (std::uint32_t i = 0; i < count; ++i) {
        if (!f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size())))
            throw ValidationError(path + ": truncated payload, header declares " +
                                  std::to_string(count) + " tensors");
        Tensor t(shape);
        for (std::uint32_t k = 0; k < elems; ++k)
            t.data[k] = static_cast<double>(detail::load_f32_le(buf.data() + 4 * k));
        t.require_finite(path);
        ds.images.push_back(std::move(t));
    }

    char lmagic[4];
    if (f.read(lmagic, 4)) {
        if (std::memcmp(lmagic, kLabelMagic, 4) != 0)
            throw ValidationError(path + ": bad label section magic");
        const std::uint32_t lcount = detail::read_u32_le(f, path);
        if (lcount != count) throw ValidationError(path + ": label count mismatch");
        std::vector<std::size_t> labels(lcount);
        for (std::uint32_t i = 0; i < lcount; ++i) {
            const int b = f.get();
            if (b < 0) throw ValidationError(path + ": truncated labels");
            labels[i] = static_cast<std::size_t>(b);
        }
        ds.labels = std::move(labels);
    }
    return ds;
}

inline std::string dataset_file_hash(const std::string& path) {
    return sha256_hex(detail::read_file_bytes(path));
}

} // namespace anomaly
