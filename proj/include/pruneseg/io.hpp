// Bit-exact persistence: PRNW weight files (tensors + keep masks), 16-bit
// binary PGM label maps, grayscale PFM float maps, and the results CSV.
// Loaders are strict: bad magic, truncation, trailing bytes and mask/zero
// inconsistencies each raise a distinct error kind.
#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "pruneseg/labelmap.hpp"
#include "pruneseg/metrics.hpp"
#include "pruneseg/network.hpp"

namespace pruneseg {

enum class IoErrorKind {
    io_failure,
    bad_magic,
    bad_version,
    truncated,
    trailing_data,
    malformed_header,
    unsupported_format,
    label_overflow,
    mask_mismatch,
    schema_mismatch,
};

struct IoError : std::runtime_error {
    IoErrorKind kind;
    IoError(IoErrorKind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
};

namespace detail {

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(IoErrorKind::io_failure, "cannot open " + path);
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError(IoErrorKind::io_failure, "read failed for " + path);
    return buf;
}

inline void write_file(const std::string& path, const std::string& buf) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(IoErrorKind::io_failure, "cannot open " + path + " for writing");
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError(IoErrorKind::io_failure, "write failed for " + path);
}

struct Reader {
    const std::string& buf;
    size_t pos = 0;
    const std::string& path;

    uint8_t u8() {
        if (pos + 1 > buf.size()) throw IoError(IoErrorKind::truncated, path + ": unexpected end of file");
        return static_cast<uint8_t>(buf[pos++]);
    }
    uint16_t u16le() { return static_cast<uint16_t>(u8() | (u8() << 8)); }
    uint32_t u32le() {
        uint32_t v = u8();
        v |= static_cast<uint32_t>(u8()) << 8;
        v |= static_cast<uint32_t>(u8()) << 16;
        v |= static_cast<uint32_t>(u8()) << 24;
        return v;
    }
    float f32le() {
        const uint32_t bits = u32le();
        float f;
        static_assert(sizeof(f) == sizeof(bits));
        std::memcpy(&f, &bits, sizeof(f));
        return f;
    }
    std::string bytes(size_t n) {
        if (pos + n > buf.size()) throw IoError(IoErrorKind::truncated, path + ": unexpected end of file");
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
    void expect_eof() {
        if (pos != buf.size())
            throw IoError(IoErrorKind::trailing_data,
                          path + ": " + std::to_string(buf.size() - pos) + " trailing bytes");
    }
};

inline void put_u16le(std::string& b, uint16_t v) {
    b.push_back(static_cast<char>(v & 0xff));
    b.push_back(static_cast<char>(v >> 8));
}
inline void put_u32le(std::string& b, uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_f32le(std::string& b, float f) {
    uint32_t bits;
    std::memcpy(&bits, &f, sizeof(bits));
    put_u32le(b, bits);
}

}  // namespace detail

// --- PRNW weight files -------------------------------------------------------
// magic "PRNW", version u32 = 1, tensor count u32; per tensor: name length
// u16, UTF-8 name, ndim u8, dims u32 x ndim, has_mask u8, float32 data
// (little-endian, row-major), then mask bits ceil(n/8) bytes LSB-first
// (1 = keep). Masked positions must hold exactly 0.0 in the data section.

inline void save_network(const std::string& path, const Network& net) {
    std::string buf = "PRNW";
    detail::put_u32le(buf, 1);
    const auto names = net.param_order();
    detail::put_u32le(buf, static_cast<uint32_t>(names.size()));
    for (const std::string& name : names) {
        const Tensor& t = net.param(name);
        detail::put_u16le(buf, static_cast<uint16_t>(name.size()));
        buf += name;
        buf.push_back(static_cast<char>(t.shape.size()));
        for (int d : t.shape) detail::put_u32le(buf, static_cast<uint32_t>(d));
        const auto mit = net.masks.find(name);
        buf.push_back(mit != net.masks.end() ? 1 : 0);
        if (mit != net.masks.end()) {
            for (int i = 0; i < t.size(); ++i)
                if (!mit->second.bits[i] && t.data[i] != 0.0f)
                    throw IoError(IoErrorKind::mask_mismatch,
                                  path + ": masked weight of " + name + " is nonzero at " +
                                      std::to_string(i));
        }
        for (float v : t.data) detail::put_f32le(buf, v);
        if (mit != net.masks.end()) {
            const auto& bits = mit->second.bits;
            for (size_t base = 0; base < bits.size(); base += 8) {
                uint8_t byte = 0;
                for (size_t j = 0; j < 8 && base + j < bits.size(); ++j)
                    if (bits[base + j]) byte |= static_cast<uint8_t>(1u << j);
                buf.push_back(static_cast<char>(byte));
            }
        }
    }
    detail::write_file(path, buf);
}

struct WeightEntry {
    std::string name;
    Tensor tensor;
    bool has_mask = false;
    PruneMask mask;
};

inline std::vector<WeightEntry> load_weights(const std::string& path) {
    const std::string buf = detail::read_file(path);
    detail::Reader r{buf, 0, path};
    if (r.bytes(4) != "PRNW") throw IoError(IoErrorKind::bad_magic, path + ": not a PRNW file");
    const uint32_t version = r.u32le();
    if (version != 1)
        throw IoError(IoErrorKind::bad_version, path + ": unsupported version " + std::to_string(version));
    const uint32_t count = r.u32le();
    std::vector<WeightEntry> entries;
    for (uint32_t ti = 0; ti < count; ++ti) {
        WeightEntry e;
        e.name = r.bytes(r.u16le());
        const int ndim = r.u8();
        std::vector<int> shape;
        long n = 1;
        for (int d = 0; d < ndim; ++d) {
            const uint32_t dim = r.u32le();
            if (dim == 0 || dim > (1u << 24))
                throw IoError(IoErrorKind::malformed_header,
                              path + ": bad dimension " + std::to_string(dim) + " in " + e.name);
            shape.push_back(static_cast<int>(dim));
            n *= dim;
            if (n > (1L << 28))
                throw IoError(IoErrorKind::malformed_header, path + ": tensor " + e.name + " too large");
        }
        if (ndim == 0) throw IoError(IoErrorKind::malformed_header, path + ": zero-rank tensor " + e.name);
        e.has_mask = r.u8() != 0;
        std::vector<float> data(static_cast<size_t>(n));
        for (long i = 0; i < n; ++i) data[static_cast<size_t>(i)] = r.f32le();
        e.tensor = Tensor(shape, std::move(data));
        if (e.has_mask) {
            e.mask.owner = e.name;
            e.mask.bits.assign(static_cast<size_t>(n), 0);
            for (long base = 0; base < n; base += 8) {
                const uint8_t byte = r.u8();
                for (long j = 0; j < 8 && base + j < n; ++j)
                    e.mask.bits[static_cast<size_t>(base + j)] = (byte >> j) & 1;
            }
            for (long i = 0; i < n; ++i)
                if (!e.mask.bits[static_cast<size_t>(i)] &&
                    e.tensor.data[static_cast<size_t>(i)] != 0.0f)
                    throw IoError(IoErrorKind::mask_mismatch,
                                  path + ": masked weight of " + e.name + " is nonzero at " +
                                      std::to_string(i));
        }
        entries.push_back(std::move(e));
    }
    r.expect_eof();
    return entries;
}

// Rebuilds the toy network for the requested head from a PRNW file, checking
// that the stored tensors match the architecture name-for-name.
inline Network load_network(const std::string& path, Head head) {
    const std::vector<WeightEntry> entries = load_weights(path);
    Network net = build_toy_network(head, 0);
    const auto expected = net.param_order();
    if (entries.size() != expected.size())
        throw IoError(IoErrorKind::schema_mismatch,
                      path + ": expected " + std::to_string(expected.size()) + " tensors, found " +
                          std::to_string(entries.size()));
    net.masks.clear();
    for (size_t i = 0; i < entries.size(); ++i) {
        const WeightEntry& e = entries[i];
        if (e.name != expected[i])
            throw IoError(IoErrorKind::schema_mismatch,
                          path + ": tensor " + std::to_string(i) + " is '" + e.name +
                              "', expected '" + expected[i] + "'");
        Tensor& slot = net.param(e.name);
        if (slot.shape != e.tensor.shape)
            throw IoError(IoErrorKind::schema_mismatch, path + ": shape mismatch for " + e.name);
        slot = e.tensor;
        if (e.has_mask) net.masks.emplace(e.name, e.mask);
    }
    return net;
}

// --- PGM label maps ----------------------------------------------------------
// Binary "P5", maxval 65535, two-byte big-endian samples. The reader also
// accepts external 8-bit P5 files and '#' comments; trailing bytes are
// rejected.

inline void save_labelmap(const std::string& path, const LabelMap& lm) {
    std::string buf = "P5\n" + std::to_string(lm.width) + " " + std::to_string(lm.height) + "\n65535\n";
    for (uint32_t v : lm.labels) {
        if (v > 65535)
            throw IoError(IoErrorKind::label_overflow,
                          path + ": label " + std::to_string(v) + " exceeds 65535");
        buf.push_back(static_cast<char>((v >> 8) & 0xff));
        buf.push_back(static_cast<char>(v & 0xff));
    }
    detail::write_file(path, buf);
}

namespace detail {

// PGM/PFM header token: skips whitespace (and '#' comments for PGM).
inline std::string next_token(Reader& r, bool allow_comments) {
    std::string tok;
    while (r.pos < r.buf.size()) {
        const char c = r.buf[r.pos];
        if (c == '#' && allow_comments && tok.empty()) {
            while (r.pos < r.buf.size() && r.buf[r.pos] != '\n') ++r.pos;
            continue;
        }
        if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
            if (!tok.empty()) return tok;
            ++r.pos;
            continue;
        }
        tok.push_back(c);
        ++r.pos;
    }
    return tok;
}

inline long parse_int(const std::string& tok, const std::string& path, const char* what) {
    if (tok.empty()) throw IoError(IoErrorKind::malformed_header, path + ": missing " + what);
    for (char c : tok)
        if (c < '0' || c > '9')
            throw IoError(IoErrorKind::malformed_header,
                          path + ": bad " + std::string(what) + " '" + tok + "'");
    if (tok.size() > 9) throw IoError(IoErrorKind::malformed_header, path + ": oversized " + what);
    return std::stol(tok);
}

}  // namespace detail

inline LabelMap load_labelmap(const std::string& path) {
    const std::string buf = detail::read_file(path);
    detail::Reader r{buf, 0, path};
    if (r.bytes(2) != "P5") throw IoError(IoErrorKind::bad_magic, path + ": not a binary PGM (P5) file");
    const long w = detail::parse_int(detail::next_token(r, true), path, "width");
    const long h = detail::parse_int(detail::next_token(r, true), path, "height");
    const long maxval = detail::parse_int(detail::next_token(r, true), path, "maxval");
    if (w <= 0 || h <= 0 || w * h > (1L << 26))
        throw IoError(IoErrorKind::malformed_header, path + ": bad dimensions " + std::to_string(w) +
                                                         "x" + std::to_string(h));
    if (maxval <= 0 || maxval > 65535)
        throw IoError(IoErrorKind::malformed_header, path + ": bad maxval " + std::to_string(maxval));
    ++r.pos;  // single whitespace after maxval (next_token stopped on it)
    LabelMap lm(static_cast<int>(h), static_cast<int>(w));
    const bool wide = maxval > 255;
    for (size_t i = 0; i < lm.size(); ++i)
        lm.labels[i] = wide ? (static_cast<uint32_t>(r.u8()) << 8) | r.u8() : r.u8();
    r.expect_eof();
    return lm;
}

// --- PFM float maps ----------------------------------------------------------
// Grayscale "Pf", scale -1.0 (little-endian), rows stored bottom-to-top.
// Color "PF" and big-endian (positive scale) files are rejected.

inline void save_floatmap(const std::string& path, const Tensor& map) {
    if (map.shape.size() != 2)
        throw ShapeError("save_floatmap: tensor must be [H,W]");
    const int h = map.dim(0), w = map.dim(1);
    for (float v : map.data)
        if (!std::isfinite(v))
            throw IoError(IoErrorKind::io_failure, path + ": refusing to write non-finite value");
    std::string buf = "Pf\n" + std::to_string(w) + " " + std::to_string(h) + "\n-1.0\n";
    for (int y = h - 1; y >= 0; --y)
        for (int x = 0; x < w; ++x) detail::put_f32le(buf, map.at(y, x));
    detail::write_file(path, buf);
}

inline Tensor load_floatmap(const std::string& path) {
    const std::string buf = detail::read_file(path);
    detail::Reader r{buf, 0, path};
    const std::string magic = r.bytes(2);
    if (magic == "PF")
        throw IoError(IoErrorKind::unsupported_format, path + ": color PFM is not supported");
    if (magic != "Pf") throw IoError(IoErrorKind::bad_magic, path + ": not a PFM file");
    const long w = detail::parse_int(detail::next_token(r, false), path, "width");
    const long h = detail::parse_int(detail::next_token(r, false), path, "height");
    if (w <= 0 || h <= 0 || w * h > (1L << 26))
        throw IoError(IoErrorKind::malformed_header, path + ": bad dimensions");
    const std::string scale_tok = detail::next_token(r, false);
    double scale = 0.0;
    try {
        size_t used = 0;
        scale = std::stod(scale_tok, &used);
        if (used != scale_tok.size()) throw std::invalid_argument(scale_tok);
    } catch (const std::exception&) {
        throw IoError(IoErrorKind::malformed_header, path + ": bad scale '" + scale_tok + "'");
    }
    if (scale >= 0.0)
        throw IoError(IoErrorKind::unsupported_format, path + ": big-endian PFM is not supported");
    ++r.pos;  // single whitespace after the scale line
    Tensor map({static_cast<int>(h), static_cast<int>(w)});
    for (long y = h - 1; y >= 0; --y)
        for (long x = 0; x < w; ++x) map.at(static_cast<int>(y), static_cast<int>(x)) = r.f32le();
    r.expect_eof();
    return map;
}

// --- results CSV -------------------------------------------------------------

inline std::string format_float(double v) {
    char tmp[32];
    std::snprintf(tmp, sizeof(tmp), "%.6g", v);
    return tmp;
}

inline constexpr const char* kResultsCsvHeader =
    "run_id,branch,method,cr,sparsity,dice,mse,aji,pq,speedup";

// Rows are written sorted by (branch, method, cr).
inline void write_results_csv(const std::string& path, std::vector<MetricsReport> rows) {
    std::sort(rows.begin(), rows.end(), [](const MetricsReport& a, const MetricsReport& b) {
        if (a.branch != b.branch) return a.branch < b.branch;
        if (a.method != b.method) return a.method < b.method;
        return a.cr < b.cr;
    });
    std::string buf = std::string(kResultsCsvHeader) + "\n";
    for (const MetricsReport& r : rows) {
        buf += r.run_id + "," + r.branch + "," + r.method + "," + std::to_string(r.cr) + "," +
               format_float(r.sparsity) + "," + format_float(r.dice) + "," + format_float(r.mse) +
               "," + format_float(r.aji) + "," + format_float(r.pq) + "," + format_float(r.speedup) +
               "\n";
    }
    detail::write_file(path, buf);
}

}  // namespace pruneseg
