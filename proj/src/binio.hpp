#pragma once

// Small binary I/O helpers shared by the model/dataset serializers.
// All multi-byte values are little-endian native (x86); layouts are
// documented next to each format's writer.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace ft::binio {

inline void write_bytes(std::ostream& os, const void* p, size_t n) {
    os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

inline void read_bytes(std::istream& is, void* p, size_t n, const char* what) {
    is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!is || static_cast<size_t>(is.gcount()) != n)
        throw std::runtime_error(std::string("truncated or unreadable field: ") + what);
}

inline void write_u32(std::ostream& os, uint32_t v) { write_bytes(os, &v, 4); }
inline void write_u64(std::ostream& os, uint64_t v) { write_bytes(os, &v, 8); }
inline void write_f64(std::ostream& os, double v) { write_bytes(os, &v, 8); }

inline uint32_t read_u32(std::istream& is, const char* what) {
    uint32_t v;
    read_bytes(is, &v, 4, what);
    return v;
}
inline uint64_t read_u64(std::istream& is, const char* what) {
    uint64_t v;
    read_bytes(is, &v, 8, what);
    return v;
}
inline double read_f64(std::istream& is, const char* what) {
    double v;
    read_bytes(is, &v, 8, what);
    return v;
}

inline void write_f64_array(std::ostream& os, const double* p, size_t n) {
    write_bytes(os, p, n * 8);
}
inline void read_f64_array(std::istream& is, double* p, size_t n, const char* what) {
    read_bytes(is, p, n * 8, what);
}

// FNV-1a 64, used as the checksum trailer on model files.
inline uint64_t fnv1a(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::vector<char> read_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open file: " + path);
    is.seekg(0, std::ios::end);
    const auto len = is.tellg();
    is.seekg(0, std::ios::beg);
    std::vector<char> buf(static_cast<size_t>(len));
    if (len > 0) is.read(buf.data(), len);
    if (!is) throw std::runtime_error("cannot read file: " + path);
    return buf;
}

}  // namespace ft::binio
