// ============================================================================
// util.hpp - error types, stable hashing, atomic file output
// ============================================================================

#pragma once
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace con2 {

// Validation / bad configuration. The CLI maps this to exit code 2.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Numerical failure (non-finite loss, singular covariance, ...). Exit code 3.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Referenced artifact (checkpoint, score file, ...) does not exist. Exit code 4.
struct ArtifactError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// FNV-1a, used for config hashes embedded in artifacts. Stable across
// platforms, unlike std::hash.
inline std::uint64_t fnv1a64(const void* data, std::size_t n,
                             std::uint64_t h = 14695981039346656037ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

inline std::uint64_t fnv1a64(const std::string& s) {
    return fnv1a64(s.data(), s.size());
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return std::string(buf);
}

// Shortest round-trip decimal for doubles; keeps CSV output reproducible.
inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    double back = std::strtod(buf, nullptr);
    if (back == v) {
        for (int prec = 1; prec < 17; ++prec) {
            char shorter[40];
            std::snprintf(shorter, sizeof(shorter), "%.*g", prec, v);
            if (std::strtod(shorter, nullptr) == v) return std::string(shorter);
        }
    }
    return std::string(buf);
}

// Concurrent pipelines never observe partial files: write to a temp path in
// the same directory, then rename.
inline void atomic_write_file(const std::filesystem::path& path, const std::string& bytes) {
    namespace fs = std::filesystem;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ArtifactError("cannot open for writing: " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw ArtifactError("write failed: " + tmp.string());
    }
    fs::rename(tmp, path);
}

inline std::string read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ArtifactError("missing artifact: " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return bytes;
}

// Little-endian binary encoding for parameter blobs and score-model payloads.
static_assert(__BYTE_ORDER__ == __ORDER_LITTLE_ENDIAN__,
              "artifact file formats assume a little-endian host");

class ByteWriter {
  public:
    void u32(std::uint32_t v) { raw(&v, 4); }
    void u64(std::uint64_t v) { raw(&v, 8); }
    void f32(float v) { raw(&v, 4); }
    void f64(double v) { raw(&v, 8); }
    void f32s(const std::vector<float>& v) { raw(v.data(), v.size() * 4); }
    void str(const std::string& s) {
        u64(s.size());
        raw(s.data(), s.size());
    }
    void raw(const void* p, std::size_t n) {
        auto* b = static_cast<const char*>(p);
        buf_.insert(buf_.end(), b, b + n);
    }
    const std::string& bytes() const { return buf_; }

  private:
    std::string buf_;
};

class ByteReader {
  public:
    explicit ByteReader(const std::string& bytes) : buf_(bytes) {}
    std::uint32_t u32() { return get<std::uint32_t>(); }
    std::uint64_t u64() { return get<std::uint64_t>(); }
    float f32() { return get<float>(); }
    double f64() { return get<double>(); }
    std::vector<float> f32s(std::size_t n) {
        need(n * 4);
        std::vector<float> v(n);
        std::memcpy(v.data(), buf_.data() + pos_, n * 4);
        pos_ += n * 4;
        return v;
    }
    std::string str() {
        std::size_t n = u64();
        need(n);
        std::string s(buf_.data() + pos_, n);
        pos_ += n;
        return s;
    }
    bool done() const { return pos_ == buf_.size(); }

  private:
    template <class T>
    T get() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, buf_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    void need(std::size_t n) const {
        if (pos_ + n > buf_.size()) throw ArtifactError("truncated artifact file");
    }
    const std::string& buf_;
    std::size_t pos_ = 0;
};

}  // namespace con2
