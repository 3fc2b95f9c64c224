#pragma once
// Error types, hashing and small I/O helpers shared by every module.

#include <atomic>
#include <bit>
#include <cerrno>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <fcntl.h>
#include <openssl/evp.h>
#include <unistd.h>

namespace deepxsoz {

// Exit-code families used by the CLI: config -> 2, data -> 3, runtime -> 4.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class FormatError : public DataError {
public:
    using DataError::DataError;
};

class RuntimeFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& what) {
    if (!cond) throw std::invalid_argument(what);
}

class Sha256 {
public:
    Sha256() : ctx_(EVP_MD_CTX_new()) {
        if (ctx_ == nullptr || EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr) != 1)
            throw RuntimeFailure("sha256: digest init failed");
    }
    ~Sha256() { EVP_MD_CTX_free(ctx_); }
    Sha256(const Sha256&) = delete;
    Sha256& operator=(const Sha256&) = delete;

    Sha256& update(const void* data, std::size_t n) {
        EVP_DigestUpdate(ctx_, data, n);
        return *this;
    }
    Sha256& update(std::string_view s) { return update(s.data(), s.size()); }
    template <typename T>
    Sha256& update(std::span<const T> xs) { return update(xs.data(), xs.size_bytes()); }

    std::string hex() {
        unsigned char md[EVP_MAX_MD_SIZE];
        unsigned int len = 0;
        EVP_DigestFinal_ex(ctx_, md, &len);
        static constexpr char digits[] = "0123456789abcdef";
        std::string out;
        out.reserve(2 * len);
        for (unsigned int i = 0; i < len; ++i) {
            out.push_back(digits[md[i] >> 4]);
            out.push_back(digits[md[i] & 0xF]);
        }
        return out;
    }

private:
    EVP_MD_CTX* ctx_;
};

inline std::string sha256_hex(std::string_view bytes) { return Sha256{}.update(bytes).hex(); }

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Writes to a uniquely named sibling temp file and renames it into place so
// readers never observe a partially written file. With `durable`, the data
// and the directory entry are fsynced before returning.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view bytes, bool durable = false) {
    namespace fs = std::filesystem;
    static std::atomic<std::uint64_t> counter{0};
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp." + std::to_string(::getpid()) + "." + std::to_string(counter++);
    const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
    if (fd < 0) throw RuntimeFailure("cannot write " + tmp.string() + ": " + std::strerror(errno));
    std::size_t done = 0;
    while (done < bytes.size()) {
        const ssize_t n = ::write(fd, bytes.data() + done, bytes.size() - done);
        if (n < 0 && errno == EINTR) continue;
        if (n <= 0) {
            const int err = errno;
            ::close(fd);
            fs::remove(tmp);
            throw RuntimeFailure("write failed for " + tmp.string() + ": " + std::strerror(err));
        }
        done += static_cast<std::size_t>(n);
    }
    if (durable && ::fsync(fd) != 0) {
        ::close(fd);
        throw RuntimeFailure("fsync failed for " + tmp.string());
    }
    ::close(fd);
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp);
        throw RuntimeFailure("cannot move " + tmp.string() + " into place: " + ec.message());
    }
    if (durable) {
        const auto dir = path.has_parent_path() ? path.parent_path() : fs::path(".");
        const int dfd = ::open(dir.c_str(), O_RDONLY | O_DIRECTORY | O_CLOEXEC);
        if (dfd >= 0) {
            ::fsync(dfd);
            ::close(dfd);
        }
    }
}

// Little-endian binary encoding helpers.
class ByteWriter {
public:
    template <typename T>
    void put(T value) {
        static_assert(std::is_trivially_copyable_v<T>);
        const auto* p = reinterpret_cast<const char*>(&value);
        if constexpr (std::endian::native == std::endian::little) {
            buf_.append(p, sizeof(T));
        } else {
            for (std::size_t i = sizeof(T); i-- > 0;) buf_.push_back(p[i]);
        }
    }
    void put_bytes(std::string_view s) { buf_.append(s); }
    template <typename T>
    void put_array(std::span<const T> xs) {
        if constexpr (std::endian::native == std::endian::little) {
            buf_.append(reinterpret_cast<const char*>(xs.data()), xs.size_bytes());
        } else {
            for (const T& x : xs) put(x);
        }
    }
    const std::string& bytes() const { return buf_; }
    std::string take() { return std::move(buf_); }

private:
    std::string buf_;
};

class ByteReader {
public:
    explicit ByteReader(std::string_view data, std::string context = {})
        : data_(data), context_(std::move(context)) {}

    template <typename T>
    T get() {
        need(sizeof(T));
        T value;
        auto* p = reinterpret_cast<char*>(&value);
        if constexpr (std::endian::native == std::endian::little) {
            std::memcpy(p, data_.data() + pos_, sizeof(T));
        } else {
            for (std::size_t i = 0; i < sizeof(T); ++i) p[sizeof(T) - 1 - i] = data_[pos_ + i];
        }
        pos_ += sizeof(T);
        return value;
    }
    std::string_view get_bytes(std::size_t n) {
        need(n);
        auto out = data_.substr(pos_, n);
        pos_ += n;
        return out;
    }
    template <typename T>
    std::vector<T> get_array(std::size_t n) {
        if (n > remaining() / sizeof(T)) truncated();
        std::vector<T> out(n);
        if constexpr (std::endian::native == std::endian::little) {
            std::memcpy(out.data(), data_.data() + pos_, n * sizeof(T));
            pos_ += n * sizeof(T);
        } else {
            for (auto& x : out) x = get<T>();
        }
        return out;
    }
    std::size_t remaining() const { return data_.size() - pos_; }

private:
    void need(std::size_t n) const {
        if (n > remaining()) truncated();
    }
    [[noreturn]] void truncated() const { throw FormatError("truncated data" + (context_.empty() ? "" : " in " + context_)); }

    std::string_view data_;
    std::size_t pos_ = 0;
    std::string context_;
};

}  // namespace deepxsoz
