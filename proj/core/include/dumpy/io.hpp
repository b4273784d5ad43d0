#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "dumpy/error.hpp"

namespace dumpy {

static_assert(std::endian::native == std::endian::little, "on-disk formats assume a little-endian host");

/// Owned POSIX file descriptor with positional reads and writes.
class File {
public:
    enum class Mode { Read, ReadWrite, Create };

    File() = default;
    File(const std::filesystem::path& path, Mode mode);
    ~File();
    File(File&& other) noexcept;
    File& operator=(File&& other) noexcept;
    File(const File&) = delete;
    File& operator=(const File&) = delete;

    [[nodiscard]] bool is_open() const { return fd_ >= 0; }
    [[nodiscard]] const std::filesystem::path& path() const { return path_; }
    [[nodiscard]] std::uint64_t size() const;

    void read_at(std::uint64_t offset, std::span<std::byte> out) const;
    void write_at(std::uint64_t offset, std::span<const std::byte> data);
    void truncate(std::uint64_t size);
    void sync() const;

private:
    int fd_ = -1;
    std::filesystem::path path_;
};

/// Append-only little-endian serializer for the binary metadata files.
class ByteWriter {
public:
    template <typename T>
        requires std::is_trivially_copyable_v<T>
    void put(T v) {
        const auto* p = reinterpret_cast<const std::byte*>(&v);
        buf_.insert(buf_.end(), p, p + sizeof(T));
    }
    void put_bytes(std::span<const std::byte> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }
    void put_magic(const char (&magic)[5]) {
        put_bytes(std::as_bytes(std::span<const char>(magic, 4)));
    }
    template <typename T>
    void put_vector(const std::vector<T>& v) {
        put<std::uint64_t>(v.size());
        put_bytes(std::as_bytes(std::span<const T>(v)));
    }

    [[nodiscard]] const std::vector<std::byte>& bytes() const { return buf_; }

private:
    std::vector<std::byte> buf_;
};

class ByteReader {
public:
    explicit ByteReader(std::span<const std::byte> data, std::string what) : data_(data), what_(std::move(what)) {}

    template <typename T>
        requires std::is_trivially_copyable_v<T>
    T get() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, data_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    void expect_magic(const char (&magic)[5]) {
        need(4);
        if (std::memcmp(data_.data() + pos_, magic, 4) != 0) throw FormatError(what_ + ": bad magic");
        pos_ += 4;
    }
    template <typename T>
    std::vector<T> get_vector(std::uint64_t max_elems = (1ull << 40)) {
        const auto count = get<std::uint64_t>();
        if (count > max_elems) throw FormatError(what_ + ": implausible element count");
        need(count * sizeof(T));
        std::vector<T> v(count);
        std::memcpy(v.data(), data_.data() + pos_, count * sizeof(T));
        pos_ += count * sizeof(T);
        return v;
    }
    [[nodiscard]] bool at_end() const { return pos_ == data_.size(); }

private:
    void need(std::size_t n) const {
        if (pos_ + n > data_.size()) throw FormatError(what_ + ": truncated");
    }

    std::span<const std::byte> data_;
    std::size_t pos_ = 0;
    std::string what_;
};

std::vector<std::byte> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::byte> data);

/// 64-bit FNV-1a, used to key cached ground-truth files.
std::uint64_t fnv1a(std::span<const std::byte> data, std::uint64_t seed = 14695981039346656037ull);

}  // namespace dumpy
