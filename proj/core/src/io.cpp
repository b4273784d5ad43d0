#include "dumpy/io.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <cerrno>
#include <utility>

namespace dumpy {

namespace {

[[noreturn]] void fail(const std::string& what, const std::filesystem::path& path) {
    throw StorageError(what + " '" + path.string() + "': " + std::strerror(errno));
}

}  // namespace

File::File(const std::filesystem::path& path, Mode mode) : path_(path) {
    int flags = O_RDONLY;
    if (mode == Mode::ReadWrite) flags = O_RDWR;
    if (mode == Mode::Create) flags = O_RDWR | O_CREAT | O_TRUNC;
    fd_ = ::open(path.c_str(), flags | O_CLOEXEC, 0644);
    if (fd_ < 0) fail("cannot open", path);
}

File::~File() {
    if (fd_ >= 0) ::close(fd_);
}

File::File(File&& other) noexcept : fd_(std::exchange(other.fd_, -1)), path_(std::move(other.path_)) {}

File& File::operator=(File&& other) noexcept {
    if (this != &other) {
        if (fd_ >= 0) ::close(fd_);
        fd_ = std::exchange(other.fd_, -1);
        path_ = std::move(other.path_);
    }
    return *this;
}

std::uint64_t File::size() const {
    struct stat st {};
    if (::fstat(fd_, &st) != 0) fail("cannot stat", path_);
    return static_cast<std::uint64_t>(st.st_size);
}

void File::read_at(std::uint64_t offset, std::span<std::byte> out) const {
    std::size_t done = 0;
    while (done < out.size()) {
        const ssize_t r = ::pread(fd_, out.data() + done, out.size() - done, static_cast<off_t>(offset + done));
        if (r < 0) {
            if (errno == EINTR) continue;
            fail("read failed on", path_);
        }
        if (r == 0) throw FormatError("unexpected end of file in '" + path_.string() + "'");
        done += static_cast<std::size_t>(r);
    }
}

void File::write_at(std::uint64_t offset, std::span<const std::byte> data) {
    std::size_t done = 0;
    while (done < data.size()) {
        const ssize_t r = ::pwrite(fd_, data.data() + done, data.size() - done, static_cast<off_t>(offset + done));
        if (r < 0) {
            if (errno == EINTR) continue;
            fail("write failed on", path_);
        }
        done += static_cast<std::size_t>(r);
    }
}

void File::truncate(std::uint64_t size) {
    if (::ftruncate(fd_, static_cast<off_t>(size)) != 0) fail("cannot truncate", path_);
}

void File::sync() const {
    if (::fsync(fd_) != 0) fail("fsync failed on", path_);
}

std::vector<std::byte> read_file(const std::filesystem::path& path) {
    File f(path, File::Mode::Read);
    std::vector<std::byte> buf(f.size());
    f.read_at(0, buf);
    return buf;
}

void write_file(const std::filesystem::path& path, std::span<const std::byte> data) {
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        File f(tmp, File::Mode::Create);
        f.write_at(0, data);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw StorageError("cannot rename '" + tmp.string() + "': " + ec.message());
}

std::uint64_t fnv1a(std::span<const std::byte> data, std::uint64_t seed) {
    std::uint64_t h = seed;
    for (std::byte b : data) {
        h ^= static_cast<std::uint64_t>(b);
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace dumpy
