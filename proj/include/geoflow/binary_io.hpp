#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace geoflow {

// Whole-file helpers; failures raise std::runtime_error naming the path.
void write_file(const std::filesystem::path& path, const std::vector<unsigned char>& bytes);
std::vector<unsigned char> read_file(const std::filesystem::path& path);

// Little-endian byte buffer builder shared by the GFFD and GFCK writers.
class ByteWriter {
public:
    void bytes(std::string_view raw);
    void u32(std::uint32_t v);
    void f32(float v);
    void f64(double v);

    [[nodiscard]] const std::vector<unsigned char>& buffer() const noexcept { return buffer_; }
    void save(const std::filesystem::path& path) const;

private:
    std::vector<unsigned char> buffer_;
};

// Bounds-checked little-endian reader; failures raise FormatError at the current offset.
class ByteReader {
public:
    explicit ByteReader(std::vector<unsigned char> data) : data_(std::move(data)) {}
    static ByteReader from_file(const std::filesystem::path& path);

    std::string bytes(std::size_t n, const char* what);
    std::uint32_t u32(const char* what);
    float f32(const char* what);
    double f64(const char* what);

    [[nodiscard]] std::size_t offset() const noexcept { return offset_; }
    [[nodiscard]] std::size_t remaining() const noexcept { return data_.size() - offset_; }

private:
    void require(std::size_t n, const char* what) const;

    std::vector<unsigned char> data_;
    std::size_t offset_ = 0;
};

} // namespace geoflow
