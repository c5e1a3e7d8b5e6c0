#include "geoflow/binary_io.hpp"

#include <bit>
#include <fstream>
#include <iterator>

#include "geoflow/errors.hpp"

namespace geoflow {

namespace {

template <typename Word>
void put_le(std::vector<unsigned char>& out, Word w)
{
    for (std::size_t i = 0; i < sizeof(Word); ++i) {
        out.push_back(static_cast<unsigned char>((w >> (8U * i)) & 0xFFU));
    }
}

template <typename Word>
Word get_le(const unsigned char* p)
{
    Word w = 0;
    for (std::size_t i = 0; i < sizeof(Word); ++i) {
        w |= static_cast<Word>(p[i]) << (8U * i);
    }
    return w;
}

} // namespace

void ByteWriter::bytes(std::string_view raw) { buffer_.insert(buffer_.end(), raw.begin(), raw.end()); }
void ByteWriter::u32(std::uint32_t v) { put_le(buffer_, v); }
void ByteWriter::f32(float v) { put_le(buffer_, std::bit_cast<std::uint32_t>(v)); }
void ByteWriter::f64(double v) { put_le(buffer_, std::bit_cast<std::uint64_t>(v)); }

void write_file(const std::filesystem::path& path, const std::vector<unsigned char>& bytes)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw std::runtime_error("failed writing '" + path.string() + "'");
    }
}

std::vector<unsigned char> read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open '" + path.string() + "' for reading");
    }
    return std::vector<unsigned char>((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void ByteWriter::save(const std::filesystem::path& path) const { write_file(path, buffer_); }

ByteReader ByteReader::from_file(const std::filesystem::path& path) { return ByteReader(read_file(path)); }

void ByteReader::require(std::size_t n, const char* what) const
{
    if (remaining() < n) {
        throw FormatError(std::string("truncated file while reading ") + what, offset_);
    }
}

std::string ByteReader::bytes(std::size_t n, const char* what)
{
    require(n, what);
    std::string out(reinterpret_cast<const char*>(data_.data() + offset_), n);
    offset_ += n;
    return out;
}

std::uint32_t ByteReader::u32(const char* what)
{
    require(4, what);
    const auto v = get_le<std::uint32_t>(data_.data() + offset_);
    offset_ += 4;
    return v;
}

float ByteReader::f32(const char* what) { return std::bit_cast<float>(u32(what)); }

double ByteReader::f64(const char* what)
{
    require(8, what);
    const auto v = get_le<std::uint64_t>(data_.data() + offset_);
    offset_ += 8;
    return std::bit_cast<double>(v);
}

} // namespace geoflow
