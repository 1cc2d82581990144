#include "edcforge/io_util.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include "edcforge/errors.hpp"

namespace edcforge {

static_assert(std::endian::native == std::endian::little,
              "on-disk formats are little-endian; big-endian hosts are unsupported");

void write_bytes(std::ostream& out, const void* data, std::size_t n) {
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    if (!out) throw IoError("write failed");
}

void write_u16(std::ostream& out, std::uint16_t v) { write_bytes(out, &v, 2); }
void write_i16(std::ostream& out, std::int16_t v) { write_bytes(out, &v, 2); }
void write_u32(std::ostream& out, std::uint32_t v) { write_bytes(out, &v, 4); }
void write_u64(std::ostream& out, std::uint64_t v) { write_bytes(out, &v, 8); }
void write_f32(std::ostream& out, float v) { write_bytes(out, &v, 4); }

void read_bytes(std::istream& in, void* data, std::size_t n) {
    in.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n)
        throw FormatError("unexpected end of file");
}

std::uint32_t read_u32(std::istream& in) {
    std::uint32_t v;
    read_bytes(in, &v, 4);
    return v;
}

std::uint64_t read_u64(std::istream& in) {
    std::uint64_t v;
    read_bytes(in, &v, 8);
    return v;
}

float read_f32(std::istream& in) {
    float v;
    read_bytes(in, &v, 4);
    return v;
}

namespace {

std::array<std::uint32_t, 256> make_crc_table() {
    std::array<std::uint32_t, 256> table{};
    for (std::uint32_t i = 0; i < 256; ++i) {
        std::uint32_t c = i;
        for (int k = 0; k < 8; ++k)
            c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
        table[i] = c;
    }
    return table;
}

const std::array<std::uint32_t, 256>& crc_table() {
    static const auto table = make_crc_table();
    return table;
}

} // namespace

std::uint32_t crc32(std::span<const unsigned char> data, std::uint32_t seed) {
    const auto& table = crc_table();
    std::uint32_t c = seed ^ 0xffffffffu;
    for (unsigned char byte : data)
        c = table[(c ^ byte) & 0xffu] ^ (c >> 8);
    return c ^ 0xffffffffu;
}

std::uint32_t crc32_of_file(const std::filesystem::path& path) {
    auto bytes = read_file_bytes(path);
    return crc32(bytes);
}

std::string crc32_hex(std::uint32_t crc) {
    static const char* digits = "0123456789abcdef";
    std::string out(8, '0');
    for (int i = 7; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[crc & 0xfu];
        crc >>= 4;
    }
    return out;
}

std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file: " + path.string());
    in.seekg(0, std::ios::end);
    const auto size = static_cast<std::size_t>(in.tellg());
    in.seekg(0, std::ios::beg);
    std::vector<unsigned char> bytes(size);
    if (size > 0) read_bytes(in, bytes.data(), size);
    return bytes;
}

void write_file_bytes(const std::filesystem::path& path, std::span<const unsigned char> data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open file for writing: " + path.string());
    if (!data.empty()) write_bytes(out, data.data(), data.size());
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open file for writing: " + path.string());
    out << text;
    if (!out) throw IoError("write failed: " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
    auto bytes = read_file_bytes(path);
    return std::string(bytes.begin(), bytes.end());
}

void write_f32_file(const std::filesystem::path& path, std::span<const float> values) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open file for writing: " + path.string());
    if (!values.empty()) write_bytes(out, values.data(), values.size() * sizeof(float));
}

std::vector<float> read_f32_file(const std::filesystem::path& path) {
    auto bytes = read_file_bytes(path);
    if (bytes.size() % sizeof(float) != 0)
        throw FormatError("float file size not a multiple of 4: " + path.string());
    std::vector<float> values(bytes.size() / sizeof(float));
    if (!values.empty()) std::memcpy(values.data(), bytes.data(), bytes.size());
    return values;
}

} // namespace edcforge
