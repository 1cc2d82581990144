#pragma once

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <istream>
#include <span>
#include <string>
#include <vector>

namespace edcforge {

// Little-endian binary primitives. The host is assumed little-endian (checked
// once at startup of anything that serializes); all on-disk formats are LE.

void write_u16(std::ostream& out, std::uint16_t v);
void write_i16(std::ostream& out, std::int16_t v);
void write_u32(std::ostream& out, std::uint32_t v);
void write_u64(std::ostream& out, std::uint64_t v);
void write_f32(std::ostream& out, float v);
void write_bytes(std::ostream& out, const void* data, std::size_t n);

std::uint32_t read_u32(std::istream& in);
std::uint64_t read_u64(std::istream& in);
float read_f32(std::istream& in);
void read_bytes(std::istream& in, void* data, std::size_t n);

// CRC-32 (IEEE 802.3 polynomial, reflected).
std::uint32_t crc32(std::span<const unsigned char> data, std::uint32_t seed = 0);
std::uint32_t crc32_of_file(const std::filesystem::path& path);
std::string crc32_hex(std::uint32_t crc);

std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const unsigned char> data);

void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

// Raw float32 array files (features.f32 and friends).
void write_f32_file(const std::filesystem::path& path, std::span<const float> values);
std::vector<float> read_f32_file(const std::filesystem::path& path);

} // namespace edcforge
