#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>

#include "embver/common.hpp"
#include "embver/tensor.hpp"

namespace embver {

// Little-endian binary container IO. Every persisted artifact starts with a
// 4-byte magic tag and a u32 format version; loads validate both.
class BinaryWriter {
public:
    BinaryWriter(const std::filesystem::path& path, const char magic[4], std::uint32_t version);

    void write_u8(std::uint8_t v);
    void write_u32(std::uint32_t v);
    void write_u64(std::uint64_t v);
    void write_i64(std::int64_t v);
    void write_f64(double v);
    void write_string(const std::string& s);
    void write_matrix(const Mat& m);
    void write_param_set(const ParamSet& p);

    // Flushes and checks stream health.
    void finish();

private:
    void raw(const void* data, std::size_t n);
    std::filesystem::path path_;
    std::ofstream out_;
};

class BinaryReader {
public:
    BinaryReader(const std::filesystem::path& path, const char magic[4],
                 std::uint32_t expected_version);

    std::uint8_t read_u8();
    std::uint32_t read_u32();
    std::uint64_t read_u64();
    std::int64_t read_i64();
    double read_f64();
    std::string read_string();
    Mat read_matrix();
    ParamSet read_param_set();

private:
    void raw(void* data, std::size_t n);
    std::filesystem::path path_;
    std::ifstream in_;
};

// Writes text atomically enough for our purposes (truncate + write + close).
void write_text_file(const std::filesystem::path& path, const std::string& content);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace embver
