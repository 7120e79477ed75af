#include "embver/io.hpp"

#include <cstring>
#include <sstream>

namespace embver {

BinaryWriter::BinaryWriter(const std::filesystem::path& path, const char magic[4],
                           std::uint32_t version)
    : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw ValidationError("cannot open for writing: " + path.string());
    raw(magic, 4);
    write_u32(version);
}

void BinaryWriter::raw(const void* data, std::size_t n) {
    out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
}

void BinaryWriter::write_u8(std::uint8_t v) { raw(&v, sizeof v); }
void BinaryWriter::write_u32(std::uint32_t v) { raw(&v, sizeof v); }
void BinaryWriter::write_u64(std::uint64_t v) { raw(&v, sizeof v); }
void BinaryWriter::write_i64(std::int64_t v) { raw(&v, sizeof v); }
void BinaryWriter::write_f64(double v) { raw(&v, sizeof v); }

void BinaryWriter::write_string(const std::string& s) {
    write_u32(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
}

void BinaryWriter::write_matrix(const Mat& m) {
    write_u32(static_cast<std::uint32_t>(m.rows()));
    write_u32(static_cast<std::uint32_t>(m.cols()));
    raw(m.data(), sizeof(double) * static_cast<std::size_t>(m.size()));
}

void BinaryWriter::write_param_set(const ParamSet& p) {
    write_u32(static_cast<std::uint32_t>(p.size()));
    for (const auto& t : p.tensors()) {
        write_string(t.name);
        write_matrix(t.value);
    }
}

void BinaryWriter::finish() {
    out_.flush();
    if (!out_) throw ValidationError("write failed: " + path_.string());
    out_.close();
}

BinaryReader::BinaryReader(const std::filesystem::path& path, const char magic[4],
                           std::uint32_t expected_version)
    : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw ValidationError("cannot open for reading: " + path.string());
    char got[4];
    raw(got, 4);
    if (std::memcmp(got, magic, 4) != 0)
        throw ParseError("bad magic in " + path.string() + " (expected '" +
                         std::string(magic, 4) + "')");
    std::uint32_t ver = read_u32();
    if (ver != expected_version) {
        std::ostringstream msg;
        msg << "unsupported format version " << ver << " in " << path.string()
            << " (expected " << expected_version << ")";
        throw ParseError(msg.str());
    }
}

void BinaryReader::raw(void* data, std::size_t n) {
    in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n)
        throw ParseError("truncated file: " + path_.string());
}

std::uint8_t BinaryReader::read_u8() { std::uint8_t v; raw(&v, sizeof v); return v; }
std::uint32_t BinaryReader::read_u32() { std::uint32_t v; raw(&v, sizeof v); return v; }
std::uint64_t BinaryReader::read_u64() { std::uint64_t v; raw(&v, sizeof v); return v; }
std::int64_t BinaryReader::read_i64() { std::int64_t v; raw(&v, sizeof v); return v; }
double BinaryReader::read_f64() { double v; raw(&v, sizeof v); return v; }

std::string BinaryReader::read_string() {
    std::uint32_t n = read_u32();
    std::string s(n, '\0');
    raw(s.data(), n);
    return s;
}

Mat BinaryReader::read_matrix() {
    std::uint32_t rows = read_u32();
    std::uint32_t cols = read_u32();
    Mat m(rows, cols);
    raw(m.data(), sizeof(double) * static_cast<std::size_t>(m.size()));
    return m;
}

ParamSet BinaryReader::read_param_set() {
    ParamSet p;
    std::uint32_t n = read_u32();
    for (std::uint32_t i = 0; i < n; ++i) {
        std::string name = read_string();
        p.add(std::move(name), read_matrix());
    }
    return p;
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ValidationError("cannot open for writing: " + path.string());
    out << content;
    out.flush();
    if (!out) throw ValidationError("write failed: " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open for reading: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace embver
