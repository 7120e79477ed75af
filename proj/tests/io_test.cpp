#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "embver/io.hpp"
#include "test_support.hpp"

using namespace embver;
using embver::testing::TempDir;

namespace {
constexpr char kMagic[4] = {'T', 'E', 'S', 'T'};
}

TEST(BinaryIoTest, ScalarRoundTripBitExact) {
    TempDir dir;
    auto path = dir.file("scalars.bin");
    {
        BinaryWriter w(path, kMagic, 3);
        w.write_u8(200);
        w.write_u32(0xDEADBEEF);
        w.write_u64(0x0123456789ABCDEFull);
        w.write_i64(-42);
        w.write_f64(0.1);
        w.write_f64(-0.0);
        w.write_f64(std::numeric_limits<double>::denorm_min());
        w.write_f64(1.0 / 3.0);
        w.write_string("hello world");
        w.write_string("");
        w.finish();
    }
    BinaryReader r(path, kMagic, 3);
    EXPECT_EQ(r.read_u8(), 200);
    EXPECT_EQ(r.read_u32(), 0xDEADBEEF);
    EXPECT_EQ(r.read_u64(), 0x0123456789ABCDEFull);
    EXPECT_EQ(r.read_i64(), -42);
    EXPECT_EQ(r.read_f64(), 0.1);
    double neg_zero = r.read_f64();
    EXPECT_TRUE(std::signbit(neg_zero));
    EXPECT_EQ(r.read_f64(), std::numeric_limits<double>::denorm_min());
    EXPECT_EQ(r.read_f64(), 1.0 / 3.0);
    EXPECT_EQ(r.read_string(), "hello world");
    EXPECT_EQ(r.read_string(), "");
}

TEST(BinaryIoTest, MatrixAndParamSetRoundTrip) {
    TempDir dir;
    auto path = dir.file("mats.bin");
    Mat m = Mat::Random(5, 3);
    ParamSet p;
    p.add("layer0.weight", Mat::Random(4, 4));
    p.add("layer0.bias", Mat::Random(4, 1));
    {
        BinaryWriter w(path, kMagic, 1);
        w.write_matrix(m);
        w.write_param_set(p);
        w.finish();
    }
    BinaryReader r(path, kMagic, 1);
    Mat m2 = r.read_matrix();
    ASSERT_EQ(m2.rows(), m.rows());
    ASSERT_EQ(m2.cols(), m.cols());
    EXPECT_TRUE((m.array() == m2.array()).all());
    ParamSet p2 = r.read_param_set();
    EXPECT_EQ(p, p2);
}

TEST(BinaryIoTest, RejectsWrongMagic) {
    TempDir dir;
    auto path = dir.file("magic.bin");
    {
        BinaryWriter w(path, kMagic, 1);
        w.write_u32(7);
        w.finish();
    }
    constexpr char other[4] = {'N', 'O', 'P', 'E'};
    EXPECT_THROW(BinaryReader(path, other, 1), ParseError);
}

TEST(BinaryIoTest, RejectsWrongVersion) {
    TempDir dir;
    auto path = dir.file("version.bin");
    {
        BinaryWriter w(path, kMagic, 2);
        w.finish();
    }
    EXPECT_THROW(BinaryReader(path, kMagic, 1), ParseError);
}

TEST(BinaryIoTest, TruncationDetected) {
    TempDir dir;
    auto path = dir.file("trunc.bin");
    {
        BinaryWriter w(path, kMagic, 1);
        w.write_u32(7);
        w.finish();
    }
    BinaryReader r(path, kMagic, 1);
    EXPECT_EQ(r.read_u32(), 7u);
    EXPECT_THROW(r.read_u64(), ParseError);
}

TEST(BinaryIoTest, MissingFileRejected) {
    TempDir dir;
    EXPECT_THROW(BinaryReader(dir.file("absent.bin"), kMagic, 1), ValidationError);
}

TEST(TextIoTest, RoundTrip) {
    TempDir dir;
    auto path = dir.file("note.txt");
    write_text_file(path, "line one\nline two\n");
    EXPECT_EQ(read_text_file(path), "line one\nline two\n");
    EXPECT_THROW(read_text_file(dir.file("absent.txt")), ValidationError);
}
