#include <gtest/gtest.h>

#include <zlib.h>

#include <string>

#include "memcap/error.hpp"
#include "memcap/io.hpp"
#include "support.hpp"

namespace memcap {
namespace {

TEST(Io, Sha256KnownVectors) {
  EXPECT_EQ(io::sha256_hex(std::string_view("")),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(io::sha256_hex(std::string_view("abc")),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Io, FormatDoubleNineDigits) {
  EXPECT_EQ(io::format_double(0.1), "0.1");
  EXPECT_EQ(io::format_double(1.0 / 3.0), "0.333333333");
  EXPECT_EQ(io::format_double(1209866.0), "1209866");
  EXPECT_EQ(io::format_double(1e-12), "1e-12");
}

TEST(Io, ReadBigEndian) {
  const std::vector<std::uint8_t> bytes{0x00, 0x00, 0x08, 0x03, 0x00, 0x00, 0xea, 0x60};
  EXPECT_EQ(io::read_be32(bytes, 0), 0x803u);
  EXPECT_EQ(io::read_be32(bytes, 4), 60000u);
  EXPECT_THROW(io::read_be32(bytes, 5), ValidationError);
}

TEST(Io, RoundTripPlainAndGzip) {
  const auto dir = testing::scratch_dir("io");
  const std::vector<std::uint8_t> payload{1, 2, 3, 250, 0, 7};
  io::write_bytes(dir / "plain.bin", payload);
  EXPECT_EQ(io::read_bytes(dir / "plain.bin"), payload);

  const auto gz_path = dir / "packed.bin.gz";
  gzFile f = gzopen(gz_path.c_str(), "wb");
  ASSERT_NE(f, nullptr);
  gzwrite(f, payload.data(), static_cast<unsigned>(payload.size()));
  gzclose(f);
  EXPECT_EQ(io::read_bytes(gz_path), payload);
}

TEST(Io, MissingFileIsIoError) {
  EXPECT_THROW(io::read_bytes("/nonexistent/memcap/file"), IoError);
  EXPECT_THROW(io::read_bytes("/nonexistent/memcap/file.gz"), IoError);
}

}  // namespace
}  // namespace memcap
