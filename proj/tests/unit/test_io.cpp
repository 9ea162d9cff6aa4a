#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "vvlab/io.hpp"

using namespace vvlab;

TEST(FieldIo, BinaryRoundTripIsExact) {
  const auto dir = std::filesystem::temp_directory_path() / "vvlab_io_test";
  std::filesystem::remove_all(dir);
  GridSpec g(2, 8);
  ScalarField f(g);
  std::mt19937_64 gen(5);
  std::normal_distribution<double> n;
  for (auto& x : f.values()) x = n(gen);
  io::write_field(dir / "u", f, {"u", 0.5});
  EXPECT_EQ(std::filesystem::file_size(dir / "u.bin"), 64u * 8u);
  const auto [h, meta] = io::read_field(dir / "u");
  EXPECT_EQ(h.grid(), g);
  EXPECT_EQ(meta.name, "u");
  EXPECT_EQ(meta.time, 0.5);
  for (std::size_t i = 0; i < f.size(); ++i) EXPECT_EQ(f[i], h[i]);

  // Little-endian byte layout of the first value.
  std::ifstream in(dir / "u.bin", std::ios::binary);
  unsigned char bytes[8];
  in.read(reinterpret_cast<char*>(bytes), 8);
  std::uint64_t bits = 0;
  for (int b = 7; b >= 0; --b) bits = (bits << 8) | bytes[b];
  EXPECT_EQ(std::bit_cast<double>(bits), f[0]);

  const auto side = nlohmann::json::parse(std::ifstream(dir / "u.json"));
  EXPECT_EQ(side.at("dim"), 2);
  EXPECT_EQ(side.at("N"), 8);
  std::filesystem::remove_all(dir);
}

TEST(FieldIo, CsvHasIndexColumns) {
  const auto dir = std::filesystem::temp_directory_path() / "vvlab_io_csv";
  GridSpec g(2, 2);
  ScalarField f(g, std::vector<double>{1, 2, 3, 4});
  io::write_field_csv(dir / "f.csv", f);
  std::ifstream in(dir / "f.csv");
  std::string header, row;
  std::getline(in, header);
  EXPECT_EQ(header, "i,j,value");
  std::getline(in, row);
  EXPECT_EQ(row.substr(0, 4), "0,0,");
  std::filesystem::remove_all(dir);
}

TEST(FieldIo, MissingFileRejected) {
  EXPECT_THROW(io::read_field("/nonexistent/vvlab/field"), ContractViolation);
}
