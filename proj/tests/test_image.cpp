#include <gtest/gtest.h>

#include "headsynth/image.hpp"
#include "headsynth/rng.hpp"
#include "test_helpers.hpp"

using namespace headsynth;

namespace {

Image random_image(int w, int h, int c, std::uint64_t seed) {
  Image img(w, h, c);
  Rng rng(seed);
  for (float& v : img.data()) v = static_cast<float>(rng.uniform(-3, 3));
  return img;
}

}  // namespace

TEST(Image, LayoutIsRowMajorChannelLast) {
  Image img(3, 2, 4);
  img.at(2, 1, 3) = 7.0f;
  EXPECT_EQ(img.data()[(1 * 3 + 2) * 4 + 3], 7.0f);
  EXPECT_THROW(Image(0, 2, 1), ContractViolation);
}

TEST(Image, ChannelSlice) {
  const Image img = random_image(4, 3, 5, 1);
  const Image s = img.channel_slice(1, 2);
  EXPECT_EQ(s.channels(), 2);
  EXPECT_EQ(s.at(3, 2, 1), img.at(3, 2, 2));
  EXPECT_THROW(img.channel_slice(4, 2), ContractViolation);
}

TEST(Pfm, RoundTripOneThreeAndManyChannels) {
  test::TempDir dir("pfm");
  for (int c : {1, 3, 32}) {
    const Image img = random_image(7, 5, c, c);
    const auto path = dir / ("i" + std::to_string(c) + ".pfm");
    write_pfm(img, path);
    EXPECT_EQ(read_pfm(path, c == 32 ? 32 : 0), img) << c << " channels";
  }
  const std::string header = test::read_bytes(dir / "i3.pfm").substr(0, 3);
  EXPECT_EQ(header, "PF\n");
}

TEST(Pfm, StackedChannelsAreBands) {
  test::TempDir dir("pfm_bands");
  const Image img = random_image(4, 3, 6, 9);
  write_pfm(img, dir / "s.pfm");
  const Image flat = read_pfm(dir / "s.pfm");
  ASSERT_EQ(flat.channels(), 1);
  ASSERT_EQ(flat.height(), 3 * 6);
  // PFM rows run bottom to top inside the file; the reader restores top-down order.
  EXPECT_EQ(flat.at(1, 2 * 3 + 1), img.at(1, 1, 2));
}

TEST(Pfm, MalformedFilesAreParseErrors) {
  test::TempDir dir("pfm_bad");
  write_pfm(random_image(4, 4, 1, 2), dir / "ok.pfm");
  const std::string bytes = test::read_bytes(dir / "ok.pfm");
  test::write_bytes(dir / "short.pfm", bytes.substr(0, bytes.size() - 3));
  EXPECT_THROW(read_pfm(dir / "short.pfm"), ParseError);
  test::write_bytes(dir / "magic.pfm", "P6\n4 4\n255\n");
  EXPECT_THROW(read_pfm(dir / "magic.pfm"), ParseError);
  EXPECT_THROW(read_pfm(dir / "missing.pfm"), IoError);
}

TEST(Png, RoundTripQuantizesToEightBits) {
  test::TempDir dir("png");
  Image img(5, 4, 3);
  Rng rng(3);
  for (float& v : img.data()) v = static_cast<float>(rng.uniform(-0.2, 1.2));
  write_png(img, dir / "a.png");
  const Image back = read_png(dir / "a.png");
  ASSERT_TRUE(back.same_shape(img));
  for (std::size_t i = 0; i < img.data().size(); ++i) {
    const float clamped = std::clamp(img.data()[i], 0.0f, 1.0f);
    EXPECT_NEAR(back.data()[i], clamped, 0.5 / 255 + 1e-6);
  }
  EXPECT_THROW(write_png(Image(2, 2, 4), dir / "b.png"), ContractViolation);
}
