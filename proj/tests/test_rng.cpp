#include <fidux/rng.hpp>

#include <gtest/gtest.h>

#include <set>

namespace {

using fidux::Philox4x32;

// Known-answer vectors published with Random123 (kat_vectors, philox4x32 10).
TEST(Philox, KnownAnswerZero) {
  const auto out = Philox4x32::block({0, 0, 0, 0}, {0, 0});
  EXPECT_EQ(out[0], 0x6627e8d5u);
  EXPECT_EQ(out[1], 0xe169c58du);
  EXPECT_EQ(out[2], 0xbc57ac4cu);
  EXPECT_EQ(out[3], 0x9b00dbd8u);
}

TEST(Philox, KnownAnswerOnes) {
  const auto out = Philox4x32::block({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu});
  EXPECT_EQ(out[0], 0x408f276du);
  EXPECT_EQ(out[1], 0x41c83b0eu);
  EXPECT_EQ(out[2], 0xa20bc7c6u);
  EXPECT_EQ(out[3], 0x6d5451fdu);
}

TEST(Philox, KnownAnswerPi) {
  const auto out = Philox4x32::block({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u});
  EXPECT_EQ(out[0], 0xd16cfe09u);
  EXPECT_EQ(out[1], 0x94fdccebu);
  EXPECT_EQ(out[2], 0x5001e420u);
  EXPECT_EQ(out[3], 0x24126ea1u);
}

TEST(Rng, SameSeedSameStream) {
  fidux::Rng a(42, 7), b(42, 7);
  for (int i = 0; i < 1000; ++i) {
    ASSERT_EQ(a.uniform(), b.uniform());
    ASSERT_EQ(a.normal(), b.normal());
  }
}

TEST(Rng, SubstreamsDiffer) {
  std::set<double> firsts;
  for (std::uint64_t s = 0; s < 64; ++s) firsts.insert(fidux::Rng(1, s).uniform());
  EXPECT_EQ(firsts.size(), 64u);
  EXPECT_NE(fidux::substream_id(0, 1, fidux::StreamPurpose::data), fidux::substream_id(1, 0, fidux::StreamPurpose::data));
  EXPECT_NE(fidux::substream_id(3, 5, fidux::StreamPurpose::data), fidux::substream_id(3, 5, fidux::StreamPurpose::chain));
}

TEST(Rng, UniformIsOpenInterval) {
  fidux::Rng r(3);
  double lo = 1.0, hi = 0.0, sum = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform();
    lo = std::min(lo, u);
    hi = std::max(hi, u);
    sum += u;
  }
  EXPECT_GT(lo, 0.0);
  EXPECT_LT(hi, 1.0);
  EXPECT_NEAR(sum / n, 0.5, 0.005);
}

}  // namespace
