#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>

namespace fidux {

// Philox4x32-10 counter-based generator (Salmon et al., Random123).
// The key holds the user seed, the upper half of the counter holds the
// substream id and the lower half is the position within the substream, so
// (seed, stream) pairs give independent, reproducible sequences.
class Philox4x32 {
public:
  using result_type = std::uint64_t;
  using counter_type = std::array<std::uint32_t, 4>;
  using key_type = std::array<std::uint32_t, 2>;

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  explicit Philox4x32(std::uint64_t seed = 0, std::uint64_t stream = 0)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        stream_(stream) {}

  // Raw block function, exposed for known-answer tests.
  static counter_type block(counter_type ctr, key_type key) {
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += kWeyl0;
        key[1] += kWeyl1;
      }
      const std::uint64_t p0 = std::uint64_t{kMul0} * ctr[0];
      const std::uint64_t p1 = std::uint64_t{kMul1} * ctr[2];
      ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0], static_cast<std::uint32_t>(p1),
             static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1], static_cast<std::uint32_t>(p0)};
    }
    return ctr;
  }

  result_type operator()() {
    if (buffered_ == 0) refill();
    --buffered_;
    const std::size_t at = 2 * (1 - buffered_);
    return (std::uint64_t{out_[at]} << 32) | out_[at + 1];
  }

  std::uint64_t stream() const { return stream_; }
  std::uint64_t position() const { return position_; }

private:
  static constexpr std::uint32_t kMul0 = 0xD2511F53u;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

  void refill() {
    const counter_type ctr{static_cast<std::uint32_t>(position_), static_cast<std::uint32_t>(position_ >> 32),
                           static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)};
    out_ = block(ctr, key_);
    ++position_;
    buffered_ = 2;
  }

  key_type key_;
  std::uint64_t stream_ = 0;
  std::uint64_t position_ = 0;
  counter_type out_{};
  std::size_t buffered_ = 0;
};

// Substream ids used throughout the library. Replication-level work derives
// its streams from (scenario, replication, purpose) so results do not depend
// on how replications are scheduled across threads.
enum class StreamPurpose : std::uint64_t { data = 0, chain = 1, baseline = 2, censoring = 3 };

inline std::uint64_t substream_id(std::uint64_t scenario, std::uint64_t replication, StreamPurpose purpose) {
  return (scenario << 44) | ((replication & 0xFFFFFFFFFull) << 8) | static_cast<std::uint64_t>(purpose);
}

// Convenience wrapper: variates used by the samplers, all drawn from one
// Philox substream.
class Rng {
public:
  explicit Rng(std::uint64_t seed = 0, std::uint64_t stream = 0) : engine_(seed, stream) {}

  // Uniform on the open interval (0, 1); 53-bit resolution, never 0 or 1.
  double uniform() { return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal() { return normal_(engine_); }

  // Exponential with the given rate (mean 1/rate), by inversion.
  double exponential(double rate) { return -std::log(uniform()) / rate; }

  bool bernoulli(double p) { return uniform() < p; }

  long poisson(double mean) { return std::poisson_distribution<long>(mean)(engine_); }

  Philox4x32& engine() { return engine_; }

private:
  Philox4x32 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace fidux
