#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace sdgt {

// Philox4x32-10 block function (Salmon et al., "Parallel random numbers: as
// easy as 1, 2, 3"). Pure: same counter and key give the same 128 bits on
// every platform.
std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> counter,
                                           std::array<std::uint32_t, 2> key);

// Identifies what a random stream is used for. Streams with different ids
// never share a counter block, so changing how many draws one consumer makes
// cannot perturb another.
enum class StreamId : std::uint32_t {
  kTopology = 1,
  kData = 2,
  kSampling = 3,
  kBatching = 4,
  kInit = 5,
  kCosts = 6,
  kTest = 0xFFFF,
};

// Counter-based generator, version "philox4x32-10/v1".
//
// Counter layout per 128-bit block:
//   word 0      block index within the substream
//   word 1      stream id
//   words 2..3  64-bit substream (lo, hi)
// Key = 64-bit seed (lo, hi).
//
// Derived draws:
//   uniform()  53 high bits of a 64-bit word scaled to [0, 1)
//   normal()   Box-Muller on two open-interval uniforms; both outputs used
//   below(n)   rejection sampling on 64-bit words, unbiased
class RandomStream {
 public:
  static constexpr const char* kVersion = "philox4x32-10/v1";

  RandomStream(std::uint64_t seed, StreamId stream, std::uint64_t substream = 0);

  std::uint64_t next_u64();
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  std::uint64_t below(std::uint64_t n);

  // First `count` entries of a uniformly random permutation of 0..n-1.
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t count);

  RandomStream substream(std::uint64_t sub) const { return {seed_, stream_, sub}; }

 private:
  void refill();

  std::uint64_t seed_;
  StreamId stream_;
  std::uint64_t sub_;
  std::uint32_t block_ = 0;
  std::array<std::uint32_t, 4> buffer_{};
  int buffered_ = 0;  // remaining 64-bit words in buffer_ (0..2)
  bool has_spare_normal_ = false;
  double spare_normal_ = 0.0;
};

// Combine several integers into one 64-bit value (splitmix64 finalizer chain),
// used to key substreams by (round, step, client) tuples.
std::uint64_t mix_key(std::initializer_list<std::uint64_t> parts);

}  // namespace sdgt
