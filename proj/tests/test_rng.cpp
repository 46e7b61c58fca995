#include <cmath>
#include <numeric>
#include <set>

#include "doctest.h"
#include "sdgt/rng.hpp"

using namespace sdgt;

TEST_SUITE("rng") {

TEST_CASE("streams are reproducible") {
  RandomStream a(42, StreamId::kData, 7);
  RandomStream b(42, StreamId::kData, 7);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("seeds, stream ids, and substreams are separated") {
  auto first = [](RandomStream r) { return r.next_u64(); };
  const auto base = first(RandomStream(1, StreamId::kData, 0));
  CHECK(base != first(RandomStream(2, StreamId::kData, 0)));
  CHECK(base != first(RandomStream(1, StreamId::kSampling, 0)));
  CHECK(base != first(RandomStream(1, StreamId::kData, 1)));
  CHECK(first(RandomStream(1, StreamId::kData, 0).substream(5)) ==
        first(RandomStream(1, StreamId::kData, 5)));
}

TEST_CASE("uniform draws lie in [0,1) with the right mean") {
  RandomStream r(3, StreamId::kTest);
  double sum = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
  }
  CHECK(std::abs(sum / n - 0.5) < 5.0 * std::sqrt(1.0 / 12.0 / n));
}

TEST_CASE("normal draws have zero mean and unit variance") {
  RandomStream r(4, StreamId::kTest);
  const int n = 200000;
  double s1 = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = r.normal();
    s1 += z;
    s2 += z * z;
  }
  CHECK(std::abs(s1 / n) < 5.0 / std::sqrt(n));
  CHECK(std::abs(s2 / n - 1.0) < 5.0 * std::sqrt(2.0 / n));
}

TEST_CASE("below() is unbiased and in range") {
  RandomStream r(5, StreamId::kTest);
  std::vector<int> counts(7, 0);
  const int n = 70000;
  for (int i = 0; i < n; ++i) {
    const auto v = r.below(7);
    REQUIRE(v < 7);
    ++counts[v];
  }
  // Chi-square with 6 degrees of freedom; 22.46 is the 0.999 quantile.
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - n / 7.0) * (c - n / 7.0) / (n / 7.0);
  CHECK(chi2 < 22.46);
}

TEST_CASE("sampling without replacement returns distinct indices") {
  RandomStream r(6, StreamId::kSampling);
  for (int trial = 0; trial < 50; ++trial) {
    const auto pick = r.sample_without_replacement(10, 4);
    REQUIRE(pick.size() == 4);
    std::set<std::size_t> unique(pick.begin(), pick.end());
    CHECK(unique.size() == 4);
    for (auto v : pick) CHECK(v < 10);
  }
  const auto all = r.sample_without_replacement(5, 5);
  std::set<std::size_t> unique(all.begin(), all.end());
  CHECK(unique.size() == 5);
}

TEST_CASE("mix_key depends on order and every part") {
  CHECK(mix_key({1, 2, 3}) == mix_key({1, 2, 3}));
  CHECK(mix_key({1, 2, 3}) != mix_key({3, 2, 1}));
  CHECK(mix_key({1, 2, 3}) != mix_key({1, 2, 4}));
}

}  // TEST_SUITE
