#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "gcalib/rng.hpp"

using gcalib::Rng;

TEST_CASE("rng reproduces the published SplitMix64 sequence") {
  // Reference values for seed 0 from the SplitMix64 test vectors.
  Rng rng(0);
  CHECK(rng.next_u64() == 0xE220A8397B1DCDAFULL);
  CHECK(rng.next_u64() == 0x6E789E6AA1B965F4ULL);
  CHECK(rng.next_u64() == 0x06C45D188009454FULL);

  Rng rng42(42);
  CHECK(rng42.next_u64() == 13679457532755275413ULL);
  CHECK(rng42.next_u64() == 2949826092126892291ULL);
  CHECK(rng42.next_u64() == 5139283748462763858ULL);
}

TEST_CASE("rng streams with the same seed are identical") {
  Rng a(123), b(123);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("next_double lies in [0, 1)") {
  Rng rng(7);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.next_double();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("next_below respects the bound and hits every residue") {
  Rng rng(99);
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 7000; ++i) {
    const auto v = rng.next_below(7);
    REQUIRE(v < 7);
    counts[v]++;
  }
  for (int c : counts) CHECK(c > 700);  // roughly uniform
}

TEST_CASE("normal deviates have sane first moments") {
  Rng rng(2024);
  const int n = 100000;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.next_normal();
    sum += x;
    sum2 += x * x;
  }
  const double mean = sum / n;
  const double var = sum2 / n - mean * mean;
  CHECK(std::abs(mean) < 0.02);
  CHECK(std::abs(var - 1.0) < 0.03);
}

TEST_CASE("shuffle is deterministic given the seed") {
  std::vector<int> v1(50), v2(50);
  std::iota(v1.begin(), v1.end(), 0);
  std::iota(v2.begin(), v2.end(), 0);
  Rng a(5), b(5);
  a.shuffle(v1);
  b.shuffle(v2);
  CHECK(v1 == v2);
}

TEST_CASE("derive produces distinct, stable stream seeds") {
  CHECK(Rng::derive(7, 1) == 12966676493058619558ULL);
  CHECK(Rng::derive(7, 1) != Rng::derive(7, 2));
  CHECK(Rng::derive(7, 1) != Rng::derive(8, 1));
}
