#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <vector>

#include "avemdpo/rng.hpp"

using namespace avemdpo;

TEST_CASE("generator output is frozen, not merely self-consistent") {
  // Reference values computed with an independent implementation of the
  // same mixing function.
  Rng rng(42);
  CHECK(rng.next_u64() == 0xbdd732262feb6e95ULL);
  CHECK(rng.next_u64() == 0x28efe333b266f103ULL);
  CHECK(rng.next_u64() == 0x47526757130f9f52ULL);
  CHECK(rng.next_u64() == 0x581ce1ff0e4ae394ULL);

  Rng again(42);
  CHECK(again.next_double() == 0.7415648787718233);
}

TEST_CASE("identical seeds give identical streams; different seeds differ") {
  Rng a(123), b(123), c(124);
  bool any_diff = false;
  for (int i = 0; i < 100; ++i) {
    const uint64_t va = a.next_u64();
    CHECK(va == b.next_u64());
    if (va != c.next_u64()) any_diff = true;
  }
  CHECK(any_diff);
}

TEST_CASE("next_double stays in [0, 1)") {
  Rng rng(9);
  for (int i = 0; i < 10000; ++i) {
    const double d = rng.next_double();
    CHECK(d >= 0.0);
    CHECK(d < 1.0);
  }
}

TEST_CASE("below and uniform_int respect their bounds") {
  Rng rng(77);
  std::set<uint64_t> seen;
  for (int i = 0; i < 5000; ++i) {
    const uint64_t v = rng.below(7);
    CHECK(v < 7);
    seen.insert(v);
  }
  CHECK(seen.size() == 7);

  for (int i = 0; i < 2000; ++i) {
    const int v = rng.uniform_int(-3, 3);
    CHECK(v >= -3);
    CHECK(v <= 3);
  }
  CHECK(rng.below(1) == 0);
}

TEST_CASE("uniform covers its interval") {
  Rng rng(5);
  double lo = 1e9, hi = -1e9;
  for (int i = 0; i < 5000; ++i) {
    const double v = rng.uniform(-2.0, 3.0);
    CHECK(v >= -2.0);
    CHECK(v < 3.0);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  CHECK(lo < -1.8);
  CHECK(hi > 2.8);
}

TEST_CASE("normal draws have plausible moments and are reproducible") {
  Rng rng(2024);
  const int n = 20000;
  double sum = 0.0, sumsq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double v = rng.normal();
    CHECK(std::isfinite(v));
    sum += v;
    sumsq += v * v;
  }
  const double mean = sum / n;
  const double var = sumsq / n - mean * mean;
  CHECK(std::fabs(mean) < 0.03);
  CHECK(std::fabs(var - 1.0) < 0.05);

  Rng r1(31), r2(31);
  for (int i = 0; i < 10; ++i) CHECK(r1.normal() == r2.normal());
}

TEST_CASE("shuffle is a permutation and depends on the seed") {
  std::vector<int> v(50);
  std::iota(v.begin(), v.end(), 0);
  std::vector<int> w = v;
  Rng rng(8);
  rng.shuffle(v);
  std::vector<int> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  CHECK(sorted == w);
  CHECK(v != w);

  std::vector<int> v2(50);
  std::iota(v2.begin(), v2.end(), 0);
  Rng rng2(8);
  rng2.shuffle(v2);
  CHECK(v == v2);
}

TEST_CASE("derive_seed separates streams by key and by seed") {
  const uint64_t a = derive_seed(1, "negatives");
  const uint64_t b = derive_seed(1, "prompts");
  const uint64_t c = derive_seed(2, "negatives");
  CHECK(a != b);
  CHECK(a != c);
  CHECK(derive_seed(1, "negatives") == a);
}
