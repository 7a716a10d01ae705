#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <numeric>
#include <set>

#include "pocusiq/core/error.hpp"
#include "pocusiq/core/kvconfig.hpp"
#include "pocusiq/core/parallel.hpp"
#include "pocusiq/core/rng.hpp"

using namespace pocusiq;

TEST(Rng, SameSeedSameStream) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, DifferentSeedsDiffer) {
  Rng a(1), b(2);
  int same = 0;
  for (int i = 0; i < 100; ++i) same += a.next_u64() == b.next_u64();
  EXPECT_EQ(same, 0);
}

TEST(Rng, UniformRangeAndMean) {
  Rng r(7);
  double sum = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
  }
  EXPECT_NEAR(sum / n, 0.5, 0.01);
}

TEST(Rng, NormalMoments) {
  Rng r(11);
  const int n = 200000;
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    const double z = r.normal();
    s += z;
    s2 += z * z;
  }
  const double mean = s / n;
  EXPECT_NEAR(mean, 0.0, 0.01);
  EXPECT_NEAR(s2 / n - mean * mean, 1.0, 0.02);
}

TEST(Rng, BelowCoversRange) {
  Rng r(3);
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 1000; ++i) {
    const auto v = r.below(7);
    ASSERT_LT(v, 7u);
    seen.insert(v);
  }
  EXPECT_EQ(seen.size(), 7u);
}

TEST(Rng, ShuffleIsPermutation) {
  std::vector<int> v(50);
  std::iota(v.begin(), v.end(), 0);
  Rng r(5);
  r.shuffle(v.begin(), v.end());
  std::vector<int> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 50; ++i) EXPECT_EQ(sorted[i], i);
}

TEST(Rng, DeriveSeedSeparatesStreams) {
  EXPECT_NE(derive_seed(1, 0), derive_seed(1, 1));
  EXPECT_NE(derive_seed(1, "a"), derive_seed(1, "b"));
  EXPECT_EQ(derive_seed(9, "key"), derive_seed(9, "key"));
}

TEST(KeyValueConfig, ParsesCommentsAndOverrides) {
  auto c = KeyValueConfig::parse("# header\na = 1\nb=two # trailing\n\na=3\n");
  EXPECT_EQ(c.get_int("a", 0), 3);
  EXPECT_EQ(*c.get("b"), "two");
  EXPECT_FALSE(c.get("missing"));
  EXPECT_DOUBLE_EQ(c.get_double("missing", 2.5), 2.5);
}

TEST(KeyValueConfig, ReportsLineNumbers) {
  try {
    KeyValueConfig::parse("a=1\nbroken line\n", "cfg.txt");
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("cfg.txt:2"), std::string::npos);
  }
}

TEST(KeyValueConfig, RejectsBadNumbers) {
  auto c = KeyValueConfig::parse("n=12x\nd=abc\n");
  EXPECT_THROW(c.get_int("n", 0), DataError);
  EXPECT_THROW(c.get_double("d", 0), DataError);
}

TEST(ThreadPool, CoversRangeExactlyOnce) {
  for (int threads : {1, 2, 4}) {
    ThreadPool pool(threads);
    std::vector<std::atomic<int>> hits(1000);
    pool.parallel_for(hits.size(), [&](std::size_t b, std::size_t e) {
      for (std::size_t i = b; i < e; ++i) hits[i]++;
    });
    for (auto& h : hits) ASSERT_EQ(h.load(), 1);
  }
}

TEST(ThreadPool, ReusableAcrossJobs) {
  ThreadPool pool(3);
  for (int rep = 0; rep < 200; ++rep) {
    std::atomic<long> sum{0};
    pool.parallel_for(100, [&](std::size_t b, std::size_t e) {
      long s = 0;
      for (std::size_t i = b; i < e; ++i) s += static_cast<long>(i);
      sum += s;
    });
    ASSERT_EQ(sum.load(), 4950);
  }
}

TEST(ThreadPool, ComputePoolResize) {
  set_compute_threads(3);
  EXPECT_EQ(compute_threads(), std::min(3, hardware_threads()));
  std::vector<int> out(10, 0);
  parallel_for(out.size(), [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) out[i] = static_cast<int>(i);
  });
  for (int i = 0; i < 10; ++i) EXPECT_EQ(out[i], i);
  set_compute_threads(1);
  EXPECT_EQ(compute_threads(), 1);
  set_compute_threads(hardware_threads() + 5);
  EXPECT_EQ(compute_threads(), hardware_threads());
  set_compute_threads(0);
  EXPECT_EQ(compute_threads(), 1);
  set_compute_threads(1);
}

TEST(Errors, CategoriesMapToNames) {
  EXPECT_EQ(to_string(ErrorCategory::Usage), "usage");
  EXPECT_EQ(to_string(ErrorCategory::Data), "data");
  EXPECT_EQ(to_string(ErrorCategory::Numeric), "numeric");
  EXPECT_EQ(NumericError("x").category(), ErrorCategory::Numeric);
}
