#include <gtest/gtest.h>

#include <atomic>
#include <vector>

#include "xbf/op_counter.hpp"
#include "xbf/parallel.hpp"

namespace xbf {
namespace {

class ThreadCap {
 public:
  explicit ThreadCap(std::size_t n) : saved_(max_threads()) { set_max_threads(n); }
  ~ThreadCap() { set_max_threads(saved_); }

 private:
  std::size_t saved_;
};

TEST(Parallel, VisitsEveryIndexOnce) {
  for (std::size_t threads : {1U, 3U}) {
    ThreadCap cap(threads);
    for (std::size_t n : {0U, 1U, 5U, 1000U}) {
      std::vector<std::atomic<int>> hits(n);
      parallel_chunks(n, 7, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) hits[i].fetch_add(1);
      });
      for (std::size_t i = 0; i < n; ++i) EXPECT_EQ(hits[i].load(), 1);
    }
  }
}

TEST(Parallel, ZeroThreadCapMeansOne) {
  ThreadCap cap(0);
  EXPECT_EQ(max_threads(), 1U);
}

TEST(OpCounter, CountsOnlyWhileInstalledAndNests) {
  count_multiply_adds(5);
  ScopedOpCounter outer;
  count_multiply_adds(2);
  {
    ScopedOpCounter inner;
    count_exponentials(3);
    EXPECT_EQ(inner.counts().exponentials, 3U);
  }
  count_sampling_steps(4);
  EXPECT_EQ(outer.counts().multiply_adds, 2U);
  EXPECT_EQ(outer.counts().exponentials, 0U);
  EXPECT_EQ(outer.counts().total(), 6U);
}

}  // namespace
}  // namespace xbf
