#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <deque>

#include "oracles.hpp"
#include "support.hpp"
#include "umafd/errors.hpp"
#include "umafd/losses.hpp"
#include "umafd/xbm.hpp"

using namespace umafd;
using testing::random_tensor;

namespace {

XbmEntry entry(double v, int label, std::size_t step) { return {{v, -v}, label, data::Modality::Rgb, step}; }

}  // namespace

TEST_CASE("memory is FIFO with fixed capacity") {
  XbmMemory m(3);
  for (std::size_t s = 0; s < 5; ++s) m.push(entry(double(s), int(s % 2), s));
  const auto snap = m.snapshot();
  REQUIRE(snap.size() == 3);
  CHECK(snap[0].step == 2);
  CHECK(snap[2].step == 4);
  m.clear();
  CHECK(m.size() == 0);
  CHECK_THROWS_AS(XbmMemory(0), ConfigError);
}

TEST_CASE("memory matches a deque oracle over random operation sequences") {
  std::mt19937_64 rng(31);
  for (int seq = 0; seq < 20; ++seq) {
    const std::size_t cap = 1 + rng() % 16;
    XbmMemory m(cap);
    std::deque<XbmEntry> oracle;
    for (std::size_t op = 0; op < 1000; ++op) {
      const auto kind = rng() % 10;
      if (kind < 6) {
        const XbmEntry e = entry(double(rng() % 1000), int(rng() % 2), op);
        m.push(e);
        oracle.push_back(e);
      } else if (kind < 9) {
        std::vector<XbmEntry> batch;
        for (std::size_t k = 0, n = rng() % 5; k < n; ++k) batch.push_back(entry(double(rng() % 1000), int(rng() % 2), op));
        m.push(batch);
        for (const auto& e : batch) oracle.push_back(e);
      } else {
        m.clear();
        oracle.clear();
      }
      while (oracle.size() > cap) oracle.pop_front();
      REQUIRE(m.size() == oracle.size());
    }
    CHECK(m.snapshot() == std::vector<XbmEntry>(oracle.begin(), oracle.end()));
  }
}

TEST_CASE("snapshot is an independent copy") {
  XbmMemory m(4);
  m.push(entry(1.0, 1, 0));
  auto snap = m.snapshot();
  snap[0].embedding[0] = 99.0;
  m.push(entry(2.0, 0, 1));
  CHECK(m.snapshot()[0].embedding[0] == 1.0);
  CHECK(snap.size() == 1);
}

TEST_CASE("batch-hard triplet loss equals an exhaustive pair oracle") {
  std::mt19937_64 rng(32);
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = 1 + rng() % 4, d = 1 + rng() % 4, mem_size = rng() % 8;
    std::vector<XbmEntry> mem;
    for (std::size_t k = 0; k < mem_size; ++k) {
      const Tensor v = random_tensor({d}, rng);
      mem.push_back({{v.values().begin(), v.values().end()}, int(rng() % 2)});
    }
    std::vector<std::optional<int>> labels(n);
    for (auto& l : labels) {
      if (rng() % 5) l = int(rng() % 2);
    }
    const Tensor emb = random_tensor({n, d}, rng);
    const double margin = 0.1 + 0.5 * double(rng() % 5);
    const double got = xbm_triplet_loss(ops::constant(emb), labels, mem, margin).value().item();
    CHECK(got == doctest::Approx(testing::exhaustive_triplet(emb, labels, mem, margin)).epsilon(1e-9));
  }
}

TEST_CASE("memory entries carry no gradient") {
  std::mt19937_64 rng(33);
  // an embedding from an earlier step goes into memory; its graph must not see the later loss
  const Var earlier(random_tensor({1, 3}, rng), true);
  XbmMemory m(8);
  m.push(XbmEntry{{earlier.value().values().begin(), earlier.value().values().end()}, 1});
  m.push(XbmEntry{{0.5, 0.5, 0.5}, 0});
  const Var now(random_tensor({1, 3}, rng), true);
  const auto mem = m.snapshot();
  const std::vector<std::optional<int>> lab{1};
  const Var loss = xbm_triplet_loss(now, lab, mem, 5.0);
  REQUIRE(loss.value().item() > 0.0);
  backward(loss);
  const Tensor g_earlier = earlier.grad();
  for (double v : g_earlier.values()) CHECK(v == 0.0);
  CHECK(m.snapshot() == mem);

  // the gradient is that of the current rows alone with memory held fixed
  const double err = testing::gradient_check([&](const auto& x) { return xbm_triplet_loss(x[0], lab, mem, 5.0); },
                                             {now.value()});
  CHECK(err <= 1e-6);
}

TEST_CASE("triplet loss input validation") {
  const Var e = ops::constant(Tensor({2, 3}));
  const std::vector<std::optional<int>> one{1};
  CHECK_THROWS_AS(xbm_triplet_loss(e, one, {}, 0.3), ShapeError);
  const std::vector<std::optional<int>> two{1, 0};
  const std::vector<XbmEntry> bad{{{1.0, 2.0}, 1}};
  CHECK_THROWS_AS(xbm_triplet_loss(e, two, bad, 0.3), ShapeError);
  CHECK_THROWS_AS(xbm_triplet_loss(e, two, {}, -1.0), ConfigError);
}
