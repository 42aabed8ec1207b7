#include <doctest.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <random>
#include <set>

#include "deltasketch/support_sampler.hpp"
#include "deltasketch/stream.hpp"
#include "test_util.hpp"

using namespace deltasketch;

namespace {

SparseRecoveryConfig srcfg(uint64_t n, uint64_t s, uint64_t seed) {
  SparseRecoveryConfig c;
  c.n = n;
  c.s = s;
  c.seed = seed;
  return c;
}

std::vector<Update> support_stream(uint64_t n, uint64_t l0, uint64_t cancelled, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<uint64_t> items(n);
  for (uint64_t i = 0; i < n; ++i) items[i] = i;
  std::shuffle(items.begin(), items.end(), rng);
  std::vector<Update> out;
  for (uint64_t i = 0; i < l0 + cancelled; ++i) out.push_back({items[i], +1});
  std::shuffle(out.begin(), out.end(), rng);
  for (uint64_t i = l0; i < l0 + cancelled; ++i) out.push_back({items[i], -1});
  return out;
}

}  // namespace

TEST_CASE("sparse recovery: empty sketch decodes to the zero vector") {
  SparseRecoverySketch sk(srcfg(1 << 12, 8, 1));
  auto d = sk.decode();
  REQUIRE(d.has_value());
  CHECK(d->empty());
}

TEST_CASE("sparse recovery: one item round trips") {
  SparseRecoverySketch sk(srcfg(1 << 12, 8, 2));
  sk.update(137, 42);
  auto d = sk.decode();
  REQUIRE(d.has_value());
  REQUIRE(d->size() == 1);
  CHECK((*d)[0].first == 137);
  CHECK((*d)[0].second == 42);
}

TEST_CASE("sparse recovery: s-sparse recovers, 3s-sparse reports DENSE") {
  const uint64_t n = 1 << 14;
  const uint64_t s = 32;
  int exact = 0, dense = 0;
  const int trials = 40;
  for (int t = 0; t < trials; ++t) {
    std::mt19937_64 rng(derive_seed(7, (uint64_t)t));
    SparseRecoverySketch sparse(srcfg(n, s, derive_seed(8, (uint64_t)t)));
    std::set<uint64_t> support;
    while (support.size() < s) support.insert(rng() % n);
    std::map<uint64_t, int64_t> truth;
    for (uint64_t i : support) {
      int64_t v = (int64_t)(rng() % 100) - 50;
      if (v == 0) v = 7;
      truth[i] = v;
      sparse.update(i, v);
    }
    auto d = sparse.decode();
    if (d.has_value()) {
      bool same = d->size() == truth.size();
      for (const auto& [i, v] : *d) same = same && truth.count(i) && truth[i] == v;
      exact += same;
    }

    SparseRecoverySketch heavy(srcfg(n, s, derive_seed(9, (uint64_t)t)));
    std::set<uint64_t> big;
    while (big.size() < 3 * s) big.insert(rng() % n);
    for (uint64_t i : big) heavy.update(i, 5);
    dense += !heavy.decode().has_value();
  }
  CHECK(exact >= 38);
  CHECK(dense >= 38);
}

TEST_CASE("sparse recovery is linear: merged sketches decode the summed stream") {
  const uint64_t n = 1 << 12;
  SparseRecoverySketch a(srcfg(n, 16, 5)), b(srcfg(n, 16, 5)), whole(srcfg(n, 16, 5));
  std::mt19937_64 rng(11);
  for (int i = 0; i < 6; ++i) {
    uint64_t idx = rng() % n;
    int64_t d1 = (int64_t)(rng() % 9) - 4, d2 = (int64_t)(rng() % 9) - 4;
    if (d1 == 0) d1 = 1;
    if (d2 == 0) d2 = -1;
    a.update(idx, d1);
    whole.update(idx, d1);
    b.update(idx + 1, d2);
    whole.update(idx + 1, d2);
  }
  a.merge(b);
  auto da = a.decode(), dw = whole.decode();
  REQUIRE(da.has_value());
  REQUIRE(dw.has_value());
  CHECK(*da == *dw);
}

TEST_CASE("top level holds every item: whole-stream s-sparse recovery is exact") {
  const uint64_t n = 1 << 12;
  SupportSamplerConfig cfg;
  cfg.n = n;
  cfg.k = 4;  // s = 820
  cfg.delta = 0.1;
  cfg.alpha = 4.0;
  cfg.seed = 21;
  cfg.copies = 2;
  SupportSampler ss(cfg);

  std::set<uint64_t> support;
  std::mt19937_64 rng(3);
  while (support.size() < 100) support.insert(rng() % n);
  for (uint64_t i : support) ss.update({i, (int64_t)(1 + i % 5)});

  auto got = ss.query();
  std::set<uint64_t> got_set(got.begin(), got.end());
  CHECK(got_set == support);
}

TEST_CASE("an item hashing below every threshold hits every live level") {
  const uint64_t n = 1 << 10;
  SupportSamplerConfig cfg;
  cfg.n = n;
  cfg.k = 1;
  cfg.seed = 91;
  cfg.copies = 1;
  SupportSampler ss(cfg);
  // pick the item with the smallest hash value so it lands in low levels too
  uint64_t item = 0, best = ss.copy_hash(0)(0);
  for (uint64_t i = 1; i < n; ++i)
    if (ss.copy_hash(0)(i) < best) {
      best = ss.copy_hash(0)(i);
      item = i;
    }
  ss.update({item, 9});
  for (unsigned j : ss.live_levels(0)) {
    auto dec = ss.decode_level(0, j);
    REQUIRE(dec.has_value());  // a 1-sparse level never reports DENSE
    if (best < (uint64_t(1) << j)) {
      REQUIRE(dec->size() == 1);
      CHECK((*dec)[0].first == item);
      CHECK((*dec)[0].second == 9);
    } else {
      CHECK(dec->empty());
    }
  }
  // the top level always contains everything
  auto top = ss.decode_level(0, (unsigned)std::countr_zero(n));
  REQUIRE(top.has_value());
  CHECK(top->size() == 1);
}

TEST_CASE("empty stream returns the empty set") {
  SupportSamplerConfig cfg;
  cfg.n = 256;
  cfg.k = 2;
  cfg.seed = 31;
  cfg.copies = 1;
  SupportSampler ss(cfg);
  CHECK(ss.query().empty());
}

TEST_CASE("membership soundness and coverage on planted alpha<=4 streams") {
  const uint64_t n = 1 << 16;
  const uint64_t l0 = 1000;
  int covered = 0;
  const int trials = 5;
  for (int t = 0; t < trials; ++t) {
    SupportSamplerConfig cfg;
    cfg.n = n;
    cfg.k = 20;
    cfg.delta = 0.1;
    cfg.alpha = 4.0;
    cfg.seed = derive_seed(41, (uint64_t)t);
    SupportSampler ss(cfg);
    auto ups = support_stream(n, l0, 2 * l0, derive_seed(42, (uint64_t)t));
    ExactState oracle({n, 1 << 20, 1, StreamKind::StrictTurnstile});
    for (const auto& u : ups) {
      ss.update(u);
      oracle.apply_update(u);
    }
    auto got = ss.query();
    for (uint64_t i : got) CHECK(oracle.frequency(i) != 0);
    covered += got.size() >= 20;
  }
  CHECK(covered >= 4);
}

TEST_CASE("level populations track the subsampling rates") {
  const uint64_t n = 1 << 12;
  const uint64_t support = 512;
  double worst = 0;
  const int trials = 50;
  for (unsigned j : {8u, 10u}) {
    double sum = 0;
    for (int t = 0; t < trials; ++t) {
      KWiseHash h(2, n, derive_seed(77, (uint64_t)(100 * j + t)));
      uint64_t count = 0;
      for (uint64_t i = 0; i < support; ++i) count += h(i) < (uint64_t(1) << j);
      sum += (double)count;
    }
    double expect = (double)support * std::ldexp(1.0, (int)j) / (double)n;
    worst = std::max(worst, std::fabs(sum / trials - expect) / expect);
  }
  CHECK(worst <= 0.2);
}

TEST_CASE("retired levels never return") {
  const uint64_t n = 1 << 16;
  SupportSamplerConfig cfg;
  cfg.n = n;
  cfg.k = 1;
  cfg.delta = 0.25;
  cfg.alpha = 1.0;
  cfg.seed = 55;
  cfg.copies = 1;
  cfg.half_width_override = 1.5;  // narrow window so tracker growth slides it
  SupportSampler ss(cfg);
  std::set<unsigned> ever_retired;
  auto ups = support_stream(n, 12000, 0, 66);
  std::vector<unsigned> prev = ss.live_levels(0);
  for (const auto& u : ups) {
    ss.update(u);
    auto now = ss.live_levels(0);
    std::set<unsigned> now_set(now.begin(), now.end());
    for (unsigned j : prev)
      if (!now_set.count(j)) ever_retired.insert(j);
    for (unsigned j : now) CHECK(!ever_retired.count(j));
    prev = now;
  }
  CHECK(!ever_retired.empty());  // the window actually moved
}
