#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "deltasketch/csss.hpp"
#include "deltasketch/stream.hpp"
#include "test_util.hpp"

using namespace deltasketch;

namespace {

CSSSConfig small_cfg(uint64_t n, uint64_t k, double eps, double alpha, uint64_t seed) {
  CSSSConfig c;
  c.n = n;
  c.k = k;
  c.eps = eps;
  c.alpha = alpha;
  c.seed = seed;
  return c;
}

StreamConfig scfg(uint64_t n, StreamKind kind = StreamKind::StrictTurnstile) {
  StreamConfig c;
  c.n = n;
  c.m_max = 1 << 20;
  c.max_update = 1 << 20;
  c.kind = kind;
  return c;
}

double lower_median(std::vector<double> v) {
  size_t mid = (v.size() - 1) / 2;
  std::nth_element(v.begin(), v.begin() + (long)mid, v.end());
  return v[mid];
}

}  // namespace

TEST_CASE("empty table queries to zero") {
  CSSSTable tbl(small_cfg(256, 4, 0.25, 1.0, 1));
  for (uint64_t j : {0ull, 17ull, 255ull}) CHECK(tbl.query(j) == 0.0);
}

TEST_CASE("pre-halving regime stores updates exactly") {
  auto cfg = small_cfg(256, 4, 0.25, 1.0, 2);
  CSSSTable tbl(cfg);
  auto rng = make_rng(2, 0);
  for (int i = 0; i < 100; ++i) tbl.update({7, +1}, rng);
  CHECK(tbl.p_exp() == 0);
  CHECK(tbl.query(7) == 100.0);
  tbl.update({9, +42}, rng);
  CHECK(tbl.query(9) == 42.0);
}

TEST_CASE("with sampling disabled CSSS equals plain Countsketch, update for update") {
  auto cfg = small_cfg(1024, 8, 0.25, 4.0, 33);
  cfg.sampling_enabled = false;
  CSSSTable tbl(cfg);
  std::vector<PlainCSRow> rows;
  for (unsigned r = 0; r < cfg.rows(); ++r) rows.emplace_back(tbl.row_hash(r), tbl.row_sign(r));

  std::mt19937_64 gen(5);
  auto rng = make_rng(5, 1);
  ExactState oracle(scfg(1024, StreamKind::GeneralTurnstile));
  for (int i = 0; i < 5000; ++i) {
    Update u{gen() % 1024, (int64_t)(gen() % 7) - 3};
    if (u.delta == 0) u.delta = 2;
    tbl.update(u, rng);
    for (auto& row : rows) row.update(u.index, u.delta);
    oracle.apply_update(u);
  }
  CHECK(tbl.p_exp() == 0);
  for (uint64_t j = 0; j < 1024; j += 13) {
    std::vector<double> ests;
    for (auto& row : rows) ests.push_back(row.estimate(j));
    CHECK(tbl.query(j) == lower_median(ests));
  }
}

TEST_CASE("first halving cuts the expected counter in half") {
  auto cfg = small_cfg(2, 1, 0.9, 1.0, 3);
  cfg.c_d = 1.0;  // one row
  uint64_t S = cfg.S();
  REQUIRE(S >= 16);
  REQUIRE(S <= 64);

  const int trials = 10000;
  double sum = 0;
  for (int t = 0; t < trials; ++t) {
    auto c = cfg;
    c.seed = derive_seed(1000, (uint64_t)t);
    CSSSTable tbl(c);
    auto rng = make_rng(2000, (uint64_t)t);
    for (uint64_t i = 0; i < 2 * S + 1; ++i) tbl.update({1, +1}, rng);
    CHECK(tbl.p_exp() == 1);
    sum += (double)tbl.stored_sample_mass();
  }
  double mean = sum / trials;
  double expect = (double)S + 0.5;  // Bin(2S, 1/2) plus one sampled unit at rate 1/2
  double sigma = std::sqrt((2.0 * (double)S + 1.0) * 0.25 / trials);
  CHECK(std::fabs(mean - expect) <= 5 * sigma + 0.01);
}

TEST_CASE("point-query error bound against the exact oracle") {
  const uint64_t n = 1 << 12;
  const uint64_t k = 64;
  const double eps = 0.25;
  auto cfg = small_cfg(n, k, eps, 4.0, 77);
  cfg.c_S = 1.0 / 2048.0;  // push the stream well past the first halvings

  GenSpec g;
  g.config = scfg(n);
  g.target_alpha = 4.0;
  g.p = 1;
  g.length = 100000;
  g.shape = StreamShape::Zipf;
  g.seed = 4242;
  auto stream = generate_stream(g);
  ExactState oracle(g.config);
  oracle.apply(stream.updates);

  CSSSTable tbl(cfg);
  auto rng = make_rng(888, 0);
  for (const auto& u : stream.updates) tbl.update(u, rng);
  CHECK(tbl.p_exp() >= 1);  // sampling actually engaged

  double err = oracle.tail_error(k);
  double l1 = (double)oracle.l1_norm();
  double bound = 2.0 * (err / std::sqrt((double)k) + eps * l1);
  for (uint64_t j = 0; j < n; ++j)
    CHECK(std::fabs(tbl.query(j) - (double)oracle.frequency(j)) <= bound);

  // space-claim proxy
  unsigned __int128 s3 = (unsigned __int128)cfg.S() * cfg.S() * cfg.S();
  CHECK((unsigned __int128)tbl.max_counter() <= s3);
}

TEST_CASE("topk recovers the support exactly in the exact regime") {
  auto cfg = small_cfg(256, 8, 0.25, 1.0, 9);
  CSSSTable tbl(cfg);
  auto rng = make_rng(9, 2);
  std::vector<int64_t> weights(256, 0);
  weights[3] = 50;
  weights[90] = -20;
  weights[200] = 5;
  tbl.update({3, 50}, rng);
  tbl.update({90, -20}, rng);
  tbl.update({200, 5}, rng);

  auto top = tbl.topk(8);
  REQUIRE(top.size() == 8);
  CHECK(top[0].first == 3);
  CHECK(top[0].second == 50.0);
  CHECK(top[1].first == 90);
  CHECK(top[1].second == -20.0);
  CHECK(top[2].first == 200);
  CHECK(top[2].second == 5.0);
}

TEST_CASE("topk finds a dominant item and meets the k-sparse L2 bound") {
  const uint64_t n = 1 << 10;
  const uint64_t k = 16;
  const double eps = 0.25;
  auto cfg = small_cfg(n, k, eps, 4.0, 31);
  cfg.c_S = 1.0 / 1024.0;

  std::vector<int64_t> weights(n, 1);
  weights[123] = 4000;
  auto ups = ds_test::planted_stream(weights, 3.0, 55);
  ExactState oracle(scfg(n));
  oracle.apply(ups);

  CSSSTable tbl(cfg);
  auto rng = make_rng(66, 0);
  for (const auto& u : ups) tbl.update(u, rng);

  auto top1 = tbl.topk(1);
  REQUIRE(top1.size() == 1);
  CHECK(top1[0].first == 123);

  auto topk = tbl.topk(k);
  std::vector<double> residual(oracle.frequencies().begin(), oracle.frequencies().end());
  for (const auto& [j, v] : topk) residual[j] -= v;
  double l2 = 0;
  for (double r : residual) l2 += r * r;
  l2 = std::sqrt(l2);
  double bound =
      5.0 * (std::sqrt((double)k) * eps * (double)oracle.l1_norm() + oracle.tail_error(k));
  CHECK(l2 <= bound);
}

TEST_CASE("rescaled uniform sample preserves every coordinate") {
  const uint64_t n = 128;
  const uint64_t m = 30000;
  const double eps = 0.2;
  const double delta = 0.01;

  GenSpec g;
  g.config = scfg(n);
  g.target_alpha = 4.0;
  g.p = 1;
  g.length = m;
  g.seed = 2024;
  auto stream = generate_stream(g);
  ExactState oracle(g.config);
  oracle.apply(stream.updates);
  double alpha = oracle.alpha_lp(1).value();
  double p = std::min(1.0, alpha * alpha / (eps * eps * eps) * std::log(1.0 / delta) / (double)m);
  REQUIRE(p < 1.0);

  int good = 0;
  const int trials = 20;
  for (int t = 0; t < trials; ++t) {
    std::mt19937_64 rng(derive_seed(31337, (uint64_t)t));
    std::bernoulli_distribution coin(p);
    std::vector<double> sample(n, 0.0);
    for (const auto& u : stream.updates)
      if (coin(rng)) sample[u.index] += (double)u.delta / p;
    double worst = 0;
    for (uint64_t i = 0; i < n; ++i)
      worst = std::max(worst, std::fabs(sample[i] - (double)oracle.frequency(i)));
    good += worst <= eps * (double)oracle.l1_norm();
  }
  CHECK(good >= 18);
}

TEST_CASE("tail bound: sampled small coordinates stay light") {
  const uint64_t n = 1 << 12;
  const uint64_t m = 20000;
  const double T = 64.0;
  const double p = 0.3;

  GenSpec g;
  g.config = scfg(n);
  g.target_alpha = 4.0;
  g.p = 1;
  g.length = m;
  g.shape = StreamShape::Zipf;
  g.seed = 99;
  auto stream = generate_stream(g);
  ExactState oracle(g.config);
  oracle.apply(stream.updates);
  double l1 = (double)oracle.l1_norm();

  int good = 0;
  const int trials = 100;
  for (int t = 0; t < trials; ++t) {
    std::mt19937_64 rng(derive_seed(515, (uint64_t)t));
    std::bernoulli_distribution coin(p);
    std::vector<double> sample(n, 0.0);
    for (const auto& u : stream.updates)
      if (coin(rng)) sample[u.index] += (double)u.delta / p;
    double small_l2 = 0;
    for (uint64_t i = 0; i < n; ++i)
      if (std::fabs((double)oracle.frequency(i)) < l1 / T) small_l2 += sample[i] * sample[i];
    good += std::sqrt(small_l2) <= 2.0 * l1 / std::sqrt(T);
  }
  CHECK(good >= 95);
}

TEST_CASE("tail-error estimator contract") {
  const uint64_t n = 1 << 10;
  const uint64_t k = 16;
  const double eps = 0.25;

  SUBCASE("zero stream with zero norm bound gives zero") {
    auto cfg = small_cfg(n, k, eps, 1.0, 5);
    CSSSTable a(cfg);
    cfg.seed = 6;
    CSSSTable b(cfg);
    CHECK(estimate_tail_error(a, b, 0.0) == 0.0);
  }

  SUBCASE("k-sparse exact regime keeps v under the upper contract") {
    auto cfg = small_cfg(n, k, eps, 1.0, 7);
    CSSSTable a(cfg);
    cfg.seed = 8;
    CSSSTable b(cfg);
    auto rng = make_rng(1, 1);
    double l1 = 0;
    for (uint64_t i = 0; i < k; ++i) {
      int64_t w = (int64_t)(10 * (i + 1));
      a.update({i * 40, w}, rng);
      b.update({i * 40, w}, rng);
      l1 += (double)w;
    }
    double v = estimate_tail_error(a, b, l1);
    CHECK(v <= 45.0 * std::sqrt((double)k) * eps * l1);
  }

  SUBCASE("random stream: Err <= v <= 45 sqrt(k) eps l1 + 20 Err") {
    GenSpec g;
    g.config = scfg(n);
    g.target_alpha = 4.0;
    g.p = 1;
    g.length = 30000;
    g.shape = StreamShape::Zipf;
    g.seed = 1717;
    auto stream = generate_stream(g);
    ExactState oracle(g.config);
    oracle.apply(stream.updates);
    double l1 = (double)oracle.l1_norm();
    double err = oracle.tail_error(k);

    int good = 0;
    const int trials = 20;
    for (int t = 0; t < trials; ++t) {
      auto cfg = small_cfg(n, k, eps, 4.0, derive_seed(21, (uint64_t)t));
      cfg.c_S = 1.0 / 512.0;
      CSSSTable a(cfg);
      cfg.seed = derive_seed(22, (uint64_t)t);
      CSSSTable b(cfg);
      auto rng = make_rng(23, (uint64_t)t);
      for (const auto& u : stream.updates) {
        a.update(u, rng);
        b.update(u, rng);
      }
      double v = estimate_tail_error(a, b, l1);
      good += (err <= v && v <= 45.0 * std::sqrt((double)k) * eps * l1 + 20.0 * err);
    }
    CHECK(good >= 18);
  }
}

TEST_CASE("serialization round trip preserves queries") {
  auto cfg = small_cfg(512, 8, 0.25, 2.0, 404);
  cfg.c_S = 1.0 / 512.0;
  CSSSTable tbl(cfg);
  auto rng = make_rng(101, 0);
  std::mt19937_64 gen(55);
  for (int i = 0; i < 20000; ++i) tbl.update({gen() % 512, (gen() & 1) ? 1 : -1}, rng);

  std::stringstream ss;
  tbl.serialize(ss);
  auto back = CSSSTable::deserialize(ss);
  CHECK(back.p_exp() == tbl.p_exp());
  for (uint64_t j = 0; j < 512; j += 7) CHECK(back.query(j) == tbl.query(j));
}

TEST_CASE("counter saturation moves the sketch into the failed state") {
  auto cfg = small_cfg(2, 1, 0.9, 1.0, 12);
  cfg.c_d = 1.0;
  cfg.c_S = 1e-9;  // S = 1, saturation bound S^3 = 1
  REQUIRE(cfg.S() == 1);
  CSSSTable tbl(cfg);
  auto rng = make_rng(1, 1);
  tbl.update({1, +1}, rng);
  tbl.update({1, +1}, rng);
  CHECK(tbl.failed());
  CHECK_THROWS(tbl.query(1));
  CHECK_THROWS(tbl.update({1, +1}, rng));
}
