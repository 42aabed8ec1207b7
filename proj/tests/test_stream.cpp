#include <doctest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "deltasketch/stream.hpp"
#include "test_util.hpp"

using namespace deltasketch;

namespace {

StreamConfig cfg(uint64_t n, StreamKind kind = StreamKind::StrictTurnstile, int64_t m = 1 << 20) {
  StreamConfig c;
  c.n = n;
  c.max_update = m;
  c.m_max = 1 << 20;
  c.kind = kind;
  return c;
}

}  // namespace

TEST_CASE("apply_update bookkeeping") {
  ExactState st(cfg(8));
  st.apply_update({3, +5});
  CHECK(st.frequency(3) == 5);
  CHECK(st.insertions(3) == 5);
  CHECK(st.deletions(3) == 0);

  st.apply_update({3, -5});
  CHECK(st.frequency(3) == 0);
  CHECK(st.deletions(3) == 5);

  CHECK_THROWS(st.apply_update({3, -1}));  // strict prefix would go negative
  CHECK_THROWS(st.apply_update({9, 1}));   // out of range
  CHECK_THROWS(st.apply_update({1, 0}));   // zero delta
}

TEST_CASE("insertion-only rejects deletions") {
  ExactState st(cfg(8, StreamKind::InsertionOnly));
  st.apply_update({0, 2});
  CHECK_THROWS(st.apply_update({0, -1}));
}

TEST_CASE("alpha_lp examples") {
  ExactState ins(cfg(8, StreamKind::InsertionOnly));
  ins.apply_update({1, 3});
  ins.apply_update({2, 4});
  CHECK(ins.alpha_lp(1).value() == 1.0);
  CHECK(ins.alpha_lp(0).value() == 1.0);

  ExactState mid(cfg(8));
  mid.apply_update({0, 5});
  mid.apply_update({0, -4});
  CHECK(mid.alpha_lp(1).num == 9);
  CHECK(mid.alpha_lp(1).den == 1);

  ExactState zero(cfg(8));
  zero.apply_update({0, 5});
  zero.apply_update({0, -5});
  CHECK(zero.alpha_lp(1).is_infinite());
  CHECK(zero.alpha_lp(0).is_infinite());

  ExactState empty(cfg(8));
  CHECK(empty.alpha_lp(1).value() == 1.0);
}

TEST_CASE("strong_alpha examples") {
  ExactState ins(cfg(8, StreamKind::InsertionOnly));
  ins.apply_update({1, 3});
  CHECK(ins.strong_alpha().value() == 1.0);

  ExactState churn(cfg(8));
  for (uint64_t i = 0; i < 8; ++i) {
    churn.apply_update({i, 3});
    churn.apply_update({i, -2});
  }
  CHECK(churn.strong_alpha().value() == 5.0);

  ExactState gone(cfg(8));
  gone.apply_update({0, 4});
  gone.apply_update({1, 2});
  gone.apply_update({1, -2});
  CHECK(gone.strong_alpha().is_infinite());
}

TEST_CASE("f = I - D after every update, and alpha depends only on totals") {
  std::mt19937_64 rng(55);
  ExactState st(cfg(64, StreamKind::GeneralTurnstile));
  std::vector<Update> log;
  for (int i = 0; i < 2000; ++i) {
    Update u{rng() % 64, (int64_t)(rng() % 9) - 4};
    if (u.delta == 0) u.delta = 1;
    st.apply_update(u);
    log.push_back(u);
    uint64_t idx = u.index;
    CHECK(st.frequency(idx) == (int64_t)st.insertions(idx) - (int64_t)st.deletions(idx));
  }
  auto a = st.alpha_lp(1);

  std::shuffle(log.begin(), log.end(), rng);
  ExactState st2(cfg(64, StreamKind::GeneralTurnstile));
  st2.apply(log);
  auto b = st2.alpha_lp(1);
  CHECK(a.num == b.num);
  CHECK(a.den == b.den);
}

TEST_CASE("tail_error matches a direct computation") {
  ExactState st(cfg(8));
  for (uint64_t i = 0; i < 8; ++i) st.apply_update({i, (int64_t)(i + 1)});
  // weights 1..8; Err_2 removes {8,7}
  double expect = std::sqrt(1.0 + 4 + 9 + 16 + 25 + 36);
  CHECK(st.tail_error(2) == doctest::Approx(expect));
  CHECK(st.tail_error(100) == 0.0);
}

TEST_CASE("generator: insertion-only realizes alpha 1") {
  GenSpec g;
  g.config = cfg(128, StreamKind::InsertionOnly);
  g.target_alpha = 1.0;
  g.p = 1;
  g.length = 100;
  g.seed = 3;
  auto out = generate_stream(g);
  CHECK(out.realized_alpha == 1.0);
  CHECK(out.updates.size() == 100);
}

TEST_CASE("generator: strict alpha 4 verified by the oracle") {
  for (auto shape : {StreamShape::Uniform, StreamShape::Zipf, StreamShape::SingleHeavy,
                     StreamShape::AdversarialCancel}) {
    GenSpec g;
    g.config = cfg(256);
    g.target_alpha = 4.0;
    g.p = 1;
    g.length = 5000;
    g.shape = shape;
    g.seed = 17;
    auto out = generate_stream(g);
    ExactState oracle(g.config);
    oracle.apply(out.updates);  // throws if strictness is violated
    CHECK(oracle.alpha_lp(1) <= 4.0);
    CHECK(out.realized_alpha <= 4.0);
    CHECK(out.realized_alpha > 1.0);
  }
}

TEST_CASE("generator: general-turnstile L0 alpha bound") {
  GenSpec g;
  g.config = cfg(256, StreamKind::GeneralTurnstile);
  g.target_alpha = 2.0;
  g.p = 0;
  g.length = 400;
  g.seed = 5;
  auto out = generate_stream(g);
  ExactState oracle(g.config);
  oracle.apply(out.updates);
  CHECK(oracle.alpha_lp(0) <= 2.0);
  // sign flips must actually produce negative coordinates
  bool any_negative = false;
  for (uint64_t i = 0; i < 256; ++i) any_negative |= oracle.frequency(i) < 0;
  CHECK(any_negative);
}

TEST_CASE("generator: infeasible specs") {
  GenSpec g;
  g.config = cfg(64);
  g.target_alpha = 1.0;
  g.p = 1;
  g.length = 100;
  g.shape = StreamShape::AdversarialCancel;  // needs deletions
  CHECK_THROWS(generate_stream(g));
  g.shape = StreamShape::Uniform;
  g.target_alpha = 0.5;
  CHECK_THROWS(generate_stream(g));
}

TEST_CASE("stream file round trip") {
  GenSpec g;
  g.config = cfg(64);
  g.target_alpha = 2.0;
  g.p = 1;
  g.length = 500;
  g.seed = 9;
  auto out = generate_stream(g);

  std::stringstream ss;
  write_stream(ss, g.config, out.updates);
  auto rd = read_stream(ss);
  CHECK(rd.config.n == 64);
  CHECK(rd.config.kind == StreamKind::StrictTurnstile);
  REQUIRE(rd.updates.size() == out.updates.size());
  for (size_t i = 0; i < rd.updates.size(); ++i) {
    CHECK(rd.updates[i].index == out.updates[i].index);
    CHECK(rd.updates[i].delta == out.updates[i].delta);
  }
}

TEST_CASE("stream file rejects malformed input") {
  std::stringstream no_header("1\t2\n");
  CHECK_THROWS(read_stream(no_header));
  std::stringstream bad_n("# n=7 kind=strict-turnstile M=1\n");
  CHECK_THROWS(read_stream(bad_n));
  std::stringstream bad_line("# n=8 kind=strict-turnstile M=1\nnope\n");
  CHECK_THROWS(read_stream(bad_line));
}

TEST_CASE("planted stream helper keeps the advertised profile") {
  std::vector<int64_t> w{10, 0, 30, 5};
  auto ups = ds_test::planted_stream(w, 3.0, 77);
  ExactState st(cfg(8));
  st.apply(ups);
  CHECK(st.frequency(0) == 10);
  CHECK(st.frequency(2) == 30);
  CHECK(st.frequency(3) == 5);
  CHECK(st.alpha_lp(1) <= 3.0);
  CHECK(st.strong_alpha() <= 3.0);
}
