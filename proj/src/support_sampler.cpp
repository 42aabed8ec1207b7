#include "deltasketch/support_sampler.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <deque>
#include <stdexcept>

namespace deltasketch {

namespace {

uint64_t powmod(uint64_t base, uint64_t exp, uint64_t m) {
  uint64_t r = 1 % m;
  base %= m;
  while (exp) {
    if (exp & 1) r = (uint64_t)((unsigned __int128)r * base % m);
    base = (uint64_t)((unsigned __int128)base * base % m);
    exp >>= 1;
  }
  return r;
}

uint64_t mod_signed(int64_t v, uint64_t p) {
  int64_t m = v % (int64_t)p;
  if (m < 0) m += (int64_t)p;
  return (uint64_t)m;
}

}  // namespace

SparseRecoverySketch::SparseRecoverySketch(SparseRecoveryConfig config) : config_(config) {
  if (config_.n == 0 || (config_.n & (config_.n - 1)) != 0)
    throw std::invalid_argument("SparseRecoverySketch: n must be a power of two");
  if (config_.s < 1 || config_.rows < 2) throw std::invalid_argument("SparseRecoverySketch: bad sizes");
  uint64_t width = std::bit_ceil(2 * config_.s);
  for (unsigned r = 0; r < config_.rows; ++r)
    row_hash_.emplace_back(2, width, derive_seed(config_.seed, 100 + r));
  std::mt19937_64 rng = make_rng(config_.seed, 0x7372ULL);
  prime_ = sample_prime(uint64_t(1) << 40, uint64_t(1) << 41, rng).value;
  std::uniform_int_distribution<uint64_t> rd(2, prime_ - 2);
  rbase_ = rd(rng);
  rows_.assign(config_.rows, std::vector<Bucket>(width));
}

uint64_t SparseRecoverySketch::fp_term(uint64_t index, int64_t delta) const {
  return (uint64_t)((unsigned __int128)mod_signed(delta, prime_) * powmod(rbase_, index, prime_) % prime_);
}

void SparseRecoverySketch::update(uint64_t index, int64_t delta) {
  if (index >= config_.n) throw std::invalid_argument("SparseRecoverySketch: index out of range");
  uint64_t term = fp_term(index, delta);
  for (unsigned r = 0; r < config_.rows; ++r) {
    Bucket& b = rows_[r][row_hash_[r](index)];
    b.count += delta;
    b.isum += delta * (int64_t)index;
    b.fp = (b.fp + term) % prime_;
  }
}

bool SparseRecoverySketch::same_seeds(const SparseRecoverySketch& other) const {
  return config_.seed == other.config_.seed && config_.n == other.config_.n &&
         config_.s == other.config_.s && config_.rows == other.config_.rows;
}

void SparseRecoverySketch::merge(const SparseRecoverySketch& other) {
  if (!same_seeds(other)) throw std::invalid_argument("SparseRecoverySketch: seed mismatch in merge");
  for (unsigned r = 0; r < config_.rows; ++r)
    for (size_t b = 0; b < rows_[r].size(); ++b) {
      rows_[r][b].count += other.rows_[r][b].count;
      rows_[r][b].isum += other.rows_[r][b].isum;
      rows_[r][b].fp = (rows_[r][b].fp + other.rows_[r][b].fp) % prime_;
    }
}

std::optional<std::vector<std::pair<uint64_t, int64_t>>> SparseRecoverySketch::decode() const {
  auto work = rows_;
  std::map<uint64_t, int64_t> recovered;

  auto pure_index = [&](const Bucket& b) -> std::optional<uint64_t> {
    if (b.count == 0) return std::nullopt;
    if (b.isum % b.count != 0) return std::nullopt;
    int64_t idx = b.isum / b.count;
    if (idx < 0 || (uint64_t)idx >= config_.n) return std::nullopt;
    uint64_t expect = (uint64_t)((unsigned __int128)mod_signed(b.count, prime_) *
                                 powmod(rbase_, (uint64_t)idx, prime_) % prime_);
    if (expect != b.fp) return std::nullopt;
    return (uint64_t)idx;
  };

  std::deque<std::pair<unsigned, uint64_t>> queue;
  for (unsigned r = 0; r < work.size(); ++r)
    for (uint64_t b = 0; b < work[r].size(); ++b)
      if (pure_index(work[r][b])) queue.emplace_back(r, b);

  size_t peeled = 0;
  while (!queue.empty()) {
    auto [r, b] = queue.front();
    queue.pop_front();
    auto idx = pure_index(work[r][b]);
    if (!idx) continue;
    int64_t value = work[r][b].count;
    recovered[*idx] += value;
    if (++peeled > 4 * config_.s + 16) return std::nullopt;  // runaway peel: treat as DENSE
    uint64_t term = (uint64_t)((unsigned __int128)mod_signed(value, prime_) *
                               powmod(rbase_, *idx, prime_) % prime_);
    for (unsigned rr = 0; rr < work.size(); ++rr) {
      Bucket& cell = work[rr][row_hash_[rr](*idx)];
      cell.count -= value;
      cell.isum -= value * (int64_t)*idx;
      cell.fp = (cell.fp + prime_ - term) % prime_;
      if (pure_index(cell)) queue.emplace_back(rr, row_hash_[rr](*idx));
    }
  }

  for (const auto& row : work)
    for (const auto& b : row)
      if (!b.is_zero()) return std::nullopt;  // residual mass: DENSE

  std::vector<std::pair<uint64_t, int64_t>> out;
  for (const auto& [i, v] : recovered)
    if (v != 0) out.emplace_back(i, v);
  if (out.size() > config_.s) return std::nullopt;  // over the sparsity budget: DENSE
  return out;
}

unsigned SupportSamplerConfig::copy_count() const {
  if (copies) return copies;
  return std::max<unsigned>(1, (unsigned)std::ceil(2.0 * std::log(1.0 / delta)));
}

void SupportSamplerConfig::validate() const {
  if (n == 0 || (n & (n - 1)) != 0) throw std::invalid_argument("SupportSampler: n must be a power of two");
  if (k < 1) throw std::invalid_argument("SupportSampler: k >= 1");
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("SupportSampler: delta in (0,1)");
}

double SupportSampler::loglog_term() const {
  double logn = std::max<unsigned>(2, log2n_);
  return std::max(1.0, std::log2(logn)) / logn;
}

SupportSampler::SupportSampler(SupportSamplerConfig config) : config_(config) {
  config_.validate();
  log2n_ = (unsigned)std::countr_zero(config_.n);
  const double eps = 1.0 / 48.0;
  half_width_ = config_.half_width_override > 0 ? config_.half_width_override
                                                : 2.0 * std::log2(config_.alpha / eps);
  double band = std::log2((double)config_.n * (double)config_.s() * loglog_term() / 24.0);
  band_start_ = (unsigned)std::max<long>(0, std::min<long>((long)log2n_, (long)std::ceil(band)));

  for (unsigned c = 0; c < config_.copy_count(); ++c) {
    uint64_t cs = derive_seed(config_.seed, 0x7373 * 100 + c);
    copies_.push_back(Copy{KWiseHash(2, config_.n, derive_seed(cs, 1)),
                           RoughF0Tracker(config_.n, 128, derive_seed(cs, 2)),
                           {},
                           {}});
    sync_copy(copies_.back(), c);
  }
}

bool SupportSampler::in_window(const Copy& c, unsigned j) const {
  if (j >= band_start_) return true;  // permanent high band
  double r_t = std::max(1.0, c.tracker.l0_bar());
  double center = std::log2((double)config_.n * (double)config_.s() / (3.0 * r_t));
  return (double)j >= center - half_width_ && (double)j <= center + half_width_;
}

void SupportSampler::sync_copy(Copy& c, uint64_t copy_idx) {
  // R^t is nondecreasing, so the window center only moves down: levels
  // retire off the top and spawn at the bottom, and never come back.
  for (auto it = c.live.begin(); it != c.live.end();) {
    if (!in_window(c, it->first)) {
      c.retired.insert(it->first);
      it = c.live.erase(it);
    } else {
      ++it;
    }
  }
  for (unsigned j = 0; j <= log2n_; ++j) {
    if (!in_window(c, j) || c.retired.count(j) || c.live.count(j)) continue;
    SparseRecoveryConfig sc;
    sc.n = config_.n;
    sc.s = config_.s();
    sc.seed = derive_seed(config_.seed, 0x6c76ULL * 4096 + copy_idx * 64 + j);
    c.live.emplace(j, Level{SparseRecoverySketch(sc), t_});
  }
}

void SupportSampler::update(const Update& u) {
  if (u.index >= config_.n) throw std::invalid_argument("SupportSampler: index out of range");
  ++t_;
  for (size_t ci = 0; ci < copies_.size(); ++ci) {
    Copy& c = copies_[ci];
    c.tracker.update(u.index);
    sync_copy(c, ci);
    uint64_t hv = c.h(u.index);
    for (auto& [j, lvl] : c.live)
      if (hv < (uint64_t(1) << j)) lvl.sketch.update(u.index, u.delta);
  }
}

std::vector<uint64_t> SupportSampler::query() const {
  std::set<uint64_t> out;
  for (const auto& c : copies_) {
    for (const auto& [j, lvl] : c.live) {
      auto dec = lvl.sketch.decode();
      if (!dec) continue;
      for (const auto& [i, v] : *dec)
        if (v > 0) out.insert(i);  // strictly positive suffix coordinates only
    }
  }
  return std::vector<uint64_t>(out.begin(), out.end());
}

std::vector<unsigned> SupportSampler::live_levels(unsigned copy) const {
  std::vector<unsigned> out;
  for (const auto& [j, lvl] : copies_[copy].live) out.push_back(j);
  return out;
}

std::optional<std::vector<std::pair<uint64_t, int64_t>>> SupportSampler::decode_level(
    unsigned copy, unsigned j) const {
  auto it = copies_[copy].live.find(j);
  if (it == copies_[copy].live.end()) return std::nullopt;
  return it->second.sketch.decode();
}

}  // namespace deltasketch
