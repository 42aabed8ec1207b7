#include "deltasketch/inner_product.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <stdexcept>

namespace deltasketch {

namespace {

uint64_t next_pow2(double x) {
  if (x <= 1.0) return 1;
  if (x >= 9e18) return uint64_t(1) << 62;
  return std::bit_ceil((uint64_t)std::ceil(x));
}

uint64_t consume_chunk(uint64_t& skip, uint64_t chunk, double p, std::mt19937_64& rng) {
  if (p >= 1.0) return chunk;
  uint64_t hits = 0;
  while (chunk > 0) {
    if (skip >= chunk) {
      skip -= chunk;
      return hits;
    }
    chunk -= skip + 1;
    ++hits;
    std::geometric_distribution<uint64_t> g(p);
    skip = g(rng);
  }
  return hits;
}

}  // namespace

uint64_t IPConfig::s() const {
  if (s_override) return s_override;
  return std::max<uint64_t>(4, next_pow2(c_s * alpha * alpha / (eps * eps)));
}

uint64_t IPConfig::buckets() const { return std::max<uint64_t>(2, next_pow2(c_k / eps)); }

uint64_t IPConfig::prime_lo() const {
  double s4 = (double)s();
  s4 = 100.0 * s4 * s4 * s4 * s4;
  uint64_t d = s4 > (double)(uint64_t(1) << 20) ? (uint64_t(1) << 20) : (uint64_t)s4;
  return std::max<uint64_t>(d, 2 * n);
}

uint64_t IPConfig::prime_hi() const {
  unsigned __int128 lo = prime_lo();
  unsigned __int128 hi = lo * lo * lo;
  unsigned __int128 cap = (unsigned __int128)1 << 61;
  return (uint64_t)(hi > cap ? cap : hi);
}

void IPConfig::validate() const {
  if (n == 0 || (n & (n - 1)) != 0) throw std::invalid_argument("IPConfig: n must be a power of two");
  if (!(eps > 0.0 && eps < 1.0)) throw std::invalid_argument("IPConfig: eps in (0,1)");
  if (alpha < 1.0) throw std::invalid_argument("IPConfig: alpha >= 1");
}

IPSharedSeed::IPSharedSeed(IPConfig config) : config_(config) { config_.validate(); }

const IPSharedSeed::IntervalMaterial& IPSharedSeed::material(unsigned r) const {
  while (cache_.size() <= r) {
    unsigned idx = (unsigned)cache_.size();
    uint64_t ms = derive_seed(config_.seed, 0x6970ULL * 1024 + idx);
    std::mt19937_64 rng(ms);
    uint64_t prime = sample_prime(config_.prime_lo(), config_.prime_hi(), rng).value;
    cache_.push_back(IntervalMaterial{prime, KWiseHash(4, config_.buckets(), derive_seed(ms, 1)),
                                      KWiseHash(4, 2, derive_seed(ms, 2))});
  }
  return cache_[r];
}

IPSketch::IPSketch(const IPSharedSeed& seed) : seed_(&seed) {
  log2s_ = (unsigned)std::countr_zero(seed.config().s());
}

IPSketch::LiveInterval* IPSketch::find(unsigned r) {
  for (auto& li : live_)
    if (li.r == r) return &li;
  return nullptr;
}

void IPSketch::sync_live(std::mt19937_64& rng) {
  // interval r is live while t in [s^r, s^{r+2})
  if (t_ == 0) return;
  long hi = (long)(std::bit_width(t_) - 1) / (long)log2s_;
  for (size_t i = live_.size(); i-- > 0;) {
    if ((long)live_[i].r < hi - 1) live_.erase(live_.begin() + (long)i);
  }
  for (long r = std::max<long>(0, hi - 1); r <= hi; ++r) {
    unsigned __int128 lo_bound = (unsigned __int128)1 << std::min<long>(120, log2s_ * r);
    if ((unsigned __int128)t_ < lo_bound) continue;
    if (!find((unsigned)r)) {
      LiveInterval li;
      li.r = (unsigned)r;
      li.buckets.assign(seed_->config().buckets(), 0);
      double rate = std::ldexp(1.0, -(int)std::min<long>(62, log2s_ * r));
      if (rate < 1.0) {
        std::geometric_distribution<uint64_t> g(rate);
        li.skip = g(rng);
      }
      live_.push_back(std::move(li));
    }
  }
}

void IPSketch::update(const Update& u, std::mt19937_64& rng) {
  if (failed_) throw std::runtime_error("IPSketch: saturated");
  if (u.index >= seed_->config().n) throw std::invalid_argument("IPSketch: index out of range");
  uint64_t mass = (uint64_t)std::llabs(u.delta);
  if (mass == 0) return;
  // process unit-by-unit in chunks whose live window is constant
  uint64_t done = 0;
  while (done < mass) {
    ++t_;
    sync_live(rng);
    // how many units until the next interval boundary (next power of s)
    uint64_t until = mass - done;
    long hi = (long)(std::bit_width(t_) - 1) / (long)log2s_;
    unsigned __int128 next_edge = (unsigned __int128)1 << std::min<long>(120, log2s_ * (hi + 1));
    if (next_edge - t_ < until) until = (uint64_t)(next_edge - t_);
    if (until == 0) until = 1;

    for (auto& li : live_) {
      double rate = std::ldexp(1.0, -(int)std::min<uint64_t>(62, (uint64_t)log2s_ * li.r));
      uint64_t hits = consume_chunk(li.skip, until, rate, rng);
      if (hits == 0) continue;
      const auto& mat = seed_->material(li.r);
      uint64_t id = mod_reduce_streaming(u.index, mat.prime);
      int64_t add = (int64_t)hits * (u.delta > 0 ? 1 : -1) * mat.sign_hash.sign(id);
      int64_t& cell = li.buckets[mat.bucket_hash(id)];
      cell += add;
      li.sampled += hits;
      if (std::llabs(cell) > (int64_t)4e18) failed_ = true;
    }
    t_ += until - 1;
    done += until;
  }
}

unsigned IPSketch::oldest_live() const {
  if (live_.empty()) throw std::runtime_error("IPSketch: no live interval (empty stream?)");
  unsigned best = live_.front().r;
  for (const auto& li : live_) best = std::min(best, li.r);
  return best;
}

bool IPSketch::has_interval(unsigned r) const {
  for (const auto& li : live_)
    if (li.r == r) return true;
  return false;
}

const std::vector<int64_t>& IPSketch::interval_buckets(unsigned r) const {
  for (const auto& li : live_)
    if (li.r == r) return li.buckets;
  throw std::runtime_error("IPSketch: interval not live");
}

uint64_t IPSketch::stored_samples() const {
  uint64_t s = 0;
  for (const auto& li : live_)
    for (int64_t b : li.buckets) s += (uint64_t)std::llabs(b);
  return s;
}

uint64_t IPSketch::interval_sample_count(unsigned r) const {
  for (const auto& li : live_)
    if (li.r == r) return li.sampled;
  return 0;
}

double ip_estimate(const IPSketch& f, const IPSketch& g, const IPSharedSeed& seed) {
  if (f.failed() || g.failed()) throw std::runtime_error("ip_estimate: saturated sketch");
  unsigned r = std::max(f.oldest_live(), g.oldest_live());
  if (!f.has_interval(r) || !g.has_interval(r))
    throw std::runtime_error("ip_estimate: streams have no shared live interval");
  const auto& F = f.interval_buckets(r);
  const auto& G = g.interval_buckets(r);
  double dot = 0;
  for (size_t b = 0; b < F.size(); ++b) dot += (double)F[b] * (double)G[b];
  unsigned log2s = (unsigned)std::countr_zero(seed.config().s());
  return std::ldexp(dot, (int)std::min<uint64_t>(1000, 2ull * log2s * r));
}

}  // namespace deltasketch
