#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "deltasketch/hashing.hpp"
#include "deltasketch/stream.hpp"

namespace deltasketch {

// Inner product estimation for two alpha-property streams: interval
// sampling at rate s^-r, identity reduction mod a random prime, and paired
// Countsketch vectors sharing one hash family per interval.
struct IPConfig {
  uint64_t n = 0;
  double eps = 0.25;
  double alpha = 4.0;
  uint64_t seed = 0;
  double c_k = 1000.0;      // buckets k = c_k / eps, rounded to a power of two
  double c_s = 64.0;        // s = c_s * alpha^2 / eps^2, rounded to a power of two
  uint64_t s_override = 0;  // power of two

  uint64_t s() const;
  uint64_t buckets() const;
  // Prime domain [D, min(D^3, 2^61)]; D = min(100 s^4, 2^20) so the modulus
  // stays inside the streaming-reduction range.
  uint64_t prime_lo() const;
  uint64_t prime_hi() const;
  void validate() const;
};

// Per-interval randomness shared by both streams' sketches: the prime P_r
// and the bucket/sign hashes over [P_r]. Deterministic in (seed, r).
class IPSharedSeed {
 public:
  explicit IPSharedSeed(IPConfig config);

  struct IntervalMaterial {
    uint64_t prime;
    KWiseHash bucket_hash;  // 4-wise -> [k]
    KWiseHash sign_hash;    // 4-wise -> {±1}
  };

  const IntervalMaterial& material(unsigned r) const;
  const IPConfig& config() const { return config_; }

 private:
  IPConfig config_;
  mutable std::vector<IntervalMaterial> cache_;
};

class IPSketch {
 public:
  explicit IPSketch(const IPSharedSeed& seed);

  // Samples the update into each live interval at rate s^-r; indices are
  // reduced mod P_r before hashing. |delta| > 1 expands binomially.
  void update(const Update& u, std::mt19937_64& rng);

  unsigned oldest_live() const;
  const std::vector<int64_t>& interval_buckets(unsigned r) const;
  bool has_interval(unsigned r) const;
  uint64_t position() const { return t_; }
  bool failed() const { return failed_; }
  uint64_t stored_samples() const;
  uint64_t interval_sample_count(unsigned r) const;

 private:
  struct LiveInterval {
    unsigned r;
    std::vector<int64_t> buckets;
    uint64_t skip = 0;  // geometric-skip state at rate s^-r
    uint64_t sampled = 0;
  };

  void sync_live(std::mt19937_64& rng);
  LiveInterval* find(unsigned r);

  const IPSharedSeed* seed_;
  std::vector<LiveInterval> live_;
  uint64_t t_ = 0;
  unsigned log2s_ = 2;
  bool failed_ = false;
};

// p_f^-1 p_g^-1 sum_b F_b G_b over the oldest interval live in both
// sketches; throws if the streams' live windows do not overlap.
double ip_estimate(const IPSketch& f, const IPSketch& g, const IPSharedSeed& seed);

}  // namespace deltasketch
