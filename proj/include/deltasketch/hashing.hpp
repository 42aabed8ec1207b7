#pragma once

#include <cstdint>
#include <cmath>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

namespace deltasketch {

// splitmix64 finalizer. Used to derive independent sub-seeds from a master
// seed so that every random draw in a run hangs off one --seed value.
inline uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline uint64_t derive_seed(uint64_t master, uint64_t tag) {
  return mix64(master ^ (0x632be59bd9b4e019ULL + mix64(tag)));
}

inline std::mt19937_64 make_rng(uint64_t master, uint64_t tag) {
  return std::mt19937_64(derive_seed(master, tag));
}

// Arithmetic over GF(p) for the Mersenne prime p = 2^61 - 1.
inline constexpr uint64_t kMersenne61 = (uint64_t(1) << 61) - 1;

inline uint64_t mul_m61(uint64_t a, uint64_t b) {
  unsigned __int128 z = (unsigned __int128)a * b;
  uint64_t lo = (uint64_t)(z & kMersenne61);
  uint64_t hi = (uint64_t)(z >> 61);
  uint64_t s = lo + hi;
  if (s >= kMersenne61) s -= kMersenne61;
  return s;
}

inline uint64_t add_m61(uint64_t a, uint64_t b) {
  uint64_t s = a + b;
  if (s >= kMersenne61) s -= kMersenne61;
  return s;
}

// k-wise independent hash: a degree-(k-1) polynomial with random
// coefficients over GF(2^61-1), reduced to the output range. The reduction
// bias is range / 2^61 and is ignored; power-of-two ranges use a mask.
class KWiseHash {
 public:
  KWiseHash() = default;

  KWiseHash(unsigned k, uint64_t range, uint64_t seed) : k_(k), range_(range), seed_(seed) {
    if (k == 0) throw std::invalid_argument("KWiseHash: k must be >= 1");
    if (range == 0 || range >= kMersenne61) throw std::invalid_argument("KWiseHash: bad range");
    mask_ = (range & (range - 1)) == 0 ? range - 1 : 0;
    std::mt19937_64 rng(derive_seed(seed, 0x6b77697365ULL));
    std::uniform_int_distribution<uint64_t> dist(0, kMersenne61 - 1);
    coeffs_.resize(k);
    for (auto& c : coeffs_) c = dist(rng);
    if (k > 1 && coeffs_.back() == 0) coeffs_.back() = 1;
  }

  // Full field element in [0, 2^61-1); the k-wise guarantee lives here.
  uint64_t eval_field(uint64_t x) const {
    uint64_t xm = x >= kMersenne61 ? x - kMersenne61 : x;
    uint64_t acc = 0;
    for (size_t i = coeffs_.size(); i-- > 0;) acc = add_m61(mul_m61(acc, xm), coeffs_[i]);
    return acc;
  }

  uint64_t operator()(uint64_t x) const {
    uint64_t v = eval_field(x);
    return mask_ ? (v & mask_) : (v % range_);
  }

  // ±1 hash from the same family (low bit of the field element).
  int sign(uint64_t x) const { return (eval_field(x) & 1) ? 1 : -1; }

  unsigned k() const { return k_; }
  uint64_t range() const { return range_; }
  uint64_t seed() const { return seed_; }

 private:
  unsigned k_ = 0;
  uint64_t range_ = 1;
  uint64_t mask_ = 0;
  uint64_t seed_ = 0;
  std::vector<uint64_t> coeffs_;
};

// Deterministic Miller-Rabin, valid for all 64-bit inputs.
bool is_prime_u64(uint64_t n);

struct RandomPrime {
  uint64_t lo = 0;
  uint64_t hi = 0;
  uint64_t value = 0;
};

// Uniform prime in [lo, hi] by rejection sampling; throws if the interval
// contains no prime.
RandomPrime sample_prime(uint64_t lo, uint64_t hi, std::mt19937_64& rng);

// x mod p computed from the bits of x, low-order first, keeping only the
// running residue and the running power of two (never materializes x).
// Requires p < 2^62.
uint64_t mod_reduce_streaming(std::span<const uint8_t> bits, uint64_t p);
uint64_t mod_reduce_streaming(uint64_t x, uint64_t p);

struct StableVariate {
  double theta = 0.0;  // uniform in (-pi/2, pi/2)
  double value = 0.0;  // tan(theta), rounded to a multiple of delta_prec
};

// tan of a uniform angle: a standard Cauchy (1-stable) draw, truncated to
// the stated precision. Reproducible from (seed, index).
StableVariate stable_draw(uint64_t seed, uint64_t index, double delta_prec);
StableVariate stable_from_theta(double theta, double delta_prec);

// Maps a field element to a Cauchy variate; shared by stable_draw and the
// k-wise row generators of the general L1 estimator.
StableVariate stable_from_field(uint64_t field_value, double delta_prec);

}  // namespace deltasketch
