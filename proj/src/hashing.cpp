#include "deltasketch/hashing.hpp"

#include <algorithm>
#include <numbers>

namespace deltasketch {

namespace {

uint64_t mulmod_u64(uint64_t a, uint64_t b, uint64_t m) {
  return (uint64_t)((unsigned __int128)a * b % m);
}

uint64_t powmod_u64(uint64_t base, uint64_t exp, uint64_t m) {
  uint64_t r = 1 % m;
  base %= m;
  while (exp) {
    if (exp & 1) r = mulmod_u64(r, base, m);
    base = mulmod_u64(base, base, m);
    exp >>= 1;
  }
  return r;
}

}  // namespace

bool is_prime_u64(uint64_t n) {
  if (n < 2) return false;
  for (uint64_t p : {2ull, 3ull, 5ull, 7ull, 11ull, 13ull, 17ull, 19ull, 23ull, 29ull, 31ull, 37ull}) {
    if (n % p == 0) return n == p;
  }
  uint64_t d = n - 1;
  int s = 0;
  while ((d & 1) == 0) {
    d >>= 1;
    ++s;
  }
  // This base set is a proven deterministic witness set for n < 3.3 * 10^24.
  for (uint64_t a : {2ull, 3ull, 5ull, 7ull, 11ull, 13ull, 17ull, 19ull, 23ull, 29ull, 31ull, 37ull}) {
    uint64_t x = powmod_u64(a, d, n);
    if (x == 1 || x == n - 1) continue;
    bool composite = true;
    for (int i = 1; i < s; ++i) {
      x = mulmod_u64(x, x, n);
      if (x == n - 1) {
        composite = false;
        break;
      }
    }
    if (composite) return false;
  }
  return true;
}

RandomPrime sample_prime(uint64_t lo, uint64_t hi, std::mt19937_64& rng) {
  if (lo < 2) lo = 2;
  if (hi < lo) throw std::invalid_argument("sample_prime: empty interval");

  // Establish that a prime exists. Prime gaps below 2^64 never exceed ~1550,
  // so a bounded forward scan from lo is conclusive for wide intervals.
  const uint64_t scan_cap = 100000;
  bool found = false;
  for (uint64_t x = lo; x <= hi && x - lo < scan_cap; ++x) {
    if (is_prime_u64(x)) {
      found = true;
      break;
    }
  }
  if (!found) throw std::runtime_error("sample_prime: no prime in [lo, hi]");

  std::uniform_int_distribution<uint64_t> dist(lo, hi);
  while (true) {
    uint64_t x = dist(rng);
    if (is_prime_u64(x)) return RandomPrime{lo, hi, x};
  }
}

uint64_t mod_reduce_streaming(std::span<const uint8_t> bits, uint64_t p) {
  if (p == 0 || p >= (uint64_t(1) << 62)) throw std::invalid_argument("mod_reduce_streaming: need 0 < p < 2^62");
  uint64_t acc = 0;      // running residue
  uint64_t pow2 = 1 % p; // 2^t mod p
  for (uint8_t b : bits) {
    if (b) {
      acc += pow2;
      if (acc >= p) acc -= p;
    }
    pow2 <<= 1;
    if (pow2 >= p) pow2 -= p;
  }
  return acc;
}

uint64_t mod_reduce_streaming(uint64_t x, uint64_t p) {
  if (p == 0 || p >= (uint64_t(1) << 62)) throw std::invalid_argument("mod_reduce_streaming: need 0 < p < 2^62");
  uint64_t acc = 0;
  uint64_t pow2 = 1 % p;
  while (x) {
    if (x & 1) {
      acc += pow2;
      if (acc >= p) acc -= p;
    }
    pow2 <<= 1;
    if (pow2 >= p) pow2 -= p;
    x >>= 1;
  }
  return acc;
}

StableVariate stable_from_theta(double theta, double delta_prec) {
  if (delta_prec <= 0) throw std::invalid_argument("stable_from_theta: delta_prec must be > 0");
  StableVariate v;
  v.theta = theta;
  v.value = std::round(std::tan(theta) / delta_prec) * delta_prec;
  return v;
}

StableVariate stable_from_field(uint64_t field_value, double delta_prec) {
  // (v + 1/2) / p lies strictly inside (0, 1), so theta avoids the poles.
  double u = ((double)field_value + 0.5) / (double)kMersenne61;
  return stable_from_theta(std::numbers::pi * (u - 0.5), delta_prec);
}

StableVariate stable_draw(uint64_t seed, uint64_t index, double delta_prec) {
  uint64_t h = mix64(derive_seed(seed, 0x737461626cULL) ^ mix64(index));
  return stable_from_field(h % kMersenne61, delta_prec);
}

}  // namespace deltasketch
