#pragma once

#include <cstdint>
#include <iosfwd>
#include <random>
#include <vector>

#include "deltasketch/hashing.hpp"
#include "deltasketch/stream.hpp"

namespace deltasketch {

struct CSSSConfig {
  uint64_t n = 0;      // universe size, power of two
  uint64_t k = 1;      // sensitivity; table width is 6k
  double eps = 0.1;    // accuracy
  double alpha = 1.0;  // assumed alpha bound of the input stream
  uint64_t seed = 0;

  double c_d = 2.0;  // rows = ceil(c_d * log2 n)
  double c_T = 1.0;  // T = c_T * (4/eps^2 + log2 n)
  double c_S = 1.0;  // S = c_S * (alpha^2/eps^2) * T^2 * log2 n
  bool sampling_enabled = true;  // tests pin p_exp = 0 by clearing this

  unsigned log2n() const;
  unsigned rows() const;
  uint64_t width() const { return 6 * k; }
  double T() const;
  uint64_t S() const;  // >= 1
  void validate() const;
};

// Countsketch sampling simulator: each row independently feeds a uniform
// sample of the unit-expanded stream into a Countsketch row. Counters come
// in nonnegative (a+, a-) pairs and are binomially halved whenever the
// position counter crosses 2^r * S, keeping the per-row sampling rate
// 2^-p_exp >= S / (2t).
class CSSSTable {
 public:
  explicit CSSSTable(CSSSConfig config);

  // Applies one update; |delta| > 1 is expanded via Bin(|delta|, 2^-p_exp)
  // draws per row. Throws once the table has entered the failed state.
  void update(const Update& u, std::mt19937_64& rng);

  // Median-of-rows point query (lower median for even row counts).
  double query(uint64_t j) const;

  // The k items of largest |query|, ties broken toward the smaller index.
  std::vector<std::pair<uint64_t, double>> topk(uint64_t k) const;

  const CSSSConfig& config() const { return config_; }
  unsigned p_exp() const { return p_exp_; }
  uint64_t position() const { return t_; }
  bool failed() const { return failed_; }
  uint64_t max_counter() const { return peak_counter_; }
  unsigned max_counter_bits() const;
  uint64_t stored_sample_mass() const;  // sum of all counters

  uint64_t cell_plus(unsigned row, uint64_t bucket) const { return cells_[2 * (row * config_.width() + bucket)]; }
  uint64_t cell_minus(unsigned row, uint64_t bucket) const { return cells_[2 * (row * config_.width() + bucket) + 1]; }

  const KWiseHash& row_hash(unsigned row) const { return row_hash_[row]; }
  const KWiseHash& row_sign(unsigned row) const { return row_sign_[row]; }

  // Rescaled signed value of one row's bucket: 2^p_exp * (a+ - a-).
  double row_bucket_value(unsigned row, uint64_t bucket) const;

  // Opaque versioned blob for test replay.
  void serialize(std::ostream& out) const;
  static CSSSTable deserialize(std::istream& in);

 private:
  void halve(std::mt19937_64& rng);
  void add_sampled(unsigned row, uint64_t bucket, bool positive, uint64_t amount);

  CSSSConfig config_;
  std::vector<uint64_t> cells_;  // (a+, a-) interleaved, row-major
  std::vector<KWiseHash> row_hash_;
  std::vector<KWiseHash> row_sign_;
  unsigned p_exp_ = 0;
  uint64_t t_ = 0;
  uint64_t next_boundary_ = 0;  // next halving position; 0 = sampling off
  uint64_t peak_counter_ = 0;
  unsigned __int128 saturation_ = 0;  // S^3
  bool failed_ = false;
};

// Single exact Countsketch row (no sampling); bucket = sum of g(i) * f_i.
class PlainCSRow {
 public:
  PlainCSRow(uint64_t width, uint64_t seed);
  PlainCSRow(KWiseHash h, KWiseHash g);

  void update(uint64_t i, int64_t delta);
  double estimate(uint64_t j) const { return (double)sign_.sign(j) * (double)buckets_[hash_(j)]; }
  double l2() const;
  uint64_t width() const { return buckets_.size(); }
  int64_t bucket(uint64_t b) const { return buckets_[b]; }

 private:
  KWiseHash hash_;
  KWiseHash sign_;
  std::vector<int64_t> buckets_;
};

// Two-instance tail-error estimate: recovers the top-k approximation from
// cs1, folds its negation into cs2's rows, and returns
// v = 2 * median(per-row L2) + 5 * eps * l1, satisfying
// Err <= v <= 45 k^{1/2} eps l1 + 20 Err with high probability.
double estimate_tail_error(const CSSSTable& cs1, const CSSSTable& cs2, double l1);

}  // namespace deltasketch
