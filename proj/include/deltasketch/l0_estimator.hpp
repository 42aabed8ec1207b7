#pragma once

#include <bit>
#include <cstdint>
#include <optional>
#include <random>
#include <set>
#include <unordered_map>
#include <vector>

#include "deltasketch/hashing.hpp"
#include "deltasketch/stream.hpp"

namespace deltasketch {

// 0-based index of the least significant set bit; lsb(0) = log2(n).
inline unsigned lsb_level(uint64_t x, unsigned log2n) {
  if (x == 0) return log2n;
  return (unsigned)std::countr_zero(x);
}

// Nondecreasing rough F0 tracker: k-minimum-values over a 2-wise hashed
// universe, scaled by a safety factor so the running estimate stays inside
// [F0, 8 F0] once F0 clears the contract floor.
class RoughF0Tracker {
 public:
  RoughF0Tracker(uint64_t n, unsigned kmv, uint64_t seed);

  void update(uint64_t index);
  double query() const { return running_; }  // 0 before any update

  // max(query, 8 log2 n / loglog2 n): the window driver for the matrix and
  // the constant-factor estimator.
  double l0_bar() const;

 private:
  void refresh();

  KWiseHash hash_;
  unsigned kmv_;
  unsigned log2n_;
  std::set<uint64_t> smallest_;
  double running_ = 0.0;
};

// Exact L0 for F0 <= c, else LARGE: 2-wise hashed identities with counters
// kept mod a random prime.
class SmallF0Exact {
 public:
  SmallF0Exact(uint64_t n, uint64_t c, uint64_t m_max_mag, uint64_t seed);

  void update(const Update& u);
  // value = exact L0; nullopt = LARGE.
  std::optional<uint64_t> query() const;
  uint64_t threshold() const { return c_; }

 private:
  KWiseHash hash_;
  uint64_t c_;
  uint64_t prime_;
  bool large_ = false;
  std::unordered_map<uint64_t, uint64_t> counters_;  // hashed id -> value mod prime
};

// Single collapsed row of width K' = 2K with mod-p fingerprint cells;
// returns (1±eps) L0 or LARGE (implying L0 > eps^-2 / 16).
class SmallL0Branch {
 public:
  SmallL0Branch(uint64_t n, double eps, uint64_t m_max_mag, uint64_t seed);

  void update(const Update& u);
  std::optional<double> query() const;  // nullopt = LARGE
  uint64_t width() const { return cells_.size(); }

 private:
  uint64_t k_user_;
  KWiseHash h2_;
  KWiseHash h3_;
  KWiseHash h4_;
  uint64_t prime_;
  std::vector<uint64_t> u_;
  std::vector<uint64_t> cells_;
};

// Outputs L0 exactly with probability >= 1 - eta, given L0 <= c: a few
// trials of pairwise-hashed buckets holding frequency sums mod a small
// random prime; the report is the max nonzero-bucket count over trials.
class ExactSmallL0 {
 public:
  struct Shared {
    Shared(uint64_t n, unsigned trials, uint64_t buckets, uint64_t m_max_mag, uint64_t seed);
    std::vector<KWiseHash> hashes;
    uint64_t prime;
    uint64_t buckets;
  };

  explicit ExactSmallL0(const Shared* shared);
  void update(uint64_t index, int64_t delta);
  uint64_t query() const;

 private:
  const Shared* shared_;
  std::vector<std::vector<uint32_t>> counters_;
};

// End-of-stream R in [L0, 100 L0]: per-level exact-small-L0 structures over
// the sliding window of levels driven by l0_bar (c = 132, eta = 1/16).
class ConstL0Estimator {
 public:
  ConstL0Estimator(uint64_t n, double alpha, uint64_t m_max_mag, uint64_t seed);

  void update(const Update& u, double l0_bar);
  double query(double l0_bar_final) const;  // one of {50} ∪ {(20000/99) 2^j}

 private:
  struct Level {
    ExactSmallL0 sketch;
    uint64_t birth;
  };
  void sync_window(double l0_bar);

  uint64_t n_;
  unsigned log2n_;
  KWiseHash h_;
  double half_width_;
  ExactSmallL0::Shared shared_;
  std::unordered_map<unsigned, Level> levels_;
  uint64_t t_ = 0;
};

// Windowed subsampling-by-lsb matrix with mod-p fingerprint cells; rows
// live inside log2(16 l0_bar / K) ± w plus a permanent high band.
class L0Matrix {
 public:
  struct Params {
    uint64_t n = 0;
    double eps_user = 0.25;      // sets the window half-width
    double eps_internal = 0.0;   // sets K; 0 = eps_user / 32 (see README)
    double alpha = 4.0;
    uint64_t m_max_mag = uint64_t(1) << 40;
    uint64_t seed = 0;
  };

  explicit L0Matrix(Params params);

  void update(const Update& u, double l0_bar);
  // Bin-count inversion at row i* = round(log2(16R/K)); throws if the row
  // was never retained or is saturated (T = K).
  double estimate(double R) const;

  uint64_t K() const { return K_; }
  unsigned half_width() const { return w_; }
  unsigned retained_rows() const;
  unsigned max_retained_rows() const { return peak_rows_; }
  std::optional<uint64_t> row_birth(unsigned row) const;
  uint64_t nonzero_cells(unsigned row) const;
  bool row_retained(unsigned row) const;

  static double effective_eps(const Params& p);

 private:
  void sync_window(double l0_bar);
  double anchor(double l0_bar) const;

  Params params_;
  unsigned log2n_;
  uint64_t K_;
  unsigned w_;
  unsigned high_band_;
  KWiseHash h1_, h2_, h3_, h4_;
  uint64_t prime_;
  std::vector<uint64_t> u_;
  std::vector<std::vector<uint64_t>> rows_;      // empty = absent
  std::vector<std::optional<uint64_t>> births_;
  long low_row_ = 0, high_row_ = -1;  // current contiguous window
  unsigned peak_rows_ = 0;
  uint64_t t_ = 0;
};

// Full (1±eps) L0 driver: exact small-F0 branch, small-L0 branch, then the
// windowed matrix with R from the constant-factor estimator; median over
// independent copies.
struct L0Config {
  uint64_t n = 0;
  double eps = 0.25;
  double alpha = 4.0;
  uint64_t seed = 0;
  uint64_t m_max_mag = uint64_t(1) << 40;
  double c_rescale = 32.0;  // matrix runs at eps/c_rescale
  unsigned copies = 5;
  unsigned kmv = 128;

  uint64_t small_f0_threshold() const;  // 8 log2 n / loglog2 n
  void validate() const;
};

class L0Estimator {
 public:
  explicit L0Estimator(L0Config config);

  void update(const Update& u);
  double estimate() const;  // median over copies; throws if every copy fails

  const L0Config& config() const { return config_; }
  const L0Matrix& matrix(unsigned copy = 0) const { return copies_[copy].matrix; }
  const RoughF0Tracker& tracker(unsigned copy = 0) const { return copies_[copy].tracker; }

 private:
  struct Copy {
    RoughF0Tracker tracker;
    SmallF0Exact small_f0;
    SmallL0Branch small_l0;
    ConstL0Estimator const_l0;
    L0Matrix matrix;
  };
  std::optional<double> copy_estimate(const Copy& c) const;

  L0Config config_;
  std::vector<Copy> copies_;
};

}  // namespace deltasketch
