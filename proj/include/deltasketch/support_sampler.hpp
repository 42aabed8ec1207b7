#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "deltasketch/hashing.hpp"
#include "deltasketch/l0_estimator.hpp"
#include "deltasketch/stream.hpp"

namespace deltasketch {

// Linear s-sparse recovery sketch: a few rows of 2s buckets, each holding
// (count, index-weighted sum, fingerprint sum of delta * r^index mod p).
// Decoding peels 1-sparse buckets; an s-sparse input is recovered exactly,
// anything else reports DENSE (up to fingerprint collisions, < 1e-6 per
// decode at the default prime size).
struct SparseRecoveryConfig {
  uint64_t n = 0;
  uint64_t s = 1;
  unsigned rows = 4;
  uint64_t seed = 0;
};

class SparseRecoverySketch {
 public:
  explicit SparseRecoverySketch(SparseRecoveryConfig config);

  void update(uint64_t index, int64_t delta);
  // Recovered (index, value) pairs sorted by index; nullopt = DENSE.
  std::optional<std::vector<std::pair<uint64_t, int64_t>>> decode() const;

  const SparseRecoveryConfig& config() const { return config_; }
  // cellwise merge; seeds must match (linearity of the sketch)
  void merge(const SparseRecoverySketch& other);
  bool same_seeds(const SparseRecoverySketch& other) const;

 private:
  struct Bucket {
    int64_t count = 0;
    int64_t isum = 0;
    uint64_t fp = 0;
    bool is_zero() const { return count == 0 && isum == 0 && fp == 0; }
  };

  uint64_t fp_term(uint64_t index, int64_t delta) const;

  SparseRecoveryConfig config_;
  std::vector<KWiseHash> row_hash_;
  uint64_t prime_ = 0;
  uint64_t rbase_ = 0;
  std::vector<std::vector<Bucket>> rows_;
};

// Alpha-property support sampler: pairwise level sets I_j = {i : h(i) < 2^j},
// per-level s-sparse sketches of the suffix from the level's birth, level
// window driven by a rough L0 tracker plus a permanent high band; returns
// strictly positive decoded coordinates, which on strict streams always lie
// in supp(f).
struct SupportSamplerConfig {
  uint64_t n = 0;
  uint64_t k = 1;
  double delta = 0.1;
  double alpha = 4.0;
  uint64_t seed = 0;
  unsigned copies = 0;  // 0 = derive from delta
  double half_width_override = 0;  // test hook; 0 = 2 log2(48 alpha)

  uint64_t s() const { return 205 * k; }
  unsigned copy_count() const;
  void validate() const;
};

class SupportSampler {
 public:
  explicit SupportSampler(SupportSamplerConfig config);

  void update(const Update& u);
  // Union of strictly positive coordinates over all decodable live levels
  // and copies, sorted; |U| >= min(k, ||f||_0) with probability 1 - delta.
  std::vector<uint64_t> query() const;

  const SupportSamplerConfig& config() const { return config_; }
  std::vector<unsigned> live_levels(unsigned copy) const;
  unsigned band_start() const { return band_start_; }
  const KWiseHash& copy_hash(unsigned copy) const { return copies_[copy].h; }
  std::optional<std::vector<std::pair<uint64_t, int64_t>>> decode_level(unsigned copy, unsigned j) const;

 private:
  struct Level {
    SparseRecoverySketch sketch;
    uint64_t birth;
  };
  struct Copy {
    KWiseHash h;
    RoughF0Tracker tracker;
    std::map<unsigned, Level> live;
    std::set<unsigned> retired;
  };

  void sync_copy(Copy& c, uint64_t copy_idx);
  bool in_window(const Copy& c, unsigned j) const;
  double loglog_term() const;

  SupportSamplerConfig config_;
  unsigned log2n_ = 0;
  unsigned band_start_ = 0;
  double half_width_ = 0;
  std::vector<Copy> copies_;
  uint64_t t_ = 0;
};

}  // namespace deltasketch
