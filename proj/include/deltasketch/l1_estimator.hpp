#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "deltasketch/hashing.hpp"
#include "deltasketch/stream.hpp"

namespace deltasketch {

// Probabilistic counter: stores an exponent v, increments with probability
// 2^-v, estimates the tick count as 2^v - 1 (so E[2^v] = t + 1).
class MorrisCounter {
 public:
  void tick(std::mt19937_64& rng) { advance(1, rng); }

  // Advances by `ticks` using geometric skips; same distribution as ticking
  // one at a time.
  void advance(uint64_t ticks, std::mt19937_64& rng);

  double estimate() const { return std::ldexp(1.0, (int)v_) - 1.0; }
  unsigned level() const { return v_; }

 private:
  unsigned v_ = 0;
};

// Exponential-interval sampling scheduler. Level j is live while the
// position estimate sits in [s^j, s^{j+2}); at most two levels are live and
// a retired level never returns. The position proxy is a mean of
// independent Morris counters (or the exact position, as a test hook).
struct LevelSchedulerConfig {
  uint64_t s = 4;              // sampling base, power of two
  unsigned morris_copies = 16;
  bool exact_position = false;
  uint64_t seed = 0;
};

class LevelScheduler {
 public:
  explicit LevelScheduler(LevelSchedulerConfig config);

  struct Event {
    std::vector<unsigned> spawned;
    std::vector<unsigned> retired;
  };

  Event advance(uint64_t ticks, std::mt19937_64& rng);

  double position_estimate() const;
  const std::vector<unsigned>& live() const { return live_; }
  unsigned log2s() const { return log2s_; }
  // Sampling rate of level j is s^-j = 2^-(log2s * j).
  double rate(unsigned j) const { return std::ldexp(1.0, -(int)std::min<uint64_t>(62, (uint64_t)log2s_ * j)); }

 private:
  void sync(Event& ev);

  LevelSchedulerConfig config_;
  unsigned log2s_ = 2;
  std::vector<MorrisCounter> morris_;
  uint64_t exact_t_ = 0;
  std::vector<unsigned> live_;
  long highest_seen_ = -1;  // levels <= this can never spawn again
};

// Strict-turnstile (1±eps) L1 estimator: per live level, sample updates at
// rate s^-j into counters (c+, c-); answer from the oldest live level.
struct StrictL1Config {
  uint64_t n = 0;
  double eps = 0.2;
  double delta = 0.1;
  double alpha = 1.0;
  uint64_t seed = 0;
  double c_lvl = 1.0;      // s = c_lvl * alpha^2 * delta^-1 * log2^3(n) / eps^2
  uint64_t s_override = 0; // power of two; 0 = derive from the formula
  unsigned morris_copies = 16;
  bool exact_position = false;

  uint64_t s() const;
};

class StrictL1Estimator {
 public:
  explicit StrictL1Estimator(StrictL1Config config);

  void update(const Update& u, std::mt19937_64& rng);
  // s^-j* (c+ - c-) for the oldest live level; throws if no level is live.
  double estimate() const;

  const StrictL1Config& config() const { return config_; }
  const LevelScheduler& scheduler() const { return scheduler_; }
  uint64_t level_sample_mass(unsigned j) const;  // c+ + c- if live, 0 otherwise

  struct LevelInfo {
    unsigned j;
    uint64_t birth;  // position when the level spawned
    uint64_t c_plus;
    uint64_t c_minus;
  };
  std::vector<LevelInfo> live_levels() const;

 private:
  struct LevelCounters {
    unsigned j = 0;
    uint64_t c_plus = 0;
    uint64_t c_minus = 0;
    uint64_t skip = 0;  // geometric-skip state toward the next sample
    uint64_t birth = 0;
  };

  void apply_events(const LevelScheduler::Event& ev, uint64_t pos);
  static uint64_t sample_chunk(LevelCounters& lvl, uint64_t chunk, double rate, std::mt19937_64& rng);

  StrictL1Config config_;
  LevelScheduler scheduler_;
  std::vector<LevelCounters> levels_;
  uint64_t pos_ = 0;
};

// General-turnstile estimator: r rows of k-wise Cauchy entries y = Af plus
// a small median block y' = A'f, maintained through integerized sampled
// counters; output y'_med * (-ln((1/r) sum cos(y_i / y'_med))).
struct GeneralL1Config {
  uint64_t n = 0;
  double eps = 0.25;
  double alpha = 4.0;
  uint64_t m_max = 1 << 20;
  uint64_t seed = 0;
  unsigned r_main = 0;    // 0 = ceil(8 / eps^2)
  unsigned r_median = 16;
  unsigned k_main = 0;    // 0 = max(4, ceil(log2(1/eps)))
  unsigned k_median = 4;
  double delta_prec = 0;  // 0 = eps / m_max
  uint64_t s_override = 0;

  unsigned main_rows() const;
  unsigned median_rows() const { return r_median; }
  unsigned main_k() const;
  double precision() const;
  uint64_t s() const;  // row-scheduler base
};

class GeneralL1Estimator {
 public:
  explicit GeneralL1Estimator(GeneralL1Config config);

  void update(const Update& u, std::mt19937_64& rng);
  // nullopt = FAIL (degenerate median or cos-average outside (0, 1]).
  std::optional<double> estimate() const;

  const GeneralL1Config& config() const { return config_; }

 private:
  struct Row {
    KWiseHash entry_hash;  // k-wise field values -> Cauchy entries
    LevelScheduler scheduler;
    struct Level {
      unsigned j;
      __int128 counter;  // signed sampled units
      uint64_t skip;
    };
    std::vector<Level> levels;
  };

  void row_update(Row& row, uint64_t index, int64_t delta, std::mt19937_64& rng);
  std::optional<double> row_value(const Row& row) const;  // rescaled, in units of delta_prec

  GeneralL1Config config_;
  std::vector<Row> main_;
  std::vector<Row> median_;
  bool any_update_ = false;
};

}  // namespace deltasketch
