#include "deltasketch/l1_estimator.hpp"

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

// Geometric skip count before the next success at rate p (p in (0,1)).
uint64_t geometric_skip(double p, std::mt19937_64& rng) {
  if (p >= 1.0) return 0;
  std::geometric_distribution<uint64_t> g(p);
  return g(rng);
}

// Consumes `chunk` Bernoulli(p) trials through a persistent skip state,
// returning the number of successes. Equivalent to Bin(chunk, p).
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
    skip = geometric_skip(p, rng);
  }
  return hits;
}

double lower_median_abs(std::vector<double>& v) {
  for (auto& x : v) x = std::fabs(x);
  size_t mid = (v.size() - 1) / 2;
  std::nth_element(v.begin(), v.begin() + (long)mid, v.end());
  return v[mid];
}

}  // namespace

void MorrisCounter::advance(uint64_t ticks, std::mt19937_64& rng) {
  while (ticks > 0 && v_ < 62) {
    if (v_ == 0) {
      ++v_;  // increment probability 2^0 = 1
      --ticks;
      continue;
    }
    double p = std::ldexp(1.0, -(int)v_);
    std::geometric_distribution<uint64_t> g(p);
    uint64_t skip = g(rng);
    if (skip >= ticks) return;
    ticks -= skip + 1;
    ++v_;
  }
}

LevelScheduler::LevelScheduler(LevelSchedulerConfig config) : config_(config) {
  if (config_.s < 2 || (config_.s & (config_.s - 1)) != 0)
    throw std::invalid_argument("LevelScheduler: s must be a power of two >= 2");
  log2s_ = (unsigned)std::countr_zero(config_.s);
  if (!config_.exact_position) {
    if (config_.morris_copies == 0) throw std::invalid_argument("LevelScheduler: need morris copies");
    morris_.resize(config_.morris_copies);
  }
}

double LevelScheduler::position_estimate() const {
  if (config_.exact_position) return (double)exact_t_;
  double sum = 0;
  for (const auto& m : morris_) sum += std::ldexp(1.0, (int)m.level());
  return sum / (double)morris_.size() - 1.0;
}

LevelScheduler::Event LevelScheduler::advance(uint64_t ticks, std::mt19937_64& rng) {
  if (config_.exact_position)
    exact_t_ += ticks;
  else
    for (auto& m : morris_) m.advance(ticks, rng);
  Event ev;
  sync(ev);
  return ev;
}

void LevelScheduler::sync(Event& ev) {
  double est = position_estimate();
  // live j: s^j <= est < s^{j+2}. A level that was ever retired may not
  // come back, so candidates are restricted to currently-live or new ones.
  std::vector<unsigned> now;
  if (est >= 1.0) {
    long hi = (long)std::floor(std::log2(est) / (double)log2s_);
    for (long j = std::max<long>(0, hi - 1); j <= hi; ++j) {
      bool was_live = std::find(live_.begin(), live_.end(), (unsigned)j) != live_.end();
      if (was_live || j > highest_seen_) now.push_back((unsigned)j);
    }
  }
  for (unsigned j : live_)
    if (std::find(now.begin(), now.end(), j) == now.end()) ev.retired.push_back(j);
  for (unsigned j : now)
    if (std::find(live_.begin(), live_.end(), j) == live_.end()) {
      ev.spawned.push_back(j);
      highest_seen_ = std::max(highest_seen_, (long)j);
    }
  live_ = std::move(now);
}

uint64_t StrictL1Config::s() const {
  if (s_override) return s_override;
  unsigned logn = std::max<unsigned>(1, (unsigned)std::countr_zero(n));
  double v = c_lvl * alpha * alpha * (1.0 / delta) * (double)logn * logn * logn / (eps * eps);
  return std::max<uint64_t>(4, next_pow2(v));
}

StrictL1Estimator::StrictL1Estimator(StrictL1Config config)
    : config_(config),
      scheduler_(LevelSchedulerConfig{config.s(), config.morris_copies, config.exact_position,
                                      derive_seed(config.seed, 0x6d6f72ULL)}) {
  if (config_.n == 0 || (config_.n & (config_.n - 1)) != 0)
    throw std::invalid_argument("StrictL1Estimator: n must be a power of two");
}

void StrictL1Estimator::apply_events(const LevelScheduler::Event& ev, uint64_t pos) {
  for (unsigned j : ev.retired)
    levels_.erase(std::remove_if(levels_.begin(), levels_.end(),
                                 [j](const LevelCounters& l) { return l.j == j; }),
                  levels_.end());
  for (unsigned j : ev.spawned) levels_.push_back(LevelCounters{j, 0, 0, 0, pos});
}

uint64_t StrictL1Estimator::sample_chunk(LevelCounters& lvl, uint64_t chunk, double rate,
                                         std::mt19937_64& rng) {
  return consume_chunk(lvl.skip, chunk, rate, rng);
}

void StrictL1Estimator::update(const Update& u, std::mt19937_64& rng) {
  if (u.index >= config_.n) throw std::invalid_argument("StrictL1Estimator: index out of range");
  uint64_t mass = (uint64_t)std::llabs(u.delta);
  if (mass == 0) return;
  pos_ += mass;
  auto ev = scheduler_.advance(mass, rng);
  apply_events(ev, pos_);
  for (auto& lvl : levels_) {
    uint64_t hits = sample_chunk(lvl, mass, scheduler_.rate(lvl.j), rng);
    if (hits == 0) continue;
    if (u.delta > 0)
      lvl.c_plus += hits;
    else
      lvl.c_minus += hits;
  }
}

double StrictL1Estimator::estimate() const {
  if (levels_.empty()) throw std::runtime_error("StrictL1Estimator: no live level (empty stream?)");
  const LevelCounters* oldest = &levels_.front();
  for (const auto& lvl : levels_)
    if (lvl.j < oldest->j) oldest = &lvl;
  double scale = std::ldexp(1.0, (int)std::min<uint64_t>(62, (uint64_t)scheduler_.log2s() * oldest->j));
  return scale * ((double)oldest->c_plus - (double)oldest->c_minus);
}

uint64_t StrictL1Estimator::level_sample_mass(unsigned j) const {
  for (const auto& lvl : levels_)
    if (lvl.j == j) return lvl.c_plus + lvl.c_minus;
  return 0;
}

std::vector<StrictL1Estimator::LevelInfo> StrictL1Estimator::live_levels() const {
  std::vector<LevelInfo> out;
  out.reserve(levels_.size());
  for (const auto& lvl : levels_) out.push_back(LevelInfo{lvl.j, lvl.birth, lvl.c_plus, lvl.c_minus});
  return out;
}

unsigned GeneralL1Config::main_rows() const {
  if (r_main) return r_main;
  return (unsigned)std::ceil(8.0 / (eps * eps));
}

unsigned GeneralL1Config::main_k() const {
  if (k_main) return k_main;
  return std::max<unsigned>(4, (unsigned)std::ceil(std::log2(1.0 / eps)));
}

double GeneralL1Config::precision() const { return delta_prec > 0 ? delta_prec : eps / (double)m_max; }

uint64_t GeneralL1Config::s() const {
  if (s_override) return s_override;
  unsigned logn = std::max<unsigned>(1, (unsigned)std::countr_zero(n));
  double eps0 = eps * eps * eps / (alpha * (double)logn);
  // rate eps0^-3 log(n) / m via exponential intervals; huge at desk scale,
  // which just means the rows stay exact.
  double v = (1.0 / (eps0 * eps0 * eps0)) * (double)logn;
  return std::max<uint64_t>(4, next_pow2(v));
}

GeneralL1Estimator::GeneralL1Estimator(GeneralL1Config config) : config_(config) {
  if (config_.n == 0 || (config_.n & (config_.n - 1)) != 0)
    throw std::invalid_argument("GeneralL1Estimator: n must be a power of two");
  uint64_t s = config_.s();
  auto make_rows = [&](unsigned count, unsigned k, uint64_t tag, std::vector<Row>& out) {
    out.reserve(count);
    for (unsigned i = 0; i < count; ++i) {
      // per-row seeds derived independently; rows of A are seed-wise independent
      uint64_t row_seed = derive_seed(config_.seed, tag + i);
      Row row{KWiseHash(k, 2, derive_seed(row_seed, 1)),
              LevelScheduler(LevelSchedulerConfig{s, 1, false, derive_seed(row_seed, 2)}),
              {}};
      out.push_back(std::move(row));
    }
  };
  make_rows(config_.main_rows(), config_.main_k(), 0x100000, main_);
  make_rows(config_.median_rows(), config_.k_median, 0x200000, median_);
}

void GeneralL1Estimator::row_update(Row& row, uint64_t index, int64_t delta, std::mt19937_64& rng) {
  double entry = stable_from_field(row.entry_hash.eval_field(index), config_.precision()).value;
  // integer units of delta_prec
  double units_d = std::round(std::fabs(entry) / config_.precision());
  if (units_d > 4.5e15) units_d = 4.5e15;  // overflow guard; astronomically rare
  uint64_t units = (uint64_t)units_d * (uint64_t)std::llabs(delta);
  if (units == 0) return;
  int sign = ((delta > 0) == (entry > 0)) ? 1 : -1;
  if (entry == 0.0) return;

  auto ev = row.scheduler.advance(units, rng);
  for (unsigned j : ev.retired)
    row.levels.erase(std::remove_if(row.levels.begin(), row.levels.end(),
                                    [j](const Row::Level& l) { return l.j == j; }),
                     row.levels.end());
  for (unsigned j : ev.spawned) row.levels.push_back(Row::Level{j, 0, 0});
  for (auto& lvl : row.levels) {
    uint64_t hits = consume_chunk(lvl.skip, units, row.scheduler.rate(lvl.j), rng);
    if (hits) lvl.counter += (__int128)sign * (__int128)hits;
  }
}

void GeneralL1Estimator::update(const Update& u, std::mt19937_64& rng) {
  if (u.index >= config_.n) throw std::invalid_argument("GeneralL1Estimator: index out of range");
  if (u.delta == 0) return;
  any_update_ = true;
  for (auto& row : main_) row_update(row, u.index, u.delta, rng);
  for (auto& row : median_) row_update(row, u.index, u.delta, rng);
}

std::optional<double> GeneralL1Estimator::row_value(const Row& row) const {
  if (row.levels.empty()) return 0.0;
  const Row::Level* oldest = &row.levels.front();
  for (const auto& lvl : row.levels)
    if (lvl.j < oldest->j) oldest = &lvl;
  double scale =
      std::ldexp(1.0, (int)std::min<uint64_t>(62, (uint64_t)row.scheduler.log2s() * oldest->j));
  return scale * (double)oldest->counter * config_.precision();
}

std::optional<double> GeneralL1Estimator::estimate() const {
  if (!any_update_) return 0.0;
  std::vector<double> med_vals;
  med_vals.reserve(median_.size());
  for (const auto& row : median_) {
    auto v = row_value(row);
    if (!v) return std::nullopt;
    med_vals.push_back(*v);
  }
  double y_med = lower_median_abs(med_vals);
  if (y_med == 0.0) return std::nullopt;

  double acc = 0;
  for (const auto& row : main_) {
    auto v = row_value(row);
    if (!v) return std::nullopt;
    acc += std::cos(*v / y_med);
  }
  acc /= (double)main_.size();
  if (!(acc > 0.0)) return std::nullopt;  // FAIL: log argument left (0, 1]
  return y_med * (-std::log(acc));
}

}  // namespace deltasketch
