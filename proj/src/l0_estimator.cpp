#include "deltasketch/l0_estimator.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace deltasketch {

namespace {

uint64_t next_pow2(double x) {
  if (x <= 1.0) return 1;
  if (x >= 9e17) return uint64_t(1) << 60;
  return std::bit_ceil((uint64_t)std::ceil(x));
}

unsigned log2_of(uint64_t n) { return (unsigned)std::countr_zero(n); }

double loglog2(uint64_t n) { return std::max(1.0, std::log2((double)std::max<unsigned>(2, log2_of(n)))); }

uint64_t cell_add(uint64_t cell, int64_t delta, uint64_t scale, uint64_t prime) {
  __int128 v = (__int128)cell + (__int128)delta * (__int128)scale;
  v %= (__int128)prime;
  if (v < 0) v += prime;
  return (uint64_t)v;
}

unsigned balls_k_ind(double eps_eff) {
  double li = std::log2(1.0 / eps_eff);
  return std::max<unsigned>(4, (unsigned)std::ceil(2.0 * li / std::max(1.0, std::log2(std::max(2.0, li)))));
}

}  // namespace

RoughF0Tracker::RoughF0Tracker(uint64_t n, unsigned kmv, uint64_t seed)
    : hash_(2, uint64_t(1) << 60, derive_seed(seed, 0x6b6d76ULL)), kmv_(kmv), log2n_(log2_of(n)) {}

void RoughF0Tracker::update(uint64_t index) {
  uint64_t v = hash_(index);
  if (smallest_.size() < kmv_) {
    if (smallest_.insert(v).second) refresh();
    return;
  }
  auto last = std::prev(smallest_.end());
  if (v >= *last) return;
  if (smallest_.insert(v).second) {
    smallest_.erase(std::prev(smallest_.end()));
    refresh();
  }
}

void RoughF0Tracker::refresh() {
  double raw;
  if (smallest_.size() < kmv_) {
    raw = (double)smallest_.size();
  } else {
    double kth = (double)*std::prev(smallest_.end());
    raw = ((double)kmv_ - 1.0) * std::ldexp(1.0, 60) / kth;
  }
  // scale by 2*sqrt(2): centers the estimate in the [F0, 8F0] window
  running_ = std::max(running_, 2.0 * std::sqrt(2.0) * raw);
}

double RoughF0Tracker::l0_bar() const {
  double floor_est = 8.0 * (double)std::max<unsigned>(1, log2n_) / loglog2(uint64_t(1) << log2n_);
  return std::max(running_, floor_est);
}

SmallF0Exact::SmallF0Exact(uint64_t, uint64_t c, uint64_t m_max_mag, uint64_t seed)
    : hash_(2, next_pow2(16.0 * (double)c * (double)c), derive_seed(seed, 0x736630ULL)), c_(c) {
  uint64_t P = 10000 * c * std::max<uint64_t>(1, log2_of(next_pow2((double)m_max_mag)));
  unsigned __int128 hi = (unsigned __int128)P * P * P;
  unsigned __int128 cap = (unsigned __int128)1 << 61;
  std::mt19937_64 rng = make_rng(seed, 0x736631ULL);
  prime_ = sample_prime(P, (uint64_t)(hi > cap ? cap : hi), rng).value;
}

void SmallF0Exact::update(const Update& u) {
  if (large_) return;
  uint64_t hid = hash_(u.index);
  auto it = counters_.find(hid);
  if (it == counters_.end()) {
    if (counters_.size() >= c_) {
      large_ = true;
      counters_.clear();
      return;
    }
    it = counters_.emplace(hid, 0).first;
  }
  it->second = cell_add(it->second, u.delta, 1, prime_);
}

std::optional<uint64_t> SmallF0Exact::query() const {
  if (large_) return std::nullopt;
  uint64_t nz = 0;
  for (const auto& [hid, v] : counters_) nz += v != 0;
  return nz;
}

SmallL0Branch::SmallL0Branch(uint64_t, double eps, uint64_t m_max_mag, uint64_t seed)
    : k_user_(next_pow2(1.0 / (eps * eps))),
      h2_(2, std::min(next_pow2((double)k_user_ * k_user_ * k_user_), uint64_t(1) << 50),
          derive_seed(seed, 1)),
      h3_(balls_k_ind(eps), 2 * k_user_, derive_seed(seed, 2)),
      h4_(2, 2 * k_user_, derive_seed(seed, 3)) {
  uint64_t D = 100 * k_user_ * std::max<uint64_t>(1, log2_of(next_pow2((double)m_max_mag)));
  unsigned __int128 hi = (unsigned __int128)D * D * D;
  unsigned __int128 cap = (unsigned __int128)1 << 61;
  std::mt19937_64 rng = make_rng(seed, 4);
  prime_ = sample_prime(D, (uint64_t)(hi > cap ? cap : hi), rng).value;
  std::uniform_int_distribution<uint64_t> ud(0, prime_ - 1);
  u_.resize(2 * k_user_);
  for (auto& x : u_) x = ud(rng);
  cells_.assign(2 * k_user_, 0);
}

void SmallL0Branch::update(const Update& u) {
  uint64_t id2 = h2_(u.index);
  uint64_t& cell = cells_[h3_(id2)];
  cell = cell_add(cell, u.delta, u_[h4_(id2)], prime_);
}

std::optional<double> SmallL0Branch::query() const {
  uint64_t kp = cells_.size();
  uint64_t T = 0;
  for (uint64_t c : cells_) T += c != 0;
  if (T == kp) return std::nullopt;
  double est = std::log1p(-(double)T / (double)kp) / std::log1p(-1.0 / (double)kp);
  if (est > (double)k_user_ / 16.0) return std::nullopt;
  return est;
}

ExactSmallL0::Shared::Shared(uint64_t, unsigned trials, uint64_t bucket_count, uint64_t m_max_mag,
                             uint64_t seed)
    : buckets(bucket_count) {
  for (unsigned t = 0; t < trials; ++t) hashes.emplace_back(2, bucket_count, derive_seed(seed, t));
  uint64_t lg = std::max<uint64_t>(2, log2_of(next_pow2((double)m_max_mag)));
  uint64_t P = std::max<uint64_t>(64, 16 * lg * (uint64_t)std::ceil(std::log2((double)lg)));
  std::mt19937_64 rng = make_rng(seed, 0x70726dULL);
  unsigned __int128 hi = (unsigned __int128)P * P * P;
  unsigned __int128 cap = (unsigned __int128)1 << 31;
  prime = sample_prime(P, (uint64_t)(hi > cap ? cap : hi), rng).value;
}

ExactSmallL0::ExactSmallL0(const Shared* shared) : shared_(shared) {
  counters_.assign(shared_->hashes.size(), std::vector<uint32_t>(shared_->buckets, 0));
}

void ExactSmallL0::update(uint64_t index, int64_t delta) {
  int64_t p = (int64_t)shared_->prime;
  int64_t d = ((delta % p) + p) % p;
  for (size_t t = 0; t < counters_.size(); ++t) {
    uint32_t& c = counters_[t][shared_->hashes[t](index)];
    c = (uint32_t)(((int64_t)c + d) % p);
  }
}

uint64_t ExactSmallL0::query() const {
  uint64_t best = 0;
  for (const auto& trial : counters_) {
    uint64_t nz = 0;
    for (uint32_t c : trial) nz += c != 0;
    best = std::max(best, nz);
  }
  return best;
}

ConstL0Estimator::ConstL0Estimator(uint64_t n, double alpha, uint64_t m_max_mag, uint64_t seed)
    : n_(n),
      log2n_(log2_of(n)),
      h_(2, n, derive_seed(seed, 0x636c30ULL)),
      half_width_(2.0 * std::log2(alpha / 0.01)),
      shared_(n, 4, uint64_t(1) << 15, m_max_mag, derive_seed(seed, 0x636c31ULL)) {}

void ConstL0Estimator::sync_window(double l0_bar) {
  // l0_bar is nondecreasing, so the window only slides up: a level dropped
  // below `lo` can never re-enter [lo, hi].
  double a = std::log2(std::max(1.0, l0_bar));
  long lo = std::max<long>(0, (long)std::ceil(a - half_width_));
  long hi = std::min<long>(log2n_, (long)std::floor(a + half_width_));
  for (auto it = levels_.begin(); it != levels_.end();) {
    if ((long)it->first < lo)
      it = levels_.erase(it);
    else
      ++it;
  }
  for (long j = lo; j <= hi; ++j)
    if (!levels_.count((unsigned)j)) levels_.emplace((unsigned)j, Level{ExactSmallL0(&shared_), t_});
}

void ConstL0Estimator::update(const Update& u, double l0_bar) {
  ++t_;
  sync_window(l0_bar);
  unsigned j = lsb_level(h_(u.index), log2n_);
  auto it = levels_.find(j);
  if (it != levels_.end()) it->second.sketch.update(u.index, u.delta);
}

double ConstL0Estimator::query(double l0_bar_final) const {
  double cap = std::log2(std::max(2.0, 2.0 * l0_bar_final));
  long best = -1;
  for (const auto& [j, lvl] : levels_) {
    if ((double)j < cap && lvl.sketch.query() > 8) best = std::max(best, (long)j);
  }
  if (best < 0) return 50.0;
  return (20000.0 / 99.0) * std::ldexp(1.0, (int)best);
}

L0Matrix::L0Matrix(Params params)
    : params_(params),
      log2n_(log2_of(params.n)),
      K_(next_pow2(1.0 / (effective_eps(params) * effective_eps(params)))),
      w_((unsigned)std::ceil(2.0 * std::log2(4.0 * params.alpha / params.eps_user))),
      h1_(2, params.n, derive_seed(params.seed, 1)),
      h2_(2, std::min(next_pow2((double)K_ * K_ * K_), uint64_t(1) << 50), derive_seed(params.seed, 2)),
      h3_(balls_k_ind(effective_eps(params)), K_, derive_seed(params.seed, 3)),
      h4_(2, K_, derive_seed(params.seed, 4)) {
  uint64_t D = 100 * K_ * std::max<uint64_t>(1, log2_of(next_pow2((double)params.m_max_mag)));
  unsigned __int128 hi = (unsigned __int128)D * D * D;
  unsigned __int128 cap = (unsigned __int128)1 << 61;
  std::mt19937_64 rng = make_rng(params.seed, 5);
  prime_ = sample_prime(D, (uint64_t)(hi > cap ? cap : hi), rng).value;
  std::uniform_int_distribution<uint64_t> ud(0, prime_ - 1);
  u_.resize(K_);
  for (auto& x : u_) x = ud(rng);
  rows_.resize(log2n_ + 1);
  births_.resize(log2n_ + 1);

  // permanent top rows: catch queries anchored above the moving window
  high_band_ = log2n_ >= 1 ? log2n_ - 1 : 0;
  for (unsigned r = high_band_; r <= log2n_; ++r) {
    rows_[r].assign(K_, 0);
    births_[r] = 0;
  }
  double floor_bar = 8.0 * (double)std::max<unsigned>(1, log2n_) / loglog2(params.n);
  sync_window(floor_bar);
}

double L0Matrix::effective_eps(const Params& p) {
  return p.eps_internal > 0 ? p.eps_internal : p.eps_user / 32.0;
}

double L0Matrix::anchor(double l0_bar) const { return std::log2(16.0 * std::max(1.0, l0_bar) / (double)K_); }

void L0Matrix::sync_window(double l0_bar) {
  double a = anchor(l0_bar);
  long lo = std::max<long>(0, (long)std::ceil(a - (double)w_));
  long hi = std::min<long>(log2n_, (long)std::floor(a + (double)w_));
  // drop rows that fell below the window (high band is permanent)
  for (long r = low_row_; r < lo && r <= (long)log2n_; ++r) {
    if (r >= 0 && r < (long)high_band_) {
      rows_[r].clear();
      rows_[r].shrink_to_fit();
    }
  }
  for (long r = std::max(lo, high_row_ + 1); r <= hi; ++r) {
    if (rows_[r].empty()) {
      rows_[r].assign(K_, 0);
      births_[r] = t_;
    }
  }
  low_row_ = std::max(low_row_, lo);
  high_row_ = std::max(high_row_, hi);
  peak_rows_ = std::max(peak_rows_, retained_rows());
}

void L0Matrix::update(const Update& u, double l0_bar) {
  ++t_;
  sync_window(l0_bar);
  unsigned row = lsb_level(h1_(u.index), log2n_);
  if (rows_[row].empty()) return;  // absent row: the update is dropped by design
  uint64_t id2 = h2_(u.index);
  uint64_t& cell = rows_[row][h3_(id2)];
  cell = cell_add(cell, u.delta, u_[h4_(id2)], prime_);
}

uint64_t L0Matrix::nonzero_cells(unsigned row) const {
  uint64_t T = 0;
  for (uint64_t c : rows_[row]) T += c != 0;
  return T;
}

bool L0Matrix::row_retained(unsigned row) const { return row <= log2n_ && !rows_[row].empty(); }

std::optional<uint64_t> L0Matrix::row_birth(unsigned row) const { return births_[row]; }

unsigned L0Matrix::retained_rows() const {
  unsigned c = 0;
  for (const auto& r : rows_) c += !r.empty();
  return c;
}

double L0Matrix::estimate(double R) const {
  long i_star = (long)std::llround(std::log2(std::max(1.0, 16.0 * R / (double)K_)));
  i_star = std::clamp<long>(i_star, 0, log2n_);
  if (rows_[i_star].empty())
    throw std::runtime_error("L0Matrix: row i* is not retained (tracker contract violated)");
  uint64_t T = nonzero_cells((unsigned)i_star);
  if (T == K_) throw std::runtime_error("L0Matrix: row i* saturated (T = K)");
  // 32R/K evaluated as 2^(i*+1), its exact value under i* = log2(16R/K)
  double scale = std::ldexp(1.0, (int)i_star + 1);
  return scale * std::log1p(-(double)T / (double)K_) / std::log1p(-1.0 / (double)K_);
}

uint64_t L0Config::small_f0_threshold() const {
  unsigned logn = std::max<unsigned>(1, log2_of(n));
  return (uint64_t)(8.0 * (double)logn / loglog2(n));
}

void L0Config::validate() const {
  if (n == 0 || (n & (n - 1)) != 0) throw std::invalid_argument("L0Config: n must be a power of two");
  if (!(eps > 0.0 && eps < 1.0)) throw std::invalid_argument("L0Config: eps in (0,1)");
  if (alpha < 1.0) throw std::invalid_argument("L0Config: alpha >= 1");
  if (copies < 1) throw std::invalid_argument("L0Config: copies >= 1");
}

L0Estimator::L0Estimator(L0Config config) : config_(config) {
  config_.validate();
  copies_.reserve(config_.copies);
  for (unsigned c = 0; c < config_.copies; ++c) {
    uint64_t cs = derive_seed(config_.seed, 0x6c30 * 1000 + c);
    L0Matrix::Params mp;
    mp.n = config_.n;
    mp.eps_user = config_.eps;
    mp.eps_internal = config_.eps / config_.c_rescale;
    mp.alpha = config_.alpha;
    mp.m_max_mag = config_.m_max_mag;
    mp.seed = derive_seed(cs, 5);
    copies_.push_back(Copy{
        RoughF0Tracker(config_.n, config_.kmv, derive_seed(cs, 1)),
        SmallF0Exact(config_.n, config_.small_f0_threshold(), config_.m_max_mag, derive_seed(cs, 2)),
        SmallL0Branch(config_.n, config_.eps, config_.m_max_mag, derive_seed(cs, 3)),
        ConstL0Estimator(config_.n, config_.alpha, config_.m_max_mag, derive_seed(cs, 4)),
        L0Matrix(mp)});
  }
}

void L0Estimator::update(const Update& u) {
  if (u.index >= config_.n) throw std::invalid_argument("L0Estimator: index out of range");
  for (auto& c : copies_) {
    c.tracker.update(u.index);
    double bar = c.tracker.l0_bar();
    c.small_f0.update(u);
    c.small_l0.update(u);
    c.const_l0.update(u, bar);
    c.matrix.update(u, bar);
  }
}

std::optional<double> L0Estimator::copy_estimate(const Copy& c) const {
  auto exact = c.small_f0.query();
  if (exact) return (double)*exact;
  auto small = c.small_l0.query();
  if (small) return *small;
  double R = c.const_l0.query(c.tracker.l0_bar());
  try {
    return c.matrix.estimate(R);
  } catch (const std::runtime_error&) {
    return std::nullopt;
  }
}

double L0Estimator::estimate() const {
  std::vector<double> vals;
  for (const auto& c : copies_) {
    auto v = copy_estimate(c);
    if (v) vals.push_back(*v);
  }
  if (vals.empty()) throw std::runtime_error("L0Estimator: every copy failed");
  size_t mid = (vals.size() - 1) / 2;
  std::nth_element(vals.begin(), vals.begin() + (long)mid, vals.end());
  return vals[mid];
}

}  // namespace deltasketch
