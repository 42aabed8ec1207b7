#include "deltasketch/csss.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace deltasketch {

namespace {

// Lower median: index (d-1)/2 of the sorted values.
double lower_median(std::vector<double>& v) {
  size_t mid = (v.size() - 1) / 2;
  std::nth_element(v.begin(), v.begin() + (long)mid, v.end());
  return v[mid];
}

uint64_t binomial(uint64_t trials, double p, std::mt19937_64& rng) {
  if (trials == 0 || p <= 0.0) return 0;
  if (p >= 1.0) return trials;
  std::binomial_distribution<uint64_t> dist(trials, p);
  return dist(rng);
}

}  // namespace

unsigned CSSSConfig::log2n() const { return (unsigned)std::countr_zero(n); }

unsigned CSSSConfig::rows() const {
  return std::max<unsigned>(1, (unsigned)std::ceil(c_d * std::max<unsigned>(1, log2n())));
}

double CSSSConfig::T() const { return c_T * (4.0 / (eps * eps) + std::max<unsigned>(1, log2n())); }

uint64_t CSSSConfig::S() const {
  double t = T();
  double s = c_S * (alpha * alpha / (eps * eps)) * t * t * std::max<unsigned>(1, log2n());
  if (s < 1.0) return 1;
  if (s > 9e18) return (uint64_t)9e18;
  return (uint64_t)std::ceil(s);
}

void CSSSConfig::validate() const {
  if (n == 0 || (n & (n - 1)) != 0) throw std::invalid_argument("CSSSConfig: n must be a power of two");
  if (k < 1) throw std::invalid_argument("CSSSConfig: k must be >= 1");
  if (!(eps > 0.0 && eps < 1.0)) throw std::invalid_argument("CSSSConfig: eps must be in (0,1)");
  if (alpha < 1.0) throw std::invalid_argument("CSSSConfig: alpha must be >= 1");
}

CSSSTable::CSSSTable(CSSSConfig config) : config_(config) {
  config_.validate();
  cells_.assign(2 * (size_t)config_.rows() * config_.width(), 0);
  row_hash_.reserve(config_.rows());
  row_sign_.reserve(config_.rows());
  for (unsigned r = 0; r < config_.rows(); ++r) {
    row_hash_.emplace_back(4, config_.width(), derive_seed(config_.seed, 2 * r));
    row_sign_.emplace_back(4, 2, derive_seed(config_.seed, 2 * r + 1));
  }
  uint64_t s = config_.S();
  next_boundary_ = config_.sampling_enabled ? 2 * s + 1 : 0;
  saturation_ = (unsigned __int128)s * s * s;
}

void CSSSTable::halve(std::mt19937_64& rng) {
  for (auto& c : cells_) c = binomial(c, 0.5, rng);
  ++p_exp_;
}

void CSSSTable::add_sampled(unsigned row, uint64_t bucket, bool positive, uint64_t amount) {
  uint64_t& c = cells_[2 * (row * config_.width() + bucket) + (positive ? 0 : 1)];
  c += amount;
  peak_counter_ = std::max(peak_counter_, c);
  if ((unsigned __int128)c > saturation_) failed_ = true;
}

void CSSSTable::update(const Update& u, std::mt19937_64& rng) {
  if (failed_) throw std::runtime_error("CSSS: table is in the failed state");
  if (u.index >= config_.n) throw std::invalid_argument("CSSS: index out of range");
  if (u.delta == 0) return;

  uint64_t remaining = (uint64_t)std::llabs(u.delta);
  const bool positive_delta = u.delta > 0;
  while (remaining > 0) {
    if (next_boundary_ != 0 && t_ + 1 == next_boundary_) {
      halve(rng);
      // boundaries sit at t = 2^r * S + 1
      next_boundary_ = p_exp_ < 62 ? 2 * (next_boundary_ - 1) + 1 : 0;
    }
    uint64_t chunk = remaining;
    if (next_boundary_ != 0) chunk = std::min(chunk, next_boundary_ - 1 - t_);
    double rate = std::ldexp(1.0, -(int)p_exp_);
    for (unsigned r = 0; r < config_.rows(); ++r) {
      uint64_t sampled = binomial(chunk, rate, rng);
      if (sampled == 0) continue;
      bool positive_cell = positive_delta == (row_sign_[r].sign(u.index) > 0);
      add_sampled(r, row_hash_[r](u.index), positive_cell, sampled);
    }
    t_ += chunk;
    remaining -= chunk;
  }
}

double CSSSTable::row_bucket_value(unsigned row, uint64_t bucket) const {
  double scale = std::ldexp(1.0, (int)p_exp_);
  return scale * ((double)cell_plus(row, bucket) - (double)cell_minus(row, bucket));
}

double CSSSTable::query(uint64_t j) const {
  if (failed_) throw std::runtime_error("CSSS: table is in the failed state");
  if (j >= config_.n) throw std::invalid_argument("CSSS: index out of range");
  std::vector<double> ests(config_.rows());
  for (unsigned r = 0; r < config_.rows(); ++r)
    ests[r] = (double)row_sign_[r].sign(j) * row_bucket_value(r, row_hash_[r](j));
  return lower_median(ests);
}

std::vector<std::pair<uint64_t, double>> CSSSTable::topk(uint64_t k) const {
  std::vector<std::pair<uint64_t, double>> all;
  all.reserve(config_.n);
  for (uint64_t j = 0; j < config_.n; ++j) all.emplace_back(j, query(j));
  std::stable_sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    double ma = std::fabs(a.second), mb = std::fabs(b.second);
    if (ma != mb) return ma > mb;
    return a.first < b.first;
  });
  if (all.size() > k) all.resize(k);
  return all;
}

unsigned CSSSTable::max_counter_bits() const { return (unsigned)std::bit_width(peak_counter_); }

uint64_t CSSSTable::stored_sample_mass() const {
  uint64_t s = 0;
  for (uint64_t c : cells_) s += c;
  return s;
}

void CSSSTable::serialize(std::ostream& out) const {
  auto put64 = [&](uint64_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); };
  auto putd = [&](double v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); };
  put64(0x43535353u);  // "CSSS"
  put64(1);            // version
  put64(config_.n);
  put64(config_.k);
  putd(config_.eps);
  putd(config_.alpha);
  put64(config_.seed);
  putd(config_.c_d);
  putd(config_.c_T);
  putd(config_.c_S);
  put64(config_.sampling_enabled ? 1 : 0);
  put64(p_exp_);
  put64(t_);
  put64(next_boundary_);
  put64(peak_counter_);
  put64(failed_ ? 1 : 0);
  put64(cells_.size());
  for (uint64_t c : cells_) put64(c);
}

CSSSTable CSSSTable::deserialize(std::istream& in) {
  auto get64 = [&]() {
    uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    return v;
  };
  auto getd = [&]() {
    double v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    return v;
  };
  if (get64() != 0x43535353u) throw std::runtime_error("CSSS blob: bad magic");
  if (get64() != 1) throw std::runtime_error("CSSS blob: unsupported version");
  CSSSConfig cfg;
  cfg.n = get64();
  cfg.k = get64();
  cfg.eps = getd();
  cfg.alpha = getd();
  cfg.seed = get64();
  cfg.c_d = getd();
  cfg.c_T = getd();
  cfg.c_S = getd();
  cfg.sampling_enabled = get64() != 0;
  CSSSTable tbl(cfg);
  tbl.p_exp_ = (unsigned)get64();
  tbl.t_ = get64();
  tbl.next_boundary_ = get64();
  tbl.peak_counter_ = get64();
  tbl.failed_ = get64() != 0;
  uint64_t ncells = get64();
  if (ncells != tbl.cells_.size()) throw std::runtime_error("CSSS blob: cell count mismatch");
  for (auto& c : tbl.cells_) c = get64();
  if (!in) throw std::runtime_error("CSSS blob: truncated");
  return tbl;
}

PlainCSRow::PlainCSRow(uint64_t width, uint64_t seed)
    : hash_(2, width, derive_seed(seed, 0)), sign_(4, 2, derive_seed(seed, 1)), buckets_(width, 0) {}

PlainCSRow::PlainCSRow(KWiseHash h, KWiseHash g)
    : hash_(std::move(h)), sign_(std::move(g)), buckets_(hash_.range(), 0) {}

void PlainCSRow::update(uint64_t i, int64_t delta) { buckets_[hash_(i)] += sign_.sign(i) * delta; }

double PlainCSRow::l2() const {
  double s = 0;
  for (int64_t b : buckets_) s += (double)b * (double)b;
  return std::sqrt(s);
}

double estimate_tail_error(const CSSSTable& cs1, const CSSSTable& cs2, double l1) {
  if (cs1.failed() || cs2.failed()) throw std::runtime_error("estimate_tail_error: failed sketch");
  auto yhat = cs1.topk(cs1.config().k);

  // Fold -yhat into each row of cs2 at query time; the sketch is linear, so
  // this equals having fed the corrections through the structure.
  const auto& cfg = cs2.config();
  std::vector<double> row_l2(cfg.rows());
  std::vector<double> buckets(cfg.width());
  for (unsigned r = 0; r < cfg.rows(); ++r) {
    for (uint64_t b = 0; b < cfg.width(); ++b) buckets[b] = cs2.row_bucket_value(r, b);
    for (const auto& [j, v] : yhat) buckets[cs2.row_hash(r)(j)] -= (double)cs2.row_sign(r).sign(j) * v;
    double s = 0;
    for (double b : buckets) s += b * b;
    row_l2[r] = std::sqrt(s);
  }
  return 2.0 * lower_median(row_l2) + 5.0 * cs2.config().eps * l1;
}

}  // namespace deltasketch
