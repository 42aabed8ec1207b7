#include "deltasketch/l1_sampler.hpp"

#include <bit>
#include <cmath>
#include <stdexcept>

namespace deltasketch {

unsigned L1SamplerConfig::k() const {
  if (k_csss) return k_csss;
  return std::max<unsigned>(4, (unsigned)std::ceil(std::log2(1.0 / eps)));
}

double L1SamplerConfig::csss_eps() const {
  double logn = std::max<unsigned>(1, (unsigned)std::countr_zero(n));
  return eps * eps * eps / (logn * logn);
}

uint64_t L1SamplerConfig::q_denom() const { return n * n * n; }

void L1SamplerConfig::validate() const {
  if (n == 0 || (n & (n - 1)) != 0) throw std::invalid_argument("L1SamplerConfig: n must be a power of two");
  if (n > (uint64_t(1) << 20)) throw std::invalid_argument("L1SamplerConfig: n too large for Q = n^3");
  if (!(eps > 0.0 && eps < 1.0)) throw std::invalid_argument("L1SamplerConfig: eps in (0,1)");
}

namespace {

CSSSConfig sampler_csss_config(const L1SamplerConfig& cfg, uint64_t seed) {
  CSSSConfig c;
  c.n = cfg.n;
  c.k = cfg.k();
  c.eps = cfg.csss_eps();
  c.alpha = cfg.alpha;
  c.seed = seed;
  return c;
}

}  // namespace

L1SamplerInstance::L1SamplerInstance(L1SamplerConfig config, uint64_t instance_seed)
    : config_(config),
      scaler_(std::max<unsigned>(4, (unsigned)std::ceil(std::log2(1.0 / config.eps)) + 2), 2,
              derive_seed(instance_seed, 0x7363616cULL)),
      csss_(sampler_csss_config(config, derive_seed(instance_seed, 1))),
      err_(sampler_csss_config(config, derive_seed(instance_seed, 2))) {
  config_.validate();
  if (config_.general_mode) {
    GeneralL1Config gc;
    gc.n = config_.n;
    gc.eps = 1.0 / 8.0;
    gc.alpha = config_.alpha;
    gc.m_max = config_.m_max;
    gc.seed = derive_seed(instance_seed, 3);
    r_est_ = std::make_unique<GeneralL1Estimator>(gc);
    gc.seed = derive_seed(instance_seed, 4);
    q_est_ = std::make_unique<GeneralL1Estimator>(gc);
  }
}

double L1SamplerInstance::t_of(uint64_t i) const {
  uint64_t Q = config_.q_denom();
  uint64_t j = 1 + scaler_.eval_field(i) % Q;
  return (double)j / (double)Q;
}

uint64_t L1SamplerInstance::weight_of(uint64_t i) const {
  uint64_t Q = config_.q_denom();
  uint64_t j = 1 + scaler_.eval_field(i) % Q;
  // fixed-point reciprocal: the scaled stream actually fed downstream is
  // z_i = f_i * round(Q/j), never less than f_i
  return (uint64_t)std::llround((double)Q / (double)j);
}

void L1SamplerInstance::update(const Update& u, std::mt19937_64& rng) {
  if (u.index >= config_.n) throw std::invalid_argument("L1Sampler: index out of range");
  uint64_t w = weight_of(u.index);
  int64_t scaled = u.delta * (int64_t)w;
  Update zu{u.index, scaled};
  csss_.update(zu, rng);
  err_.update(zu, rng);
  r_ += u.delta;
  q_ += (__int128)u.delta * (__int128)w;
  ++t_count_;
  if (r_est_) r_est_->update(u, rng);
  if (q_est_) q_est_->update(zu, rng);
}

std::pair<double, double> L1SamplerInstance::norms() const {
  if (!config_.general_mode) return {(double)r_, (double)q_};
  auto r = r_est_->estimate();
  auto q = q_est_->estimate();
  if (!r || !q) throw std::runtime_error("L1Sampler: general-mode norm estimation failed");
  return {*r, *q};
}

std::optional<L1Sample> L1SamplerInstance::query() const {
  if (t_count_ == 0) return std::nullopt;  // empty stream always FAILs
  auto [r, q] = norms();

  double best = -1.0;
  uint64_t best_i = 0;
  for (uint64_t i = 0; i < config_.n; ++i) {
    double y = std::fabs(csss_.query(i));
    if (y > best) {
      best = y;
      best_i = i;
    }
  }

  double sqrt_k = std::sqrt((double)config_.k());
  double eps_prime = config_.csss_eps();
  double v = estimate_tail_error(csss_, err_, q);
  if (v > sqrt_k * r + 45.0 * sqrt_k * eps_prime * q) return std::nullopt;

  double logn = std::max<unsigned>(1, (unsigned)std::countr_zero(config_.n));
  double heavy_cut = (config_.c_prop / 2.0) * (config_.eps * config_.eps / (logn * logn)) * q;
  double threshold = std::max(r / config_.eps, heavy_cut);
  if (best < threshold) return std::nullopt;

  double signed_est = csss_.query(best_i);
  return L1Sample{best_i, t_of(best_i) * signed_est};
}

L1Sampler::L1Sampler(L1SamplerConfig config, double delta, uint64_t seed) {
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("L1Sampler: delta in (0,1)");
  size_t count = (size_t)std::ceil(2.0 * (1.0 / config.eps) * std::log(1.0 / delta));
  count = std::max<size_t>(count, 1);
  instances_.reserve(count);
  for (size_t i = 0; i < count; ++i)
    instances_.emplace_back(config, derive_seed(seed, 0xa11ce + i));
}

void L1Sampler::update(const Update& u, std::mt19937_64& rng) {
  for (auto& inst : instances_) inst.update(u, rng);
}

std::optional<L1Sample> L1Sampler::query() const {
  for (const auto& inst : instances_) {
    auto s = inst.query();
    if (s) return s;
  }
  return std::nullopt;
}

}  // namespace deltasketch
