#include "deltasketch/heavy_hitters.hpp"

#include <cmath>
#include <stdexcept>

namespace deltasketch {

CSSSConfig HeavyHitters::make_csss_config(const HHConfig& config) {
  CSSSConfig c;
  c.n = config.n;
  c.k = (uint64_t)std::ceil(32.0 / config.eps);
  c.eps = config.eps / 32.0;
  c.alpha = config.alpha;
  c.c_S = config.c_S;
  c.seed = derive_seed(config.seed, 0x686821ULL);
  return c;
}

HeavyHitters::HeavyHitters(HHConfig config) : config_(config), csss_(make_csss_config(config)) {
  if (!(config_.eps > 0.0 && config_.eps < 1.0)) throw std::invalid_argument("HeavyHitters: eps in (0,1)");
  if (config_.general_mode) {
    GeneralL1Config gc;
    gc.n = config_.n;
    gc.eps = 1.0 / 8.0;
    gc.alpha = config_.alpha;
    gc.seed = derive_seed(config_.seed, 0x686852ULL);
    norm_est_ = std::make_unique<GeneralL1Estimator>(gc);
  }
}

void HeavyHitters::update(const Update& u, std::mt19937_64& rng) {
  csss_.update(u, rng);
  running_sum_ += u.delta;
  if (norm_est_) norm_est_->update(u, rng);
}

double HeavyHitters::norm() const {
  if (!config_.general_mode) return (double)running_sum_;
  auto r = norm_est_->estimate();
  if (!r) throw std::runtime_error("HeavyHitters: general-mode norm estimator failed");
  return *r;
}

std::vector<uint64_t> HeavyHitters::query(double eps) const {
  double threshold = 3.0 * eps * norm() / 4.0;
  std::vector<uint64_t> out;
  for (uint64_t i = 0; i < config_.n; ++i)
    if (std::fabs(csss_.query(i)) >= threshold && threshold > 0) out.push_back(i);
  return out;
}

}  // namespace deltasketch
