#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <vector>

#include "deltasketch/csss.hpp"
#include "deltasketch/l1_estimator.hpp"
#include "deltasketch/stream.hpp"

namespace deltasketch {

// Precision-sampling L1 sampler for strict-turnstile streams with the
// strong alpha-property. Each item is scaled by 1/t_i with t_i = j/Q drawn
// k-wise independently (Q = n^3); an item is reported when its scaled
// weight clears r/eps and the tail-error estimate is small enough.
struct L1SamplerConfig {
  uint64_t n = 0;
  double eps = 0.25;
  double alpha = 4.0;  // CSSS sizing only; the guarantee needs strong alpha
  uint64_t seed = 0;
  double c_prop = 0.25;  // calibrated constant of the heavy-max threshold
  unsigned k_csss = 0;   // 0 = max(4, ceil(log2(1/eps)))
  bool general_mode = false;  // approximate r, q with the general estimator
  uint64_t m_max = 1 << 20;

  unsigned k() const;
  double csss_eps() const;  // eps^3 / log2^2(n)
  uint64_t q_denom() const; // Q = n^3
  void validate() const;
};

struct L1Sample {
  uint64_t index;
  double estimate;
};

class L1SamplerInstance {
 public:
  L1SamplerInstance(L1SamplerConfig config, uint64_t instance_seed);

  void update(const Update& u, std::mt19937_64& rng);
  // nullopt = FAIL.
  std::optional<L1Sample> query() const;

  // Scaling factor t_i = j_i / Q and the integer unit weight round(Q / j_i)
  // actually fed to the sketches.
  double t_of(uint64_t i) const;
  uint64_t weight_of(uint64_t i) const;

  int64_t r() const { return r_; }          // running sum of deltas (= ||f||_1 strict)
  __int128 q() const { return q_; }         // exact ||z||_1 of the discretized stream
  const L1SamplerConfig& config() const { return config_; }

 private:
  std::pair<double, double> norms() const;  // (r, q) exact or estimated

  L1SamplerConfig config_;
  KWiseHash scaler_;
  CSSSTable csss_;
  CSSSTable err_;
  int64_t r_ = 0;
  __int128 q_ = 0;
  uint64_t t_count_ = 0;
  std::unique_ptr<GeneralL1Estimator> r_est_;  // general mode
  std::unique_ptr<GeneralL1Estimator> q_est_;
};

// ~ c (1/eps) log(1/delta) independent instances; first non-FAIL wins.
class L1Sampler {
 public:
  L1Sampler(L1SamplerConfig config, double delta, uint64_t seed);

  void update(const Update& u, std::mt19937_64& rng);
  std::optional<L1Sample> query() const;
  size_t instances() const { return instances_.size(); }

 private:
  std::vector<L1SamplerInstance> instances_;
};

}  // namespace deltasketch
