#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <vector>

#include "deltasketch/csss.hpp"
#include "deltasketch/l1_estimator.hpp"
#include "deltasketch/stream.hpp"

namespace deltasketch {

// L1 eps-heavy hitters on top of CSSS (k = 32/eps, accuracy eps/32).
// Strict mode tracks ||f||_1 exactly with a running counter; general mode
// gets a (1 ± 1/8) norm from the general-turnstile L1 estimator.
struct HHConfig {
  uint64_t n = 0;
  double eps = 0.1;
  double alpha = 4.0;
  bool general_mode = false;
  uint64_t seed = 0;
  double c_S = 1.0;  // forwarded to the CSSS sizing
};

class HeavyHitters {
 public:
  explicit HeavyHitters(HHConfig config);

  void update(const Update& u, std::mt19937_64& rng);

  // All i with |query_i| >= 3 eps R / 4. Contract: contains every
  // |f_i| >= eps ||f||_1 and nothing below (eps/2) ||f||_1.
  std::vector<uint64_t> query(double eps) const;
  std::vector<uint64_t> query() const { return query(config_.eps); }

  // R: exact running sum in strict mode, (1 ± 1/8) estimate in general mode.
  double norm() const;

  const HHConfig& config() const { return config_; }
  const CSSSTable& csss() const { return csss_; }

 private:
  static CSSSConfig make_csss_config(const HHConfig& config);

  HHConfig config_;
  CSSSTable csss_;
  int64_t running_sum_ = 0;
  std::unique_ptr<GeneralL1Estimator> norm_est_;  // general mode only
};

}  // namespace deltasketch
