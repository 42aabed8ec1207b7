#pragma once

#include <algorithm>
#include <random>
#include <vector>

#include "deltasketch/stream.hpp"

namespace ds_test {

using deltasketch::Update;

// Strict stream with prescribed final weights and alpha-driven churn: each
// item i receives weights[i] + extra[i] insertions and extra[i] deletions,
// so the final frequency equals weights[i] exactly and the realized alpha
// is close to (but never above) the requested value.
inline std::vector<Update> planted_stream(const std::vector<int64_t>& weights, double alpha,
                                          uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Update> inserts, deletes;
  for (uint64_t i = 0; i < weights.size(); ++i) {
    int64_t w = weights[i];
    if (w == 0) continue;
    int64_t extra = (int64_t)std::floor((alpha - 1.0) / 2.0 * (double)w);
    for (int64_t r = 0; r < w + extra; ++r) inserts.push_back(Update{i, +1});
    for (int64_t r = 0; r < extra; ++r) deletes.push_back(Update{i, -1});
  }
  std::shuffle(inserts.begin(), inserts.end(), rng);
  std::shuffle(deletes.begin(), deletes.end(), rng);
  std::vector<Update> out = std::move(inserts);
  out.insert(out.end(), deletes.begin(), deletes.end());
  return out;
}

}  // namespace ds_test
