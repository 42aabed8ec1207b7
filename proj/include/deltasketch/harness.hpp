#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace deltasketch {

using json = nlohmann::json;

// Worker pool size: hardware concurrency capped by DELTASKETCH_THREADS.
unsigned worker_threads();

// Runs fn(trial) for trial in [0, count) on a small pool; results are
// collected by the caller into pre-sized storage, so output order does not
// depend on scheduling.
void parallel_trials(size_t count, const std::function<void(size_t)>& fn);

struct TrialOutcome {
  bool pass = false;
  double truth = 0;
  double estimate = 0;
  double error = 0;
  unsigned max_counter_bits = 0;
  uint64_t samples_stored = 0;
  double wall_ms = 0;
  json extra;  // subcommand-specific fields
};

// Executes `trials` runs of `fn`, writes a JSON-lines report (header line,
// one line per trial, summary line) and returns the summary. Fully
// deterministic in (spec, seed) unless timing is enabled.
json run_experiment(const json& spec, size_t trials, uint64_t seed, const std::string& report_path,
                    const std::function<TrialOutcome(size_t trial, uint64_t trial_seed)>& fn,
                    bool timing = false);

json summarize(const std::vector<TrialOutcome>& outcomes);

// CSV rows (algorithm, alpha, eps, observed error, max counter bits,
// samples stored) from report files produced by run_experiment.
void emit_tradeoff_table(const std::vector<std::string>& report_paths, const std::string& out_path);
json report_table_row(const json& header, const json& summary);

}  // namespace deltasketch
