#include "deltasketch/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "deltasketch/hashing.hpp"

namespace deltasketch {

unsigned worker_threads() {
  unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("DELTASKETCH_THREADS")) {
    long v = std::strtol(env, nullptr, 10);
    if (v >= 1) hw = std::min<unsigned>(hw, (unsigned)v);
  }
  return hw;
}

void parallel_trials(size_t count, const std::function<void(size_t)>& fn) {
  unsigned threads = std::min<size_t>(worker_threads(), count);
  if (threads <= 1) {
    for (size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr first_error;
  std::mutex err_mu;
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&]() {
      while (true) {
        size_t i = next.fetch_add(1);
        if (i >= count) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_mu);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

json summarize(const std::vector<TrialOutcome>& outcomes) {
  json s;
  s["trials"] = outcomes.size();
  size_t passes = 0;
  unsigned max_bits = 0;
  uint64_t max_samples = 0;
  std::vector<double> errors;
  errors.reserve(outcomes.size());
  for (const auto& o : outcomes) {
    passes += o.pass;
    max_bits = std::max(max_bits, o.max_counter_bits);
    max_samples = std::max(max_samples, o.samples_stored);
    errors.push_back(o.error);
  }
  s["pass_fraction"] = outcomes.empty() ? 1.0 : (double)passes / (double)outcomes.size();
  s["max_counter_bits"] = max_bits;
  s["samples_stored"] = max_samples;
  if (!outcomes.empty()) {
    std::sort(errors.begin(), errors.end());
    double mean = 0;
    for (double e : errors) mean += e;
    s["mean_error"] = mean / (double)errors.size();
    s["p50_error"] = errors[errors.size() / 2];
    s["p95_error"] = errors[(size_t)((double)(errors.size() - 1) * 0.95)];
  } else {
    s["mean_error"] = 0.0;
    s["p50_error"] = 0.0;
    s["p95_error"] = 0.0;
  }
  return s;
}

json run_experiment(const json& spec, size_t trials, uint64_t seed, const std::string& report_path,
                    const std::function<TrialOutcome(size_t, uint64_t)>& fn, bool timing) {
  std::vector<TrialOutcome> outcomes(trials);
  parallel_trials(trials, [&](size_t i) {
    auto start = std::chrono::steady_clock::now();
    outcomes[i] = fn(i, derive_seed(seed, 0x747269616cULL + i));
    if (timing) {
      auto end = std::chrono::steady_clock::now();
      outcomes[i].wall_ms = std::chrono::duration<double, std::milli>(end - start).count();
    }
  });

  json summary = summarize(outcomes);
  if (!report_path.empty()) {
    std::ofstream out(report_path);
    if (!out) throw std::runtime_error("cannot open report file: " + report_path);
    json header;
    header["schema"] = "deltasketch-report-v1";
    header["spec"] = spec;
    header["seed"] = seed;
    out << header.dump() << "\n";
    for (size_t i = 0; i < outcomes.size(); ++i) {
      const auto& o = outcomes[i];
      json line = o.extra.is_object() ? o.extra : json::object();
      line["trial"] = i;
      line["pass"] = o.pass;
      line["truth"] = o.truth;
      line["estimate"] = o.estimate;
      line["error"] = o.error;
      line["max_counter_bits"] = o.max_counter_bits;
      line["samples_stored"] = o.samples_stored;
      if (timing) line["wall_ms"] = o.wall_ms;
      out << line.dump() << "\n";
    }
    json tail;
    tail["summary"] = summary;
    out << tail.dump() << "\n";
  }
  return summary;
}

json report_table_row(const json& header, const json& summary) {
  for (const char* key : {"spec"}) {
    if (!header.contains(key)) throw std::runtime_error("report schema: header missing " + std::string(key));
  }
  const json& spec = header["spec"];
  for (const char* key : {"algorithm", "alpha", "eps"}) {
    if (!spec.contains(key)) throw std::runtime_error("report schema: spec missing " + std::string(key));
  }
  for (const char* key : {"mean_error", "max_counter_bits", "samples_stored"}) {
    if (!summary.contains(key)) throw std::runtime_error("report schema: summary missing " + std::string(key));
  }
  json row;
  row["algorithm"] = spec["algorithm"];
  row["alpha"] = spec["alpha"];
  row["eps"] = spec["eps"];
  row["observed_error"] = summary["mean_error"];
  row["max_counter_bits"] = summary["max_counter_bits"];
  row["samples_stored"] = summary["samples_stored"];
  return row;
}

void emit_tradeoff_table(const std::vector<std::string>& report_paths, const std::string& out_path) {
  if (report_paths.empty()) throw std::invalid_argument("emit_tradeoff_table: need at least one report");
  std::ofstream out(out_path);
  if (!out) throw std::runtime_error("cannot open table file: " + out_path);
  out << "algorithm,alpha,eps,observed_error,max_counter_bits,samples_stored\n";
  for (const auto& path : report_paths) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open report: " + path);
    std::string line;
    json header, summary;
    bool have_header = false, have_summary = false;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      json j = json::parse(line);
      if (j.contains("schema")) {
        header = j;
        have_header = true;
      } else if (j.contains("summary")) {
        summary = j["summary"];
        have_summary = true;
      }
    }
    if (!have_header || !have_summary) throw std::runtime_error("report schema: incomplete file " + path);
    json row = report_table_row(header, summary);
    out << row["algorithm"].get<std::string>() << "," << row["alpha"].dump() << "," << row["eps"].dump()
        << "," << row["observed_error"].dump() << "," << row["max_counter_bits"].dump() << ","
        << row["samples_stored"].dump() << "\n";
  }
}

}  // namespace deltasketch
