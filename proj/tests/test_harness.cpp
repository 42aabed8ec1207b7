#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "deltasketch/harness.hpp"
#include "deltasketch/hashing.hpp"
#include "deltasketch/stream.hpp"

using namespace deltasketch;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string tmp_path(const std::string& name) { return std::string("/tmp/ds_test_") + name; }

}  // namespace

TEST_CASE("zero trials still produce a valid summary") {
  json spec{{"algorithm", "noop"}, {"alpha", 1.0}, {"eps", 0.1}};
  auto summary = run_experiment(spec, 0, 1, tmp_path("empty.jsonl"),
                                [](size_t, uint64_t) { return TrialOutcome{}; });
  CHECK(summary["trials"] == 0);
  CHECK(summary["pass_fraction"] == 1.0);
  std::string content = slurp(tmp_path("empty.jsonl"));
  CHECK(content.find("summary") != std::string::npos);
}

TEST_CASE("identical spec and seed give byte-identical reports") {
  json spec{{"algorithm", "demo"}, {"alpha", 2.0}, {"eps", 0.25}};
  auto fn = [](size_t trial, uint64_t seed) {
    TrialOutcome o;
    std::mt19937_64 rng(seed);
    o.estimate = (double)(rng() % 1000);
    o.truth = (double)trial;
    o.error = std::fabs(o.estimate - o.truth);
    o.pass = o.error < 900;
    o.max_counter_bits = (unsigned)(rng() % 20);
    return o;
  };
  run_experiment(spec, 16, 42, tmp_path("a.jsonl"), fn);
  run_experiment(spec, 16, 42, tmp_path("b.jsonl"), fn);
  CHECK(slurp(tmp_path("a.jsonl")) == slurp(tmp_path("b.jsonl")));
  run_experiment(spec, 16, 43, tmp_path("c.jsonl"), fn);
  CHECK(slurp(tmp_path("a.jsonl")) != slurp(tmp_path("c.jsonl")));
}

TEST_CASE("tradeoff table: one report gives one row; schema errors throw") {
  json spec{{"algorithm", "demo"}, {"alpha", 4.0}, {"eps", 0.1}};
  run_experiment(spec, 3, 7, tmp_path("t.jsonl"), [](size_t, uint64_t) {
    TrialOutcome o;
    o.pass = true;
    o.max_counter_bits = 12;
    o.samples_stored = 99;
    return o;
  });
  emit_tradeoff_table({tmp_path("t.jsonl")}, tmp_path("t.csv"));
  std::string csv = slurp(tmp_path("t.csv"));
  CHECK(csv.find("algorithm,alpha,eps,observed_error,max_counter_bits,samples_stored") == 0);
  CHECK(csv.find("demo,4.0,0.1") != std::string::npos);

  json bad_header{{"schema", "deltasketch-report-v1"}, {"spec", json{{"algorithm", "x"}}}};
  CHECK_THROWS(report_table_row(bad_header, json{{"mean_error", 0.0}}));
}

TEST_CASE("worker pool respects the environment cap") {
  setenv("DELTASKETCH_THREADS", "1", 1);
  CHECK(worker_threads() == 1);
  unsetenv("DELTASKETCH_THREADS");
  CHECK(worker_threads() >= 1);
}

#ifdef DS_CLI_PATH
TEST_CASE("command-line round trip: gen, sketch, table") {
  std::string cli = DS_CLI_PATH;
  std::string stream = tmp_path("cli_stream.txt");
  std::string report = tmp_path("cli_hh.jsonl");
  std::string table = tmp_path("cli_table.csv");

  std::string gen = cli + " gen --out " + stream +
                    " --n 1024 --alpha 4 --length 20000 --shape single-heavy --seed 7 >/dev/null";
  REQUIRE(std::system(gen.c_str()) == 0);

  auto sf = read_stream_file(stream);
  CHECK(sf.config.n == 1024);
  CHECK(sf.updates.size() == 20000);

  std::string hh = cli + " hh --input " + stream +
                   " --eps 0.1 --alpha 4 --trials 3 --seed 9 --report " + report + " >/dev/null";
  REQUIRE(std::system(hh.c_str()) == 0);

  std::string tab = cli + " table " + report + " --out " + table + " >/dev/null";
  REQUIRE(std::system(tab.c_str()) == 0);
  std::string csv = slurp(table);
  CHECK(csv.find("hh,") != std::string::npos);

  // byte-determinism through the CLI as well
  std::string report2 = tmp_path("cli_hh2.jsonl");
  std::string hh2 = cli + " hh --input " + stream +
                    " --eps 0.1 --alpha 4 --trials 3 --seed 9 --report " + report2 + " >/dev/null";
  REQUIRE(std::system(hh2.c_str()) == 0);
  CHECK(slurp(report) == slurp(report2));
}
#endif
