// deltasketch: stream generation, sketch experiments against the exact
// oracle, and report/table emission.

#include <cmath>
#include <fstream>
#include <iostream>
#include <set>

#include <CLI11.hpp>

#include "deltasketch/csss.hpp"
#include "deltasketch/harness.hpp"
#include "deltasketch/hashing.hpp"
#include "deltasketch/heavy_hitters.hpp"
#include "deltasketch/inner_product.hpp"
#include "deltasketch/l0_estimator.hpp"
#include "deltasketch/l1_estimator.hpp"
#include "deltasketch/l1_sampler.hpp"
#include "deltasketch/stream.hpp"
#include "deltasketch/support_sampler.hpp"

namespace ds = deltasketch;
using ds::json;

namespace {

struct CommonOpts {
  uint64_t seed = 1;
  std::string report;
  size_t trials = 1;
  bool timing = false;
};

void add_common(CLI::App* cmd, CommonOpts& c) {
  cmd->add_option("--seed", c.seed, "master seed; every random draw derives from it");
  cmd->add_option("--report", c.report, "JSON-lines report path");
  cmd->add_option("--trials", c.trials, "independent sketch trials");
  cmd->add_flag("--timing", c.timing, "include wall times in the report (breaks byte determinism)");
}

ds::StreamFile load_stream(const std::string& path) { return ds::read_stream_file(path); }

int cmd_gen(const std::string& out, uint64_t n, const std::string& kind, double alpha, int p,
            uint64_t length, const std::string& shape, uint64_t seed) {
  ds::GenSpec spec;
  spec.config.n = n;
  spec.config.kind = ds::stream_kind_from_string(kind);
  spec.config.m_max = length;
  spec.config.max_update = 1;
  spec.target_alpha = alpha;
  spec.p = p;
  spec.length = length;
  spec.shape = ds::stream_shape_from_string(shape);
  spec.seed = seed;
  auto g = ds::generate_stream(spec);
  std::ofstream f(out);
  if (!f) throw std::runtime_error("cannot open " + out);
  ds::write_stream(f, spec.config, g.updates);
  f << "# realized_alpha=" << g.realized_alpha << "\n";
  std::cout << json{{"updates", g.updates.size()}, {"realized_alpha", g.realized_alpha}}.dump()
            << std::endl;
  return 0;
}

int cmd_hh(const std::string& input, double eps, const std::string& mode, double alpha,
           const CommonOpts& c) {
  auto sf = load_stream(input);
  ds::ExactState oracle(sf.config);
  oracle.apply(sf.updates);
  double l1 = (double)oracle.l1_norm();

  std::set<uint64_t> heavy, forbidden;
  for (uint64_t i = 0; i < sf.config.n; ++i) {
    double w = std::fabs((double)oracle.frequency(i));
    if (w >= eps * l1 && l1 > 0) heavy.insert(i);
    if (w < eps / 2.0 * l1) forbidden.insert(i);
  }

  json spec{{"algorithm", "hh"}, {"eps", eps},   {"alpha", alpha},
            {"mode", mode},      {"input", input}, {"n", sf.config.n}};
  json summary = ds::run_experiment(
      spec, c.trials, c.seed, c.report,
      [&](size_t, uint64_t trial_seed) {
        ds::HHConfig hc;
        hc.n = sf.config.n;
        hc.eps = eps;
        hc.alpha = alpha;
        hc.general_mode = mode == "general";
        hc.seed = trial_seed;
        ds::HeavyHitters hh(hc);
        auto rng = ds::make_rng(trial_seed, 0xf00d);
        for (const auto& u : sf.updates) hh.update(u, rng);
        auto got = hh.query();
        std::set<uint64_t> got_set(got.begin(), got.end());
        size_t missing = 0, bad = 0;
        for (uint64_t i : heavy) missing += !got_set.count(i);
        for (uint64_t i : got_set) bad += forbidden.count(i);
        ds::TrialOutcome o;
        o.pass = missing == 0 && bad == 0;
        o.truth = (double)heavy.size();
        o.estimate = (double)got_set.size();
        o.error = (double)(missing + bad);
        o.max_counter_bits = hh.csss().max_counter_bits();
        o.samples_stored = hh.csss().stored_sample_mass();
        o.extra = json{{"missing", missing}, {"false_positives", bad}};
        return o;
      },
      c.timing);
  std::cout << summary.dump() << std::endl;
  return summary["pass_fraction"].get<double>() == 1.0 ? 0 : 1;
}

int cmd_ip(const std::string& input_f, const std::string& input_g, double eps, double alpha, uint64_t s,
           const CommonOpts& c) {
  auto ff = load_stream(input_f);
  auto gf = load_stream(input_g);
  if (ff.config.n != gf.config.n) throw std::runtime_error("ip: streams must share the universe size");
  ds::ExactState of(ff.config), og(gf.config);
  of.apply(ff.updates);
  og.apply(gf.updates);
  double truth = 0;
  for (uint64_t i = 0; i < ff.config.n; ++i) truth += (double)of.frequency(i) * (double)og.frequency(i);
  double bound = eps * (double)of.l1_norm() * (double)og.l1_norm();

  json spec{{"algorithm", "ip"}, {"eps", eps}, {"alpha", alpha},
            {"input_f", input_f}, {"input_g", input_g}, {"n", ff.config.n}};
  json summary = ds::run_experiment(
      spec, c.trials, c.seed, c.report,
      [&](size_t, uint64_t trial_seed) {
        ds::IPConfig ic;
        ic.n = ff.config.n;
        ic.eps = eps;
        ic.alpha = alpha;
        ic.seed = trial_seed;
        ic.s_override = s;
        ds::IPSharedSeed shared(ic);
        ds::IPSketch skf(shared), skg(shared);
        auto rngf = ds::make_rng(trial_seed, 1), rngg = ds::make_rng(trial_seed, 2);
        for (const auto& u : ff.updates) skf.update(u, rngf);
        for (const auto& u : gf.updates) skg.update(u, rngg);
        double est = ds::ip_estimate(skf, skg, shared);
        ds::TrialOutcome o;
        o.truth = truth;
        o.estimate = est;
        o.error = std::fabs(est - truth);
        o.pass = o.error <= bound;
        o.samples_stored = skf.stored_samples() + skg.stored_samples();
        return o;
      },
      c.timing);
  std::cout << summary.dump() << std::endl;
  return 0;
}

int cmd_l1sample(const std::string& input, double eps, double delta, bool general, bool calibrate,
                 const CommonOpts& c) {
  auto sf = load_stream(input);
  ds::ExactState oracle(sf.config);
  oracle.apply(sf.updates);
  double l1 = (double)oracle.l1_norm();

  if (calibrate) {
    // Monte Carlo for c_prop: the empirical lower envelope of
    // max_i |z_i| * log2^2(n) / (eps^2 ||z||_1) over scaler draws.
    double logn = std::max(1.0, std::log2((double)sf.config.n));
    std::vector<double> ratios(c.trials ? c.trials : 100);
    ds::parallel_trials(ratios.size(), [&](size_t t) {
      ds::L1SamplerConfig lc;
      lc.n = sf.config.n;
      lc.eps = eps;
      ds::L1SamplerInstance inst(lc, ds::derive_seed(c.seed, 900 + t));
      double zmax = 0, znorm = 0;
      for (uint64_t i = 0; i < sf.config.n; ++i) {
        double z = std::fabs((double)oracle.frequency(i)) * (double)inst.weight_of(i);
        zmax = std::max(zmax, z);
        znorm += z;
      }
      ratios[t] = znorm > 0 ? zmax * logn * logn / (eps * eps * znorm) : 0.0;
    });
    std::sort(ratios.begin(), ratios.end());
    double p05 = ratios[(size_t)((double)(ratios.size() - 1) * 0.05)];
    std::cout << json{{"suggested_c_prop", p05}, {"trials", ratios.size()}}.dump() << std::endl;
    return 0;
  }

  json spec{{"algorithm", "l1sample"}, {"eps", eps}, {"delta", delta},
            {"alpha", 0},              {"input", input}, {"general", general}};
  json summary = ds::run_experiment(
      spec, c.trials, c.seed, c.report,
      [&](size_t, uint64_t trial_seed) {
        ds::L1SamplerConfig lc;
        lc.n = sf.config.n;
        lc.eps = eps;
        lc.general_mode = general;
        ds::L1Sampler sampler(lc, delta, trial_seed);
        auto rng = ds::make_rng(trial_seed, 0xabc);
        for (const auto& u : sf.updates) sampler.update(u, rng);
        auto s = sampler.query();
        ds::TrialOutcome o;
        if (!s) {
          o.pass = false;
          o.extra = json{{"outcome", "FAIL"}};
          return o;
        }
        double truth = (double)oracle.frequency(s->index);
        double rel = truth != 0 ? std::fabs(s->estimate - truth) / std::fabs(truth) : 1.0;
        o.pass = rel <= 2 * eps;
        o.truth = truth;
        o.estimate = s->estimate;
        o.error = rel;
        o.extra = json{{"outcome", "ok"}, {"index", s->index}};
        return o;
      },
      c.timing);
  std::cout << summary.dump() << std::endl;
  return 0;
}

int cmd_l1est(const std::string& input, const std::string& mode, double eps, double delta, double alpha,
              uint64_t s, const CommonOpts& c) {
  auto sf = load_stream(input);
  ds::ExactState oracle(sf.config);
  oracle.apply(sf.updates);
  double truth = (double)oracle.l1_norm();
  double tol = (mode == "general" ? 2 * eps : eps) * truth;

  json spec{{"algorithm", "l1est"}, {"eps", eps},   {"delta", delta},
            {"alpha", alpha},       {"mode", mode}, {"input", input}};
  json summary = ds::run_experiment(
      spec, c.trials, c.seed, c.report,
      [&](size_t, uint64_t trial_seed) {
        ds::TrialOutcome o;
        auto rng = ds::make_rng(trial_seed, 0x11e57);
        if (mode == "strict") {
          ds::StrictL1Config scfg;
          scfg.n = sf.config.n;
          scfg.eps = eps;
          scfg.delta = delta;
          scfg.alpha = alpha;
          scfg.seed = trial_seed;
          scfg.s_override = s;
          ds::StrictL1Estimator est(scfg);
          for (const auto& u : sf.updates) est.update(u, rng);
          o.estimate = est.estimate();
        } else {
          ds::GeneralL1Config gcfg;
          gcfg.n = sf.config.n;
          gcfg.eps = eps;
          gcfg.alpha = alpha;
          gcfg.m_max = std::max<uint64_t>(1, oracle.update_mass());
          gcfg.seed = trial_seed;
          ds::GeneralL1Estimator est(gcfg);
          for (const auto& u : sf.updates) est.update(u, rng);
          auto v = est.estimate();
          if (!v) {
            o.pass = false;
            o.extra = json{{"outcome", "FAIL"}};
            return o;
          }
          o.estimate = *v;
        }
        o.truth = truth;
        o.error = std::fabs(o.estimate - truth);
        o.pass = o.error <= tol;
        return o;
      },
      c.timing);
  std::cout << summary.dump() << std::endl;
  return 0;
}

int cmd_l0est(const std::string& input, double eps, double alpha, const CommonOpts& c) {
  auto sf = load_stream(input);
  ds::ExactState oracle(sf.config);
  oracle.apply(sf.updates);
  double truth = (double)oracle.l0_norm();

  json spec{{"algorithm", "l0est"}, {"eps", eps}, {"alpha", alpha}, {"input", input}};
  json summary = ds::run_experiment(
      spec, c.trials, c.seed, c.report,
      [&](size_t, uint64_t trial_seed) {
        ds::L0Config lc;
        lc.n = sf.config.n;
        lc.eps = eps;
        lc.alpha = alpha;
        lc.seed = trial_seed;
        ds::L0Estimator est(lc);
        for (const auto& u : sf.updates) est.update(u);
        ds::TrialOutcome o;
        o.truth = truth;
        o.estimate = est.estimate();
        o.error = std::fabs(o.estimate - truth);
        o.pass = o.error <= eps * truth;
        unsigned rows = 0;
        for (unsigned copy = 0; copy < lc.copies; ++copy)
          rows = std::max(rows, est.matrix(copy).max_retained_rows());
        o.samples_stored = rows;
        o.extra = json{{"retained_rows", rows}};
        return o;
      },
      c.timing);
  std::cout << summary.dump() << std::endl;
  return 0;
}

int cmd_suppsample(const std::string& input, uint64_t k, double delta, double alpha,
                   const CommonOpts& c) {
  auto sf = load_stream(input);
  ds::ExactState oracle(sf.config);
  oracle.apply(sf.updates);
  uint64_t l0 = oracle.l0_norm();

  json spec{{"algorithm", "suppsample"}, {"eps", 0.0}, {"alpha", alpha},
            {"k", k},                    {"delta", delta}, {"input", input}};
  json summary = ds::run_experiment(
      spec, c.trials, c.seed, c.report,
      [&](size_t, uint64_t trial_seed) {
        ds::SupportSamplerConfig sc;
        sc.n = sf.config.n;
        sc.k = k;
        sc.delta = delta;
        sc.alpha = alpha;
        sc.seed = trial_seed;
        ds::SupportSampler ss(sc);
        for (const auto& u : sf.updates) ss.update(u);
        auto got = ss.query();
        size_t bad = 0;
        for (uint64_t i : got) bad += oracle.frequency(i) == 0;
        ds::TrialOutcome o;
        o.truth = (double)std::min<uint64_t>(k, l0);
        o.estimate = (double)got.size();
        o.error = (double)bad;
        o.pass = bad == 0 && got.size() >= std::min<uint64_t>(k, l0);
        o.extra = json{{"members", got.size()}, {"non_support", bad}};
        return o;
      },
      c.timing);
  std::cout << summary.dump() << std::endl;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bounded-deletion stream sketches: experiments against an exact oracle"};
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "generate an alpha-property stream file");
  std::string gen_out = "stream.txt", gen_kind = "strict-turnstile", gen_shape = "uniform";
  uint64_t gen_n = 1024, gen_len = 10000, gen_seed = 1;
  double gen_alpha = 1.0;
  int gen_p = 1;
  gen->add_option("--out", gen_out)->required();
  gen->add_option("--n", gen_n, "universe size (power of two)");
  gen->add_option("--kind", gen_kind, "strict-turnstile|general-turnstile|insertion-only");
  gen->add_option("--alpha", gen_alpha, "target alpha (>= 1)");
  gen->add_option("--p", gen_p, "norm for the alpha bound (0 or 1)");
  gen->add_option("--length", gen_len, "total update mass");
  gen->add_option("--shape", gen_shape, "uniform|zipf|single-heavy|adversarial-cancel");
  gen->add_option("--seed", gen_seed);

  // hh
  auto* hh = app.add_subcommand("hh", "L1 eps-heavy hitters");
  std::string hh_input, hh_mode = "strict";
  double hh_eps = 0.1, hh_alpha = 4.0;
  CommonOpts hh_c;
  hh->add_option("--input", hh_input)->required();
  hh->add_option("--eps", hh_eps);
  hh->add_option("--mode", hh_mode, "strict|general");
  hh->add_option("--alpha", hh_alpha);
  add_common(hh, hh_c);

  // ip
  auto* ip = app.add_subcommand("ip", "inner product of two streams");
  std::string ip_f, ip_g;
  double ip_eps = 0.25, ip_alpha = 4.0;
  uint64_t ip_s = 0;
  CommonOpts ip_c;
  ip->add_option("--input-f", ip_f)->required();
  ip->add_option("--input-g", ip_g)->required();
  ip->add_option("--eps", ip_eps);
  ip->add_option("--alpha", ip_alpha);
  ip->add_option("--s", ip_s, "sampling base override (power of two)");
  add_common(ip, ip_c);

  // l1sample
  auto* l1s = app.add_subcommand("l1sample", "precision-sampling L1 sampler");
  std::string l1s_input;
  double l1s_eps = 0.25, l1s_delta = 0.1;
  bool l1s_general = false, l1s_cal = false;
  CommonOpts l1s_c;
  l1s->add_option("--input", l1s_input)->required();
  l1s->add_option("--eps", l1s_eps);
  l1s->add_option("--delta", l1s_delta);
  l1s->add_flag("--general", l1s_general, "approximate r,q with the general estimator");
  l1s->add_flag("--calibrate", l1s_cal, "estimate c_prop on this stream and exit");
  add_common(l1s, l1s_c);

  // l1est
  auto* l1e = app.add_subcommand("l1est", "L1 estimation");
  std::string l1e_input, l1e_mode = "strict";
  double l1e_eps = 0.2, l1e_delta = 0.1, l1e_alpha = 4.0;
  uint64_t l1e_s = 0;
  CommonOpts l1e_c;
  l1e->add_option("--input", l1e_input)->required();
  l1e->add_option("--mode", l1e_mode, "strict|general");
  l1e->add_option("--eps", l1e_eps);
  l1e->add_option("--delta", l1e_delta);
  l1e->add_option("--alpha", l1e_alpha);
  l1e->add_option("--s", l1e_s, "level base override (power of two)");
  add_common(l1e, l1e_c);

  // l0est
  auto* l0e = app.add_subcommand("l0est", "L0 estimation");
  std::string l0e_input;
  double l0e_eps = 0.25, l0e_alpha = 4.0;
  CommonOpts l0e_c;
  l0e->add_option("--input", l0e_input)->required();
  l0e->add_option("--eps", l0e_eps);
  l0e->add_option("--alpha", l0e_alpha);
  add_common(l0e, l0e_c);

  // suppsample
  auto* sup = app.add_subcommand("suppsample", "support sampling");
  std::string sup_input;
  uint64_t sup_k = 20;
  double sup_delta = 0.1, sup_alpha = 4.0;
  CommonOpts sup_c;
  sup->add_option("--input", sup_input)->required();
  sup->add_option("--k", sup_k);
  sup->add_option("--delta", sup_delta);
  sup->add_option("--alpha", sup_alpha);
  add_common(sup, sup_c);

  // table
  auto* tab = app.add_subcommand("table", "emit a CSV tradeoff table from reports");
  std::vector<std::string> tab_reports;
  std::string tab_out = "table.csv";
  tab->add_option("reports", tab_reports, "report files")->required();
  tab->add_option("--out", tab_out);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen(gen_out, gen_n, gen_kind, gen_alpha, gen_p, gen_len, gen_shape, gen_seed);
    if (hh->parsed()) return cmd_hh(hh_input, hh_eps, hh_mode, hh_alpha, hh_c);
    if (ip->parsed()) return cmd_ip(ip_f, ip_g, ip_eps, ip_alpha, ip_s, ip_c);
    if (l1s->parsed()) return cmd_l1sample(l1s_input, l1s_eps, l1s_delta, l1s_general, l1s_cal, l1s_c);
    if (l1e->parsed()) return cmd_l1est(l1e_input, l1e_mode, l1e_eps, l1e_delta, l1e_alpha, l1e_s, l1e_c);
    if (l0e->parsed()) return cmd_l0est(l0e_input, l0e_eps, l0e_alpha, l0e_c);
    if (sup->parsed()) return cmd_suppsample(sup_input, sup_k, sup_delta, sup_alpha, sup_c);
    if (tab->parsed()) {
      ds::emit_tradeoff_table(tab_reports, tab_out);
      std::cout << json{{"table", tab_out}, {"rows", tab_reports.size()}}.dump() << std::endl;
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 2;
  }
  return 0;
}
