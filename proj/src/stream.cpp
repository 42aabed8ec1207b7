#include "deltasketch/stream.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "deltasketch/hashing.hpp"

namespace deltasketch {

std::string to_string(StreamKind kind) {
  switch (kind) {
    case StreamKind::StrictTurnstile: return "strict-turnstile";
    case StreamKind::GeneralTurnstile: return "general-turnstile";
    case StreamKind::InsertionOnly: return "insertion-only";
  }
  return "strict-turnstile";
}

StreamKind stream_kind_from_string(const std::string& s) {
  if (s == "strict-turnstile" || s == "strict") return StreamKind::StrictTurnstile;
  if (s == "general-turnstile" || s == "general") return StreamKind::GeneralTurnstile;
  if (s == "insertion-only" || s == "insertion") return StreamKind::InsertionOnly;
  throw std::invalid_argument("unknown stream kind: " + s);
}

std::string to_string(StreamShape s) {
  switch (s) {
    case StreamShape::Uniform: return "uniform";
    case StreamShape::Zipf: return "zipf";
    case StreamShape::SingleHeavy: return "single-heavy";
    case StreamShape::AdversarialCancel: return "adversarial-cancel";
  }
  return "uniform";
}

StreamShape stream_shape_from_string(const std::string& s) {
  if (s == "uniform") return StreamShape::Uniform;
  if (s == "zipf") return StreamShape::Zipf;
  if (s == "single-heavy") return StreamShape::SingleHeavy;
  if (s == "adversarial-cancel") return StreamShape::AdversarialCancel;
  throw std::invalid_argument("unknown stream shape: " + s);
}

void StreamConfig::validate() const {
  if (n == 0 || (n & (n - 1)) != 0) throw std::invalid_argument("StreamConfig: n must be a power of two");
  if (max_update < 1) throw std::invalid_argument("StreamConfig: max update magnitude must be >= 1");
}

ExactState::ExactState(StreamConfig config) : config_(config) {
  config_.validate();
  f_.assign(config_.n, 0);
  ins_.assign(config_.n, 0);
  del_.assign(config_.n, 0);
}

void ExactState::apply_update(const Update& u) {
  if (u.index >= config_.n) throw std::invalid_argument("update index out of range");
  if (u.delta == 0) throw std::invalid_argument("update delta must be nonzero");
  if (std::llabs(u.delta) > config_.max_update) throw std::invalid_argument("update magnitude exceeds M");
  if (config_.kind == StreamKind::InsertionOnly && u.delta < 0)
    throw std::invalid_argument("negative update in insertion-only stream");
  if (config_.kind == StreamKind::StrictTurnstile && f_[u.index] + u.delta < 0)
    throw std::invalid_argument("strict-turnstile prefix would go negative at index " +
                                std::to_string(u.index));
  f_[u.index] += u.delta;
  if (u.delta > 0)
    ins_[u.index] += (uint64_t)u.delta;
  else
    del_[u.index] += (uint64_t)(-u.delta);
  ++t_;
}

void ExactState::apply(const std::vector<Update>& updates) {
  for (const auto& u : updates) apply_update(u);
}

uint64_t ExactState::l1_norm() const {
  uint64_t s = 0;
  for (int64_t v : f_) s += (uint64_t)std::llabs(v);
  return s;
}

uint64_t ExactState::l0_norm() const {
  uint64_t s = 0;
  for (int64_t v : f_) s += v != 0;
  return s;
}

uint64_t ExactState::update_mass() const {
  uint64_t s = 0;
  for (size_t i = 0; i < ins_.size(); ++i) s += ins_[i] + del_[i];
  return s;
}

uint64_t ExactState::distinct_touched() const {
  uint64_t s = 0;
  for (size_t i = 0; i < ins_.size(); ++i) s += (ins_[i] + del_[i]) > 0;
  return s;
}

double ExactState::tail_error(uint64_t k) const {
  std::vector<double> mags;
  mags.reserve(f_.size());
  for (int64_t v : f_)
    if (v != 0) mags.push_back((double)std::llabs(v));
  std::sort(mags.begin(), mags.end(), std::greater<>());
  double s = 0;
  for (size_t i = k; i < mags.size(); ++i) s += mags[i] * mags[i];
  return std::sqrt(s);
}

ExtendedRatio ExactState::alpha_lp(int p) const {
  if (p != 0 && p != 1) throw std::invalid_argument("alpha_lp: p must be 0 or 1");
  uint64_t num = 0, den = 0;
  if (p == 1) {
    num = update_mass();
    den = l1_norm();
  } else {
    num = distinct_touched();
    den = l0_norm();
  }
  if (den == 0) return num == 0 ? ExtendedRatio{1, 1} : ExtendedRatio::infinity();
  return ExtendedRatio{num, den};
}

ExtendedRatio ExactState::strong_alpha() const {
  ExtendedRatio best{1, 1};
  bool touched_any = false;
  for (size_t i = 0; i < f_.size(); ++i) {
    uint64_t mass = ins_[i] + del_[i];
    if (mass == 0) continue;
    touched_any = true;
    uint64_t mag = (uint64_t)std::llabs(f_[i]);
    if (mag == 0) return ExtendedRatio::infinity();
    // mass/mag > best.num/best.den, compared exactly
    if ((unsigned __int128)mass * best.den > (unsigned __int128)best.num * mag)
      best = ExtendedRatio{mass, mag};
  }
  if (!touched_any) return ExtendedRatio{1, 1};
  return best;
}

namespace {

// Picks insertion targets according to the requested shape.
class ShapeSampler {
 public:
  ShapeSampler(const GenSpec& spec, std::mt19937_64& rng) : spec_(spec), rng_(rng) {
    if (spec.shape == StreamShape::Zipf) {
      // Truncated zipf(1.1) over the universe; heavy ranks at low indices.
      size_t support = (size_t)std::min<uint64_t>(spec.config.n, 4096);
      std::vector<double> w(support);
      for (size_t i = 0; i < support; ++i) w[i] = 1.0 / std::pow((double)(i + 1), 1.1);
      zipf_ = std::discrete_distribution<uint64_t>(w.begin(), w.end());
    }
    if (spec.shape == StreamShape::AdversarialCancel) {
      cancel_support_ = std::max<uint64_t>(4, std::min<uint64_t>(spec.config.n, 64));
    }
  }

  uint64_t next() {
    std::uniform_int_distribution<uint64_t> uni(0, spec_.config.n - 1);
    switch (spec_.shape) {
      case StreamShape::Uniform:
        return uni(rng_);
      case StreamShape::Zipf:
        return zipf_(rng_);
      case StreamShape::SingleHeavy: {
        std::uniform_real_distribution<double> coin(0.0, 1.0);
        if (coin(rng_) < 0.2 || spec_.config.n == 1) return 0;
        std::uniform_int_distribution<uint64_t> rest(1, spec_.config.n - 1);
        return rest(rng_);
      }
      case StreamShape::AdversarialCancel:
        return (round_robin_++) % cancel_support_;
    }
    return 0;
  }

 private:
  const GenSpec& spec_;
  std::mt19937_64& rng_;
  std::discrete_distribution<uint64_t> zipf_;
  uint64_t cancel_support_ = 1;
  uint64_t round_robin_ = 0;
};

GeneratedStream generate_l1(const GenSpec& spec, std::mt19937_64& rng) {
  const double A = spec.target_alpha;
  uint64_t del_budget = 0;
  if (spec.config.kind != StreamKind::InsertionOnly && A > 1.0) {
    // With ins + del = L and strict nonnegativity, alpha = L / (L - 2*del),
    // so alpha <= A iff del <= L(A-1)/(2A).
    del_budget = (uint64_t)std::floor((double)spec.length * (A - 1.0) / (2.0 * A));
  }
  if (spec.shape == StreamShape::AdversarialCancel && del_budget == 0)
    throw std::invalid_argument("generate_stream: adversarial-cancel needs target_alpha > 1 and a deleting kind");

  uint64_t ins_budget = spec.length - del_budget;
  ShapeSampler sampler(spec, rng);

  // `alive` holds one entry per unit of current positive mass, so a uniform
  // pick deletes proportionally to the current frequency.
  std::vector<uint64_t> alive;
  alive.reserve(ins_budget);
  std::vector<Update> out;
  out.reserve(spec.length);

  auto emit_insert = [&]() {
    uint64_t i = sampler.next();
    out.push_back(Update{i, +1});
    alive.push_back(i);
  };
  auto emit_delete = [&]() {
    std::uniform_int_distribution<size_t> pick(0, alive.size() - 1);
    size_t j = pick(rng);
    out.push_back(Update{alive[j], -1});
    alive[j] = alive.back();
    alive.pop_back();
  };

  uint64_t ins_left = ins_budget, del_left = del_budget;
  if (spec.shape == StreamShape::AdversarialCancel) {
    // Build up then tear down: all deletions are spent cancelling the
    // earliest insertions, leaving the stream's mass to the tail.
    uint64_t head = std::min(ins_left, del_left);
    for (uint64_t i = 0; i < head; ++i) emit_insert();
    ins_left -= head;
    while (del_left > 0 && !alive.empty()) {
      emit_delete();
      --del_left;
    }
    while (ins_left > 0) {
      emit_insert();
      --ins_left;
    }
  } else {
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    while (ins_left + del_left > 0) {
      bool can_delete = del_left > 0 && !alive.empty();
      bool do_delete = can_delete &&
                       (ins_left == 0 || coin(rng) < (double)del_left / (double)(ins_left + del_left));
      if (do_delete) {
        emit_delete();
        --del_left;
      } else {
        emit_insert();
        --ins_left;
      }
    }
  }
  return GeneratedStream{std::move(out), 0.0};
}

GeneratedStream generate_l0(const GenSpec& spec, std::mt19937_64& rng) {
  const double A = spec.target_alpha;
  // Touch F0 distinct items, then fully cancel enough of them to land
  // L0 >= ceil(F0 / A).
  uint64_t f0 = std::max<uint64_t>(1, std::min<uint64_t>(spec.config.n / 2, spec.length / 2));
  uint64_t l0_target = (uint64_t)std::ceil((double)f0 / A);
  uint64_t cancels = f0 - l0_target;
  if (spec.config.kind == StreamKind::InsertionOnly) cancels = 0;

  std::vector<uint64_t> items(spec.config.n);
  for (uint64_t i = 0; i < spec.config.n; ++i) items[i] = i;
  std::shuffle(items.begin(), items.end(), rng);
  items.resize(f0);

  std::vector<Update> out;
  out.reserve(2 * f0);
  for (uint64_t i : items) out.push_back(Update{i, +1});
  for (uint64_t j = 0; j < cancels; ++j) out.push_back(Update{items[j], -1});
  std::shuffle(out.begin() + (long)f0, out.end(), rng);
  return GeneratedStream{std::move(out), 0.0};
}

}  // namespace

GeneratedStream generate_stream(const GenSpec& spec) {
  spec.config.validate();
  if (spec.target_alpha < 1.0) throw std::invalid_argument("generate_stream: target_alpha must be >= 1");
  if (spec.p != 0 && spec.p != 1) throw std::invalid_argument("generate_stream: p must be 0 or 1");
  if (spec.length == 0) return GeneratedStream{{}, 1.0};

  std::mt19937_64 rng = make_rng(spec.seed, 0x67656eULL);
  GeneratedStream g = spec.p == 1 ? generate_l1(spec, rng) : generate_l0(spec, rng);

  if (spec.config.kind == StreamKind::GeneralTurnstile) {
    // Flip the sign of every update to a random half of the touched items.
    // Per-item flips leave |f_i| and I_i + D_i unchanged, so both alpha
    // ratios are preserved while negative frequencies get exercised.
    KWiseHash flip(2, 2, derive_seed(spec.seed, 0x666c6970ULL));
    for (auto& u : g.updates)
      if (flip(u.index)) u.delta = -u.delta;
  }

  ExactState oracle(spec.config);
  oracle.apply(g.updates);
  ExtendedRatio realized = oracle.alpha_lp(spec.p);
  if (!(realized <= spec.target_alpha))
    throw std::runtime_error("generate_stream: internal error, realized alpha exceeds target");
  g.realized_alpha = realized.value();
  return g;
}

void write_stream(std::ostream& out, const StreamConfig& config, const std::vector<Update>& updates) {
  out << "# n=" << config.n << " kind=" << to_string(config.kind) << " M=" << config.max_update << "\n";
  for (const auto& u : updates) out << u.index << "\t" << u.delta << "\n";
}

void write_stream_file(const std::string& path, const StreamConfig& config,
                       const std::vector<Update>& updates) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open stream file for writing: " + path);
  write_stream(out, config, updates);
}

StreamFile read_stream(std::istream& in) {
  StreamFile sf;
  std::string line;
  if (!std::getline(in, line) || line.rfind("# ", 0) != 0)
    throw std::runtime_error("stream file: missing '# n=... kind=... M=...' header");
  {
    std::istringstream hs(line.substr(2));
    std::string tok;
    bool have_n = false, have_kind = false, have_m = false;
    while (hs >> tok) {
      auto eq = tok.find('=');
      if (eq == std::string::npos) throw std::runtime_error("stream file: bad header token " + tok);
      std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
      if (key == "n") {
        sf.config.n = std::stoull(val);
        have_n = true;
      } else if (key == "kind") {
        sf.config.kind = stream_kind_from_string(val);
        have_kind = true;
      } else if (key == "M") {
        sf.config.max_update = std::stoll(val);
        have_m = true;
      }
    }
    if (!have_n || !have_kind || !have_m) throw std::runtime_error("stream file: incomplete header");
  }
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    Update u;
    if (!(ls >> u.index >> u.delta)) throw std::runtime_error("stream file: bad update line: " + line);
    sf.updates.push_back(u);
  }
  sf.config.m_max = std::max<uint64_t>(sf.updates.size(), 1);
  sf.config.validate();
  return sf;
}

StreamFile read_stream_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open stream file: " + path);
  return read_stream(in);
}

}  // namespace deltasketch
