#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

namespace deltasketch {

// One stream event: a signed change to coordinate `index` of the frequency
// vector.
struct Update {
  uint64_t index = 0;
  int64_t delta = 0;
};

enum class StreamKind { StrictTurnstile, GeneralTurnstile, InsertionOnly };

std::string to_string(StreamKind kind);
StreamKind stream_kind_from_string(const std::string& s);

struct StreamConfig {
  uint64_t n = 0;        // universe size, power of two
  uint64_t m_max = 0;    // documented cap on stream length, not enforced
  int64_t max_update = 1;  // |delta| <= max_update
  StreamKind kind = StreamKind::StrictTurnstile;

  void validate() const;
};

// Extended nonnegative rational, exact for the alpha ratios (both norms are
// integers for p in {0,1}). den == 0 encodes +infinity.
struct ExtendedRatio {
  uint64_t num = 0;
  uint64_t den = 1;

  static ExtendedRatio infinity() { return ExtendedRatio{1, 0}; }
  bool is_infinite() const { return den == 0; }
  double value() const {
    return den == 0 ? std::numeric_limits<double>::infinity() : (double)num / (double)den;
  }
  bool operator<=(double x) const { return !is_infinite() && value() <= x; }
};

// Exact replay of the stream: frequency, insertion and deletion vectors.
// This is the ground truth every sketch is tested against.
class ExactState {
 public:
  explicit ExactState(StreamConfig config);

  // Applies one update; throws on invalid index/delta and on strict-kind
  // prefix negativity.
  void apply_update(const Update& u);
  void apply(const std::vector<Update>& updates);

  const StreamConfig& config() const { return config_; }
  uint64_t update_count() const { return t_; }

  int64_t frequency(uint64_t i) const { return f_.at(i); }
  uint64_t insertions(uint64_t i) const { return ins_.at(i); }
  uint64_t deletions(uint64_t i) const { return del_.at(i); }
  const std::vector<int64_t>& frequencies() const { return f_; }

  uint64_t l1_norm() const;        // ||f||_1
  uint64_t l0_norm() const;        // #nonzero final frequencies
  uint64_t update_mass() const;    // ||I + D||_1 = total |delta|
  uint64_t distinct_touched() const;  // F0 = #coordinates ever updated

  // L2 norm of f with its k largest-magnitude entries removed.
  double tail_error(uint64_t k) const;

  // ||I + D||_p / ||f||_p for p in {0, 1}. Empty stream -> 1 by convention;
  // zero final norm with nonzero update mass -> +infinity.
  ExtendedRatio alpha_lp(int p) const;

  // max over touched i of (I_i + D_i) / |f_i|; +infinity if any touched
  // coordinate returned to zero.
  ExtendedRatio strong_alpha() const;

 private:
  StreamConfig config_;
  std::vector<int64_t> f_;
  std::vector<uint64_t> ins_;
  std::vector<uint64_t> del_;
  uint64_t t_ = 0;
};

enum class StreamShape { Uniform, Zipf, SingleHeavy, AdversarialCancel };

std::string to_string(StreamShape s);
StreamShape stream_shape_from_string(const std::string& s);

struct GenSpec {
  StreamConfig config;
  double target_alpha = 1.0;  // >= 1
  int p = 1;                  // which alpha (0 or 1) the bound applies to
  uint64_t length = 0;        // total update mass to emit
  StreamShape shape = StreamShape::Uniform;
  uint64_t seed = 0;
};

struct GeneratedStream {
  std::vector<Update> updates;
  double realized_alpha = 1.0;  // alpha_lp of the emitted stream, from the oracle
};

// Emits a stream satisfying the kind constraints with
// alpha_lp(final, p) <= target_alpha, verified on the oracle before return.
GeneratedStream generate_stream(const GenSpec& spec);

// Stream file format: UTF-8 text, header `# n=<int> kind=<str> M=<int>`,
// then one `<index>\t<delta>` per line.
void write_stream(std::ostream& out, const StreamConfig& config, const std::vector<Update>& updates);
void write_stream_file(const std::string& path, const StreamConfig& config,
                       const std::vector<Update>& updates);

struct StreamFile {
  StreamConfig config;
  std::vector<Update> updates;
};

StreamFile read_stream(std::istream& in);
StreamFile read_stream_file(const std::string& path);

}  // namespace deltasketch
