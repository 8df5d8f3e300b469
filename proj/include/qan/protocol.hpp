#pragma once

// Frames, symbols and synchronization strings as prepared by one transmitter.
//
// A transmitter emits frames of (M+1)*L pulses. Position k*(M+1) carries
// sync symbol k (public, Z basis); the M positions after it carry secret
// BB84 symbols. The sync string is reused in every frame; the random
// payload is fresh for every frame.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace qan {

enum class Basis : std::uint8_t { Z = 0, X = 1 };
enum class Intensity : std::uint8_t { Signal = 0, Decoy = 1 };
enum class Role : std::uint8_t { Sync = 0, Random = 1 };

/// Ternary correlation alphabet: +1 / -1 for the two Z states, 0 for
/// "not detected" or X basis.
using Ternary = std::int8_t;

struct QubitSymbol {
  Basis basis = Basis::Z;
  std::uint8_t bit = 0;
  Intensity intensity = Intensity::Signal;
  Role role = Role::Random;

  Ternary value() const {
    if (basis != Basis::Z) return 0;
    return bit == 0 ? Ternary{1} : Ternary{-1};
  }

  friend bool operator==(const QubitSymbol&, const QubitSymbol&) = default;
};

/// Frame geometry: L sync symbols of small period L1, M random symbols after each.
struct FrameSpec {
  std::size_t sync_length = 100000;  // L
  std::size_t period_length = 1000;  // L1
  std::size_t interleave = 1;        // M

  std::size_t frame_length() const { return (interleave + 1) * sync_length; }
  std::size_t periods() const { return sync_length / period_length; }
  /// Key-generation duty ratio q = M/(M+1).
  double duty() const {
    return static_cast<double>(interleave) / static_cast<double>(interleave + 1);
  }
  /// Frame positions after which the sync pattern repeats: (M+1)*L1.
  std::size_t sync_period() const { return (interleave + 1) * period_length; }

  /// Throws ParameterError unless M >= 1, L1 >= 2 and L1 divides L.
  void validate() const;

  friend bool operator==(const FrameSpec&, const FrameSpec&) = default;
};

/// Public +-1 string of length L built from a base block of length L1
/// repeated N1 = L/L1 times.
class SyncString {
 public:
  SyncString() = default;
  SyncString(int id, std::vector<Ternary> base, std::size_t periods);

  int id() const { return id_; }
  std::size_t length() const { return base_.size() * periods_; }
  std::size_t period_length() const { return base_.size(); }
  std::size_t periods() const { return periods_; }
  std::span<const Ternary> base() const { return base_; }

  Ternary operator[](std::size_t i) const { return base_[i % base_.size()]; }
  std::vector<Ternary> values() const;

  /// Cyclic autocorrelation sum_i s[i] s[(i+lag) mod L].
  long autocorrelation(std::size_t lag) const;

  friend bool operator==(const SyncString&, const SyncString&) = default;

 private:
  int id_ = 0;
  std::vector<Ternary> base_;
  std::size_t periods_ = 0;
};

/// Seeded balanced base block (|sum| <= 1) of length L1, repeated L/L1 times.
/// Among a few seeded candidates the block with the lowest periodic side lobe
/// is kept. Throws ParameterError if L1 < 2 or L1 does not divide L.
SyncString generate_sync_string(std::size_t length, std::size_t period_length, int id,
                                std::uint64_t seed);

struct SymbolProbabilities {
  double signal = 0.69;
  double decoy = 0.31;
  double z = 0.9;
  double x = 0.1;

  void validate() const;
};

/// Counter-based i.i.d. BB84 symbol source: the symbol at index i is a pure
/// function of (seed, i), so a transmitter's full random record is
/// reproducible without storing it.
class PayloadSource {
 public:
  PayloadSource() = default;
  PayloadSource(std::uint64_t seed, SymbolProbabilities probs);

  QubitSymbol operator()(std::uint64_t index) const;
  const SymbolProbabilities& probabilities() const { return probs_; }

 private:
  std::uint64_t key_ = 0;
  SymbolProbabilities probs_;
};

std::vector<QubitSymbol> generate_random_payload(std::size_t count, SymbolProbabilities probs,
                                                 std::uint64_t seed);

struct BitFrame {
  std::vector<QubitSymbol> symbols;
  std::size_t interleave = 1;
};

/// Interleaves sync symbol k at index k*(M+1). payload.size() must equal M*L.
BitFrame build_frame(const SyncString& sync, std::span<const QubitSymbol> payload,
                     std::size_t interleave, Intensity sync_intensity = Intensity::Signal);

struct ParsedFrame {
  std::vector<Ternary> sync;
  std::vector<QubitSymbol> payload;
};

ParsedFrame parse_frame(const BitFrame& frame);

/// Dense row-major matrix of ternary values.
class TernaryMatrix {
 public:
  TernaryMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  Ternary& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  Ternary operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  std::span<const Ternary> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  const std::vector<Ternary>& flatten() const { return data_; }

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::vector<Ternary> data_;
};

/// Row-major reshape into (size/L1) x L1; element (r, c) = values[r*L1 + c].
TernaryMatrix reshape_to_matrix(std::span<const Ternary> values, std::size_t period_length);

/// Everything one transmitter ever emits, addressable by absolute pulse index.
/// Pulse n belongs to frame n / F at position n % F, with F = (M+1)*L.
class TransmitterRecord {
 public:
  TransmitterRecord(SyncString code, std::size_t interleave, PayloadSource payload,
                    Intensity sync_intensity = Intensity::Signal);

  QubitSymbol symbol_at(std::uint64_t pulse) const;
  BitFrame frame(std::uint64_t frame_index) const;

  const SyncString& code() const { return code_; }
  FrameSpec spec() const { return {code_.length(), code_.period_length(), interleave_}; }
  const PayloadSource& payload() const { return payload_; }

 private:
  SyncString code_;
  std::size_t interleave_;
  PayloadSource payload_;
  Intensity sync_intensity_;
};

}  // namespace qan
