#include "qan/protocol.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <string>

#include "qan/errors.hpp"
#include "qan/random.hpp"

namespace qan {

namespace {

constexpr int kSyncCandidates = 32;

bool valid_probability(double p) { return std::isfinite(p) && p >= 0.0 && p <= 1.0; }

long peak_side_lobe(const std::vector<Ternary>& block) {
  const std::size_t n = block.size();
  std::vector<int> twice(2 * n);
  for (std::size_t i = 0; i < 2 * n; ++i) twice[i] = block[i % n];
  long worst = 0;
  // the periodic autocorrelation is symmetric in lag, so half the lags suffice
  for (std::size_t lag = 1; lag <= n / 2; ++lag) {
    int acc = 0;
    for (std::size_t i = 0; i < n; ++i) acc += twice[i] * twice[i + lag];
    worst = std::max(worst, std::labs(acc));
  }
  return worst;
}

}  // namespace

void FrameSpec::validate() const {
  if (interleave < 1) throw ParameterError("frame: interleave M must be >= 1");
  if (period_length < 2) throw ParameterError("frame: period length L1 must be >= 2");
  if (sync_length == 0 || sync_length % period_length != 0) {
    throw ParameterError("frame: L1=" + std::to_string(period_length) +
                         " does not divide L=" + std::to_string(sync_length));
  }
}

SyncString::SyncString(int id, std::vector<Ternary> base, std::size_t periods)
    : id_(id), base_(std::move(base)), periods_(periods) {
  if (base_.empty() || periods_ == 0) throw ParameterError("sync string: empty");
  for (auto v : base_) {
    if (v != 1 && v != -1) throw ParameterError("sync string: values must be +1/-1");
  }
}

std::vector<Ternary> SyncString::values() const {
  std::vector<Ternary> out;
  out.reserve(length());
  for (std::size_t p = 0; p < periods_; ++p) out.insert(out.end(), base_.begin(), base_.end());
  return out;
}

long SyncString::autocorrelation(std::size_t lag) const {
  const std::size_t n = length();
  long acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += (*this)[i] * (*this)[(i + lag) % n];
  return acc;
}

SyncString generate_sync_string(std::size_t length, std::size_t period_length, int id,
                                std::uint64_t seed) {
  if (period_length < 2) throw ParameterError("sync string: L1 must be >= 2");
  if (length == 0 || length % period_length != 0) {
    throw ParameterError("sync string: L1=" + std::to_string(period_length) +
                         " does not divide L=" + std::to_string(length));
  }
  auto rng = make_engine(seed, {0x53594e43ULL, static_cast<std::uint64_t>(id)});

  std::vector<Ternary> proto(period_length, Ternary{-1});
  std::fill_n(proto.begin(), period_length / 2, Ternary{1});

  std::vector<Ternary> best;
  long best_psl = 0;
  for (int c = 0; c < kSyncCandidates; ++c) {
    auto cand = proto;
    std::shuffle(cand.begin(), cand.end(), rng);
    const long psl = peak_side_lobe(cand);
    if (best.empty() || psl < best_psl) {
      best = std::move(cand);
      best_psl = psl;
    }
  }
  return SyncString(id, std::move(best), length / period_length);
}

void SymbolProbabilities::validate() const {
  if (!valid_probability(signal) || !valid_probability(decoy) || !valid_probability(z) ||
      !valid_probability(x)) {
    throw ParameterError("symbol probabilities must lie in [0, 1]");
  }
  if (std::abs(signal + decoy - 1.0) > 1e-9) {
    throw ParameterError("intensity probabilities must sum to 1");
  }
  if (std::abs(z + x - 1.0) > 1e-9) throw ParameterError("basis probabilities must sum to 1");
}

PayloadSource::PayloadSource(std::uint64_t seed, SymbolProbabilities probs)
    : key_(mix64(seed ^ 0x7061796c6f6164ULL)), probs_(probs) {
  probs_.validate();
}

QubitSymbol PayloadSource::operator()(std::uint64_t index) const {
  const std::uint64_t w1 = mix64(key_ + mix64(index));
  const std::uint64_t w2 = mix64(w1 ^ key_);
  QubitSymbol s;
  s.intensity = to_unit(w1) < probs_.signal ? Intensity::Signal : Intensity::Decoy;
  s.basis = to_unit(w2) < probs_.z ? Basis::Z : Basis::X;
  s.bit = static_cast<std::uint8_t>(w2 & 1U);
  s.role = Role::Random;
  return s;
}

std::vector<QubitSymbol> generate_random_payload(std::size_t count, SymbolProbabilities probs,
                                                 std::uint64_t seed) {
  const PayloadSource source(seed, probs);
  std::vector<QubitSymbol> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = source(i);
  return out;
}

BitFrame build_frame(const SyncString& sync, std::span<const QubitSymbol> payload,
                     std::size_t interleave, Intensity sync_intensity) {
  if (interleave < 1) throw ParameterError("frame: interleave M must be >= 1");
  const std::size_t L = sync.length();
  if (payload.size() != interleave * L) {
    throw ParameterError("frame: payload length " + std::to_string(payload.size()) +
                         " != M*L = " + std::to_string(interleave * L));
  }
  BitFrame frame;
  frame.interleave = interleave;
  frame.symbols.reserve((interleave + 1) * L);
  for (std::size_t k = 0; k < L; ++k) {
    QubitSymbol s;
    s.basis = Basis::Z;
    s.bit = sync[k] == 1 ? 0 : 1;
    s.intensity = sync_intensity;
    s.role = Role::Sync;
    frame.symbols.push_back(s);
    for (std::size_t j = 0; j < interleave; ++j) {
      QubitSymbol r = payload[k * interleave + j];
      r.role = Role::Random;
      frame.symbols.push_back(r);
    }
  }
  return frame;
}

ParsedFrame parse_frame(const BitFrame& frame) {
  const std::size_t stride = frame.interleave + 1;
  if (frame.interleave < 1 || frame.symbols.size() % stride != 0) {
    throw ParameterError("frame: length is not a multiple of M+1");
  }
  ParsedFrame out;
  out.sync.reserve(frame.symbols.size() / stride);
  out.payload.reserve(frame.symbols.size() - frame.symbols.size() / stride);
  for (std::size_t i = 0; i < frame.symbols.size(); ++i) {
    const auto& s = frame.symbols[i];
    if (i % stride == 0) {
      if (s.role != Role::Sync || s.basis != Basis::Z) {
        throw ParameterError("frame: position " + std::to_string(i) + " is not a Z sync symbol");
      }
      out.sync.push_back(s.value());
    } else {
      out.payload.push_back(s);
    }
  }
  return out;
}

TernaryMatrix reshape_to_matrix(std::span<const Ternary> values, std::size_t period_length) {
  if (period_length == 0 || values.size() % period_length != 0) {
    throw ParameterError("reshape: L1=" + std::to_string(period_length) +
                         " does not divide length " + std::to_string(values.size()));
  }
  TernaryMatrix m(values.size() / period_length, period_length);
  for (std::size_t i = 0; i < values.size(); ++i) m(i / period_length, i % period_length) = values[i];
  return m;
}

TransmitterRecord::TransmitterRecord(SyncString code, std::size_t interleave, PayloadSource payload,
                                     Intensity sync_intensity)
    : code_(std::move(code)),
      interleave_(interleave),
      payload_(std::move(payload)),
      sync_intensity_(sync_intensity) {
  if (interleave_ < 1) throw ParameterError("transmitter: interleave M must be >= 1");
}

QubitSymbol TransmitterRecord::symbol_at(std::uint64_t pulse) const {
  const std::uint64_t stride = interleave_ + 1;
  const std::uint64_t frame_len = stride * code_.length();
  const std::uint64_t frame = pulse / frame_len;
  const std::uint64_t pos = pulse % frame_len;
  const std::uint64_t k = pos / stride;
  const std::uint64_t j = pos % stride;
  if (j == 0) {
    QubitSymbol s;
    s.basis = Basis::Z;
    s.bit = code_[k] == 1 ? 0 : 1;
    s.intensity = sync_intensity_;
    s.role = Role::Sync;
    return s;
  }
  const std::uint64_t payload_index = frame * interleave_ * code_.length() + k * interleave_ + (j - 1);
  QubitSymbol s = payload_(payload_index);
  s.role = Role::Random;
  return s;
}

BitFrame TransmitterRecord::frame(std::uint64_t frame_index) const {
  const std::size_t n = interleave_ * code_.length();
  std::vector<QubitSymbol> payload(n);
  for (std::size_t i = 0; i < n; ++i) payload[i] = payload_(frame_index * n + i);
  return build_frame(code_, payload, interleave_, sync_intensity_);
}

}  // namespace qan
