#pragma once

// Sifting and finite-key secure rate for two-intensity decoy BB84.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>

#include "qan/channel.hpp"
#include "qan/protocol.hpp"
#include "qan/sync.hpp"

namespace qan {

struct TallyCell {
  std::uint64_t sent = 0;      // random pulses prepared in this basis and intensity
  std::uint64_t detected = 0;  // sifted detections (receiver basis matched)
  std::uint64_t errors = 0;
  friend bool operator==(const TallyCell&, const TallyCell&) = default;
};

struct SiftedTally {
  std::array<std::array<TallyCell, 2>, 2> cells{};  // [basis][intensity]

  TallyCell& at(Basis b, Intensity k) { return cells[static_cast<int>(b)][static_cast<int>(k)]; }
  const TallyCell& at(Basis b, Intensity k) const { return cells[static_cast<int>(b)][static_cast<int>(k)]; }

  std::uint64_t detected(Basis b) const;
  std::uint64_t errors(Basis b) const;
  std::uint64_t n_z() const { return detected(Basis::Z); }
  /// Random pulses the tally was drawn from.
  std::uint64_t pulses() const;
  double e_z() const;

  SiftedTally& operator+=(const SiftedTally& o);
  /// 0 <= errors <= detected <= sent in every cell.
  void validate() const;
  friend bool operator==(const SiftedTally&, const SiftedTally&) = default;
};

/// Pulse indices [first, end) of a transmitter.
struct PulseRange {
  std::uint64_t first = 0;
  std::uint64_t end = 0;
};

/// Pulses whose nominal receiver time lies in [t_begin, t_end), for pulse 0
/// at offset_ps and the given period.
PulseRange pulse_range(double offset_ps, double period_ps, std::int64_t t_begin_ps, std::int64_t t_end_ps);

/// Adds sent counts for the random pulses in the range.
void count_sent(SiftedTally& tally, const TransmitterRecord& tx, PulseRange range);

/// Sifts the events of one slot, pulse n being receiver period start_period + n.
/// Sync pulses are skipped; a pulse with disagreeing clicks is discarded.
SiftedTally sift(std::span<const DetectionEvent> events, const SlotAssignment& slots, int slot,
                 std::int64_t start_period, const TransmitterRecord& tx, PulseRange range);

/// As sift(), with the slot and offset taken from an identification report.
/// Throws IdentificationError when the slot was not identified.
SiftedTally sift(std::span<const DetectionEvent> events, const SlotAssignment& slots, int slot,
                 const SlotReport& report, const TransmitterRecord& tx, PulseRange range);

/// Oracle mode: pulse indices from the simulator's ground truth.
SiftedTally sift_ground_truth(std::span<const DetectionEvent> events, std::span<const TruthEntry> truth,
                              int transmitter_id, const TransmitterRecord& tx, PulseRange range);

double binary_entropy(double x);
double lambda_ec(double n_z, double e_z, double f_e);
double security_constant(double eps_sec, double eps_cor);

struct DecoyParams {
  double mu = 0.52;
  double nu = 0.13;
  double p_mu = 0.69;
  double p_nu = 0.31;
  double eps_sec = 1e-9;
  bool asymptotic = false;  // drop concentration terms
};

struct DecoyBounds {
  double s0_lower = 0.0;
  double s0_upper = 0.0;
  double s1_lower = 0.0;    // Z basis
  double x_s1_lower = 0.0;  // X basis
  double x_v1_upper = 0.0;  // X-basis single-photon errors
  double phase_error = 0.5;
  bool valid = false;       // false when the single-photon bounds cross zero
};

DecoyBounds decoy_bounds(const SiftedTally& tally, const DecoyParams& p);

struct KeyRateInputs {
  SiftedTally tally;
  DecoyParams decoy;
  double eps_cor = 1e-15;
  double f_e = 1.16;
  double frequency_hz = 50e6;
  /// Random pulses behind the tally; 0 takes tally.pulses().
  double pulses = 0.0;
  double duty = 0.5;  // q = M / (M + 1)

  void validate() const;
};

struct KeyRateResult {
  DecoyBounds bounds;
  double n_z = 0.0;
  double e_z = 0.0;
  double lambda_ec = 0.0;
  double secret_bits = 0.0;  // l, clamped at 0
  double rate_bps = 0.0;
};

KeyRateResult secure_key_rate(const KeyRateInputs& in);

inline double duty_ratio(std::size_t interleave) {
  return static_cast<double>(interleave) / static_cast<double>(interleave + 1);
}

/// CSV with columns basis,intensity,sent,detected,errors; '#' lines are comments.
void write_tally_csv(std::ostream& os, const SiftedTally& t);
SiftedTally read_tally_csv(std::istream& is);

}  // namespace qan
