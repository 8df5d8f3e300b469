#pragma once

// Receiver-side detection events for TDM transmitters sharing one receiver.
//
// Pulse n of transmitter i is emitted at
//   t = slot_i + (k0_i + n) * tau_i * (1 + err_i)      (receiver clock, ps)
// and, if detected, time-stamped with an added N(0, sigma^2) jitter.

#include <cstdint>
#include <optional>
#include <vector>

#include "qan/protocol.hpp"

namespace qan {

enum class Detector : std::uint8_t { H = 0, V = 1, D = 2, A = 3 };

inline Basis detector_basis(Detector d) { return static_cast<std::uint8_t>(d) < 2 ? Basis::Z : Basis::X; }
inline std::uint8_t detector_bit(Detector d) { return static_cast<std::uint8_t>(d) & 1U; }
inline Detector make_detector(Basis b, std::uint8_t bit) {
  return static_cast<Detector>((b == Basis::X ? 2U : 0U) | (bit & 1U));
}

struct DetectionEvent {
  std::int64_t t_ps = 0;
  Detector channel = Detector::H;
  friend bool operator==(const DetectionEvent&, const DetectionEvent&) = default;
};

/// source >= 0: transmitter id; kDark / kCrosstalk otherwise.
/// index: absolute pulse index of the source transmitter (0 for dark counts).
struct TruthEntry {
  static constexpr std::int32_t kDark = -1;
  static constexpr std::int32_t kCrosstalk = -2;
  std::int32_t source = kDark;
  std::uint64_t index = 0;
  friend bool operator==(const TruthEntry&, const TruthEntry&) = default;
};

struct EventRecord {
  std::int64_t period_ps = 0;  // nominal receiver period
  std::int64_t t_begin_ps = 0;
  std::int64_t t_end_ps = 0;
  std::vector<DetectionEvent> events;
  std::vector<TruthEntry> truth;  // same order as events; may be empty
};

struct TransmitterConfig {
  int id = 1;
  double period_ps = 20000.0;
  double clock_error_ppm = 0.0;
  double slot_ps = 0.0;             // position of the slot inside the period
  std::uint64_t start_period = 0;   // k0: receiver period of pulse 0
  std::optional<double> channel_loss_db;  // overrides the fiber model when set
  double fiber_km = 0.0;
  double alpha_db_per_km = 0.2;
  FrameSpec frame;
  double mu = 0.52;
  double nu = 0.13;
  SymbolProbabilities probs;
  double p_opt = 0.01;
  std::uint64_t code_seed = 1;
  std::uint64_t payload_seed = 1;
  Intensity sync_intensity = Intensity::Signal;

  double eta_channel() const;
  double effective_period_ps() const { return period_ps * (1.0 + clock_error_ppm * 1e-6); }
  SyncString code() const;
  TransmitterRecord record() const;
  void validate() const;
};

struct ReceiverConfig {
  double detector_efficiency = 1.0;
  double p_dc = 6e-8;  // dark-count probability per gate per channel
  double jitter_ps = 50.0;
  double gate_ps = 1000.0;
  double splitter_loss_db = 0.0;
  double eta_r = 0.388;
  double z_fraction = 0.9;
  double period_ps = 20000.0;
  int max_slots = 20;  // N_c

  double eta_splitter() const;
  void validate() const;
};

/// eta_ch * eta_spl * eta_r * detector efficiency.
double total_transmittance(const TransmitterConfig& tx, const ReceiverConfig& rx);

/// Events with timestamps in [t_begin, t_end). Deterministic in
/// (configs, window, seed); adjacent windows draw from unrelated streams.
EventRecord simulate_window(const std::vector<TransmitterConfig>& txs, const ReceiverConfig& rx,
                            std::int64_t t_begin_ps, std::int64_t t_end_ps, std::uint64_t seed);

EventRecord simulate_transmission(const std::vector<TransmitterConfig>& txs, const ReceiverConfig& rx,
                                  double duration_s, std::uint64_t seed);

struct CrosstalkSpec {
  double p_t = 0.0098;
  int active_users = 1;  // n
  int capacity = 20;     // N_c
};

/// Each in-slot signal event spawns, with probability p_T (n-1)/(N_c-1), an
/// extra event in the same slot at a nearby random period with a random
/// basis and bit. n = 1 returns the input unchanged.
EventRecord apply_crosstalk(const EventRecord& in, const CrosstalkSpec& spec, const ReceiverConfig& rx,
                            std::uint64_t seed);

struct CrosstalkJitter {
  double sigma_ps = 0.0;
  double bias_ps = 0.0;  // aggressor pulses sit at d*spacing + bias
};

/// Gaussian jitter and aggressor bias whose expected leak into the victim
/// gate reproduces the given relative increases for d = +1 and d = -1.
CrosstalkJitter calibrate_crosstalk_jitter(double increase_plus, double increase_minus, double spacing_ps,
                                           double gate_ps);

/// Expected relative increase for an aggressor at slot offset d.
double expected_crosstalk(int offset, const CrosstalkJitter& j, double spacing_ps, double gate_ps);

struct CrosstalkPoint {
  int offset = 0;
  double increase = 0.0;  // mean relative count increase
  double std_error = 0.0;  // one standard deviation of the mean over repeats
  int repeats = 0;
};

/// Victim and aggressor are identical transmitters; the aggressor is moved
/// to victim slot + d*spacing + bias. Counts are taken in the victim's gate.
/// The victim realization of each repeat is shared by the with/without runs.
/// Throws MeasurementError on zero baseline counts.
std::vector<CrosstalkPoint> measure_crosstalk(const TransmitterConfig& victim, const ReceiverConfig& rx,
                                              const std::vector<int>& offsets, double spacing_ps,
                                              double bias_ps, double duration_s, int repeats,
                                              std::uint64_t seed);

}  // namespace qan
