#pragma once

// Receiver-side recovery: clock period, TDM slots, and per-slot transmitter
// identity and pulse offset, from timestamps and detector channels only.

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "qan/channel.hpp"
#include "qan/protocol.hpp"

namespace qan {

class ClockNotFoundError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DemarcationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ClockEstimate {
  double coarse_period_ps = 0.0;  // tau_0^R
  double period_ps = 0.0;         // tau^R
  std::vector<double> slot_phase_ps;  // phases found during refinement, in [0, tau^R)
  double scale_sigma_ps = 0.0;    // consistency-corrected LTS scale
  double residual_rms_ps = 0.0;   // RMS of residuals within 3 scales
  double residual_variance_ps2 = 0.0;
  /// (1/D) sum_b mean_a |eps_{a+b} - eps_a|^2, halved so that it estimates
  /// the single-timestamp jitter variance.
  double interval_error_ms_ps2 = 0.0;
  std::size_t retained = 0;
  int iterations = 0;
};

class RefinementError : public std::runtime_error {
 public:
  RefinementError(const std::string& what, ClockEstimate last) : std::runtime_error(what), last_(std::move(last)) {}
  const ClockEstimate& last_estimate() const { return last_; }

 private:
  ClockEstimate last_;
};

/// Bins timestamps on a tau_hint/4 grid over n_f samples, transforms, and
/// returns the period of the strongest line within 5% of the nominal rate.
/// Throws ParameterError with fewer than 1000 events or a span below 1000
/// periods; ClockNotFoundError if that line is below 5x the median magnitude.
double estimate_clock_fft(std::span<const std::int64_t> timestamps, double period_hint_ps,
                          std::size_t n_f = 1000000);

struct LtsOptions {
  double trim = 0.2;
  double tolerance = 0.01;
  int max_iterations = 50;
  double window_ps = 500.0;     // residual window for pairing / slot membership
  std::size_t pair_depth = 10;  // D
  double prior_ppm = 100.0;     // uncertainty of the coarse period
};

/// Least-trimmed-squares period fit with one phase per slot and a shared period.
ClockEstimate refine_clock_lts(std::span<const std::int64_t> timestamps, double coarse_period_ps,
                               const LtsOptions& opt = {});

/// Interval errors eps_{a+b} - eps_a for b = 1..D over a residual series.
std::vector<std::vector<double>> interval_errors(std::span<const double> residuals, std::size_t depth);

struct SlotCluster {
  double center_ps = 0.0;  // residue at t_ref
  double drift = 0.0;      // residue change per ps of receiver time
  double t_ref_ps = 0.0;
  std::size_t count = 0;

  double center_at(double t_ps) const { return center_ps + drift * (t_ps - t_ref_ps); }
};

struct SlotAssignment {
  double period_ps = 0.0;
  std::vector<double> residue_ps;  // T_n = t mod tau^R
  std::vector<int> label;          // cluster index or -1 (discarded)
  std::vector<SlotCluster> clusters;
};

/// Circular histogram with bin = gate/4; peaks above median + max(5 sqrt(median), 3)
/// become clusters (tracked as lines over time); events within gate/2 of a
/// cluster line are assigned to it. Throws DemarcationError above max_slots.
SlotAssignment demarcate_slots(std::span<const DetectionEvent> events, const ClockEstimate& clock, double gate_ps,
                               int max_slots);

/// Labels events against known cluster lines; an event within gate/2 of a
/// line joins the nearest one.
SlotAssignment assign_slots(std::span<const DetectionEvent> events, double period_ps,
                            std::vector<SlotCluster> clusters, double gate_ps);

/// Receiver period index of an event assigned to a cluster.
std::int64_t period_index(std::int64_t t_ps, const SlotCluster& cluster, double period_ps);

struct ReceivedFrame {
  int slot = -1;
  std::int64_t origin = 0;  // receiver period of frame position 0
  std::size_t interleave = 1;
  std::vector<Ternary> values;  // +1 H, -1 V, 0 otherwise
  std::size_t conflicts = 0;    // positions zeroed by disagreeing clicks
  std::size_t clicks = 0;       // events mapped into the frame
};

ReceivedFrame extract_received_frame(std::span<const DetectionEvent> events, const SlotAssignment& slots, int slot,
                                     const FrameSpec& spec, std::int64_t origin);

/// Column sums of the N1 x L1 matrix of substream u, correlated against a
/// base block at every cyclic lag: C(k) = sum_c col[c] * base[(c + k) mod L1].
std::vector<long> matrix_correlation(std::span<const Ternary> substream, std::span<const Ternary> base);

struct IdentificationResult {
  int slot = -1;
  int transmitter_id = 0;
  std::size_t substream = 0;  // u
  std::size_t lag = 0;        // kappa
  /// Receiver period of the transmitter's pulse 0, taken in [0, (M+1) L1).
  std::int64_t start_period = 0;
  double offset_ps = 0.0;     // t_{i,0} on the receiver clock
  long peak = 0;
  std::size_t nonzero = 0;
  double delta = 0.0;         // peak / sqrt(nonzero)
  double runner_up_ratio = 0.0;  // best competing hypothesis / peak
};

class IdentificationError : public std::runtime_error {
 public:
  enum class Kind { BelowThreshold, Ambiguous };
  IdentificationError(Kind k, const std::string& what, IdentificationResult best)
      : std::runtime_error(what), kind_(k), best_(best) {}
  Kind kind() const { return kind_; }
  const IdentificationResult& best() const { return best_; }

 private:
  Kind kind_;
  IdentificationResult best_;
};

struct IdentifyOptions {
  double delta_threshold = 6.0;
  double ambiguity_ratio = 0.9;
};

IdentificationResult identify_transmitter(const ReceivedFrame& frame, std::span<const SyncString> codes,
                                          const IdentifyOptions& opt = {});

double snr_delta(double length, double eta);
std::uint64_t min_sync_length(double eta);

struct SlotReport {
  SlotCluster cluster;
  std::optional<IdentificationResult> id;
  std::string failure;  // empty on success
  bool ambiguous = false;
};

struct SyncReport {
  ClockEstimate clock;
  SlotAssignment slots;
  std::vector<SlotReport> reports;
};

struct SyncOptions {
  double period_hint_ps = 20000.0;
  std::size_t n_f = 1000000;
  double gate_ps = 1000.0;
  int max_slots = 20;
  FrameSpec frame;
  LtsOptions lts;
  IdentifyOptions identify;
};

/// Clock, slots and identities for one batch of events. Identification
/// failures are reported per slot; clock or demarcation failures throw.
SyncReport recover(const EventRecord& rec, std::span<const SyncString> codes, const SyncOptions& opt);

}  // namespace qan
